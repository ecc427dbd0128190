#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "pper/common.hpp"

namespace pper::he {

enum class BackendKind { exact, leveled };

std::string to_string(BackendKind k);
BackendKind backend_from_string(std::string_view s);

// Scheme parameters. The arithmetic-relevant knobs are multiplicative_depth,
// batch_size, bootstrapping and noise_sigma; the remaining fields are carried
// and validated for config fidelity but do not alter the simulated arithmetic.
struct HEParams {
  int multiplicative_depth = 2;
  int scale_factor_bits = 50;
  int batch_size = 128;
  int num_large_digits = 1;
  int first_mod_size = 60;
  std::string security_level_label = "HEStd_128_classic";
  bool bootstrapping_enabled = false;
  int refresh_depth = 2;       // levels available again after a bootstrap
  double noise_sigma = 1e-9;   // per-op noise std-dev, leveled backend only
  std::string interactive_bootstrap_compression = "COMPACT";  // passthrough only

  // Depth 2, bootstrapping off: the interactive pipeline profile.
  static HEParams interactive_profile();
  // Depth 12 with bootstrapping: the non-interactive pipeline profile.
  static HEParams non_interactive_profile();

  void validate() const;  // throws ConfigError

  // Modeled serialized size of one ciphertext under these parameters
  // (slots x (levels+1) x two polynomials x bytes-per-coefficient + header).
  std::size_t ciphertext_bytes() const;
};

// Key material for collective decryption: one public part, one secret share
// per owner. Decryption requires the shares of ALL owners.
struct KeyMaterial {
  std::uint64_t key_id = 0;
  std::set<PartyId> owners;
  std::uint64_t public_part = 0;
  std::map<PartyId, std::uint64_t> secret_shares;

  bool covers_quorum() const;
  KeyMaterial public_only() const;  // strips all secret shares
  KeyMaterial with_share_of(PartyId p) const;

  std::vector<std::uint8_t> serialize() const;
  static KeyMaterial deserialize(const std::vector<std::uint8_t>& blob);
};

// A plaintext slot vector. Always exactly batch_size values, zero-padded.
struct PlainVec {
  std::vector<double> values;

  static PlainVec zeros(int batch_size);
  static PlainVec constant(int batch_size, double v);
  // Pads (or rejects) an arbitrary vector to batch_size.
  static PlainVec of(std::vector<double> v, int batch_size);

  int size() const { return static_cast<int>(values.size()); }
  double operator[](int i) const { return values[static_cast<std::size_t>(i)]; }
};

// Live-ciphertext byte accounting, sharded to keep hot-path updates off a
// single cache line. The peak is a high-water mark of the sharded sum and is
// accurate at shard granularity.
struct MemoryTracker {
  struct alignas(64) Shard {
    std::atomic<std::int64_t> live{0};
  };
  static constexpr std::size_t kShards = 16;
  Shard shards[kShards];
  alignas(64) std::atomic<std::int64_t> peak{0};

  void add(std::size_t n);
  void sub(std::size_t n);
  std::int64_t live_sum() const;
};

// Logical ciphertext: an immutable value holding hidden slots plus depth and
// noise bookkeeping. Slot contents are only reachable through
// HEBackend::decrypt with a full owner quorum.
class CipherVec {
 public:
  CipherVec() = default;

  bool valid() const { return payload_ != nullptr; }
  int depth_consumed() const;
  double noise_estimate() const;
  BackendKind backend_kind() const;
  std::uint64_t key_id() const;
  std::uint64_t nonce() const;
  int slot_count() const;
  std::size_t byte_size() const;  // modeled serialized size

  std::vector<std::uint8_t> serialize() const;

 private:
  struct Payload {
    std::vector<double> slots;
    int depth = 0;
    double noise = 0.0;
    BackendKind kind = BackendKind::exact;
    std::uint64_t key_id = 0;
    std::uint64_t nonce = 0;
    std::size_t bytes = 0;
    // Raw on purpose: ciphertexts never outlive the backend that made them.
    MemoryTracker* tracker = nullptr;
    ~Payload();
  };
  std::shared_ptr<const Payload> payload_;
  friend class HEBackend;
};

// Abstract SIMD homomorphic-vector backend. All operations are pure functions
// of their inputs plus immutable key material; safe to call concurrently.
class HEBackend {
 public:
  HEBackend(HEParams params, std::uint64_t seed);
  virtual ~HEBackend() = default;

  virtual BackendKind kind() const = 0;
  const HEParams& params() const { return params_; }
  int batch_size() const { return params_.batch_size; }

  KeyMaterial keygen(const std::set<PartyId>& owners) const;

  // `stream` selects a deterministic randomness stream for the fresh
  // encryption; 0 draws from an internal counter.
  CipherVec encrypt(const PlainVec& p, const KeyMaterial& k, std::uint64_t stream = 0) const;
  PlainVec decrypt(const CipherVec& a, const KeyMaterial& quorum) const;

  CipherVec add(const CipherVec& a, const CipherVec& b) const;
  CipherVec sub(const CipherVec& a, const CipherVec& b) const;
  CipherVec mul(const CipherVec& a, const CipherVec& b, const char* site = "mul") const;

  CipherVec add_plain(const CipherVec& a, const PlainVec& p) const;
  CipherVec sub_plain(const CipherVec& a, const PlainVec& p) const;
  // plain - cipher, needed for the 1-x / 2-x forms.
  CipherVec sub_from_plain(const PlainVec& p, const CipherVec& a) const;
  CipherVec mul_plain(const CipherVec& a, const PlainVec& p, const char* site = "mul_plain") const;

  CipherVec add_scalar(const CipherVec& a, double v) const;
  CipherVec sub_from_scalar(double v, const CipherVec& a) const;
  CipherVec mul_scalar(const CipherVec& a, double v, const char* site = "mul_scalar") const;

  CipherVec rotate(const CipherVec& a, int k) const;
  CipherVec bootstrap(const CipherVec& a) const;

  std::size_t ciphertext_bytes() const { return params_.ciphertext_bytes(); }
  std::size_t key_material_bytes(const KeyMaterial& k) const;

  std::size_t live_cipher_bytes() const {
    return static_cast<std::size_t>(std::max<std::int64_t>(0, tracker_->live_sum()));
  }
  std::size_t peak_cipher_bytes() const {
    return static_cast<std::size_t>(std::max<std::int64_t>(0, tracker_->peak.load()));
  }
  void reset_peak() const;

  CipherVec deserialize_cipher(const std::vector<std::uint8_t>& blob) const;

 protected:
  enum class Op { encrypt, add, mul, rotate, bootstrap };
  // Std-dev of the fresh noise injected by one op; 0 on the exact backend.
  virtual double op_sigma(Op op) const = 0;

 private:
  CipherVec wrap(std::vector<double> slots, int depth, double noise, std::uint64_t key_id,
                 std::uint64_t nonce) const;
  void check_pair(const CipherVec& a, const CipherVec& b, const char* op) const;
  void check_depth(int new_depth, const char* site) const;
  void jitter(std::vector<double>& slots, double sigma, std::uint64_t stream) const;

  HEParams params_;
  std::uint64_t seed_;
  std::unique_ptr<MemoryTracker> tracker_;
  mutable std::atomic<std::uint64_t> fresh_counter_{1};
};

class ExactBackend final : public HEBackend {
 public:
  ExactBackend(HEParams params, std::uint64_t seed) : HEBackend(std::move(params), seed) {}
  BackendKind kind() const override { return BackendKind::exact; }

 protected:
  double op_sigma(Op) const override { return 0.0; }
};

// Leveled simulator: every homomorphic op injects fresh zero-mean Gaussian
// noise, scaled up on mul and bootstrap, and the estimate tracks it.
class LeveledBackend final : public HEBackend {
 public:
  LeveledBackend(HEParams params, std::uint64_t seed) : HEBackend(std::move(params), seed) {}
  BackendKind kind() const override { return BackendKind::leveled; }

 protected:
  double op_sigma(Op op) const override;
};

std::unique_ptr<HEBackend> make_backend(BackendKind kind, HEParams params, std::uint64_t seed);

}  // namespace pper::he
