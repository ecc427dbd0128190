#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pper/approx_ops.hpp"
#include "pper/blocking.hpp"
#include "pper/matcher.hpp"
#include "pper/private_matrix.hpp"

namespace pper::protocol {

enum class Variant { cleartext, naive_he, amppere_base, optimized };
enum class EeqMode { interactive, non_interactive };

std::string to_string(Variant v);
Variant variant_from_string(std::string_view s);
std::string to_string(EeqMode m);
EeqMode eeq_mode_from_string(std::string_view s);

struct PipelineConfig {
  Variant variant = Variant::optimized;
  EeqMode eeq_mode = EeqMode::interactive;
  he::BackendKind backend = he::BackendKind::exact;
  int chunk_size = 50;
  double threshold = 0.5;
  bool parallel = true;
  int workers = 4;
  bool oblivious_rows = true;
  double xi = 1e-9;
  std::uint32_t token_domain_interactive = 65536;
  std::uint32_t token_domain_ni = 1024;
  double extract_tol = 0.25;
  std::uint64_t seed = 42;

  std::uint32_t token_domain() const {
    return eeq_mode == EeqMode::interactive ? token_domain_interactive : token_domain_ni;
  }
  // Cross-field rules; throws ConfigError before any work happens.
  void validate(const he::HEParams& he_params, const approx::CompParams& comp_params) const;
};

// --------------------------------------------------------------------------
// Counted in-memory transport between parties. Every ciphertext or plaintext
// payload crossing a party boundary is counted; request/response exchanges
// count one round. A tap observes every message for privacy-boundary tests.
// --------------------------------------------------------------------------

enum class MsgKind { cipher, cipher_batch, plain_rows, plain_positions, control };

struct Message {
  PartyId from;
  PartyId to;
  MsgKind kind;
  std::size_t bytes;
  std::size_t payload_count;
  // Set for plain payloads only; points at the transported values.
  const std::vector<double>* plain = nullptr;
  std::string_view note;
};

class Transport {
 public:
  using Tap = std::function<void(const Message&)>;

  void set_tap(Tap tap);
  void send(const Message& m);
  void add_round() { rounds_.fetch_add(1); }

  std::uint64_t messages() const { return messages_.load(); }
  std::uint64_t bytes() const { return bytes_.load(); }
  std::uint64_t rounds() const { return rounds_.load(); }

 private:
  alignas(64) std::atomic<std::uint64_t> messages_{0};
  alignas(64) std::atomic<std::uint64_t> bytes_{0};
  alignas(64) std::atomic<std::uint64_t> rounds_{0};
  alignas(64) std::atomic<bool> has_tap_{false};
  Tap tap_;
  std::mutex tap_mutex_;
};

// --------------------------------------------------------------------------
// Owner side (P1 + P2). The two data owners cooperate to serve collective
// decryption; which endpoint answers alternates round-robin and is recorded.
// P3 never holds a secret share.
// --------------------------------------------------------------------------

class OwnerCollective {
 public:
  OwnerCollective(const he::HEBackend& be, Transport& tr, std::uint64_t seed);

  const he::KeyMaterial& full_key() const { return full_key_; }
  const he::KeyMaterial& public_key() const { return public_key_; }

  // Pre-generated pool of encrypted random masks for the interactive inverse.
  void pregen_pool(std::int64_t count);
  he::CipherVec pool_cipher(std::uint64_t task_seed, std::uint64_t idx);

  // Decrypts the masked vector, inverts slot-wise, returns a fresh
  // encryption of the reciprocal. Counts 2 messages and 1 round.
  he::CipherVec serve_inverse(std::uint64_t task_seed, std::uint64_t idx,
                              const he::CipherVec& masked);

  // Decrypt + fresh re-encrypt of an additively masked value (depth refresh).
  he::CipherVec serve_refresh(std::uint64_t task_seed, std::uint64_t idx,
                              const he::CipherVec& masked);

  // Collective decryption of a batch, results returned to the requester.
  std::vector<he::PlainVec> serve_decrypt_to_p3(const std::vector<he::CipherVec>& batch,
                                                std::string_view note);

  // Owner-side scoring of surviving candidates: decrypts overlap and
  // cardinality ciphers, maps in-chunk ids to local ids. Results never
  // travel through P3.
  void score_candidates(const std::vector<std::int64_t>& ids_a,
                        const std::vector<he::CipherVec>& cards_a,
                        const std::vector<std::int64_t>& ids_b,
                        const std::vector<he::CipherVec>& cards_b,
                        const std::vector<std::pair<int, int>>& candidates,
                        const std::vector<std::optional<he::CipherVec>>& overlaps,
                        EeqMode mode, std::vector<matcher::MatchResult>& out);

  std::uint64_t pool_pregenerated() const { return pool_pregenerated_.load(); }
  std::uint64_t pool_refills() const { return pool_refills_.load(); }
  std::uint64_t calls_p1() const { return calls_p1_.load(); }
  std::uint64_t calls_p2() const { return calls_p2_.load(); }
  std::uint64_t overlap_clamped() const { return overlap_clamped_.load(); }

 private:
  PartyId next_endpoint();
  void note_draw();

  const he::HEBackend& be_;
  Transport& tr_;
  he::KeyMaterial full_key_;
  he::KeyMaterial public_key_;
  SeedStream seed_;
  alignas(64) std::atomic<std::uint64_t> endpoint_toggle_{0};
  alignas(64) std::atomic<std::uint64_t> calls_p1_{0};
  alignas(64) std::atomic<std::uint64_t> calls_p2_{0};
  alignas(64) std::atomic<std::int64_t> pool_capacity_{0};
  alignas(64) std::atomic<std::uint64_t> pool_drawn_{0};
  std::atomic<std::uint64_t> pool_pregenerated_{0};
  std::atomic<std::uint64_t> pool_refills_{0};
  std::atomic<std::uint64_t> overlap_clamped_{0};
  std::atomic<std::uint64_t> fresh_counter_{1};
};

// --------------------------------------------------------------------------
// Evaluator-side channel for one task (chunk pair or pipeline phase). Holds
// the deterministic randomness stream for masks and pool draws.
// --------------------------------------------------------------------------

class P3Session {
 public:
  P3Session(const he::HEBackend& be, OwnerCollective& owners, std::uint64_t task_seed, double xi);

  // Masked-inverse subprotocol: returns an encryption of 1/x. Slots of x must
  // be nonzero (call sites guarantee this with the xi offset).
  he::CipherVec interactive_inverse(const he::CipherVec& x);

  // (a-b) * (-1/(a-b+xi)) + 1: ~1 on equal slots (exactly 1 on the exact
  // backend), ~0 on unequal integer slots.
  he::CipherVec eeq_interactive(const he::CipherVec& a, const he::CipherVec& b);

  // Owner-assisted additive-mask refresh: returns the same value at depth 0.
  he::CipherVec refresh(const he::CipherVec& v);

  // Refresh only when fewer than `muls` levels remain.
  he::CipherVec ensure(const he::CipherVec& v, int muls);

  pmatrix::EvalOps ops();

 private:
  const he::HEBackend& be_;
  OwnerCollective& owners_;
  std::uint64_t task_seed_;
  double xi_;
  std::uint64_t cursor_ = 0;
  SeedStream stream_;
};

// Non-interactive ops: polynomial equality + bootstrap-based level refresh.
pmatrix::EvalOps non_interactive_ops(const he::HEBackend& be, const approx::CompParams& p);

// --------------------------------------------------------------------------
// Pipeline runner.
// --------------------------------------------------------------------------

struct RunStats {
  std::string variant;
  std::string eeq_mode;
  std::string backend;
  int chunk_size = 0;
  bool parallel = false;
  int workers = 1;
  std::uint64_t seed = 0;
  double total_seconds = 0;
  double per_chunk_pair_seconds = 0;
  double normalized_per_pair_seconds = 0;
  std::size_t peak_memory_bytes = 0;
  std::size_t chunk_storage_bytes_avg = 0;
  std::size_t key_bytes = 0;
  std::uint64_t messages = 0;
  std::uint64_t rounds = 0;
  std::uint64_t bytes = 0;
  std::uint64_t chunk_pairs = 0;
  std::uint64_t candidates = 0;
  std::uint64_t matches = 0;
  std::uint64_t vr_invocations = 0;
  std::uint64_t matrix_updates = 0;
  std::uint64_t pool_pregenerated = 0;
  std::uint64_t pool_refills = 0;
  std::uint64_t decrypt_calls_p1 = 0;
  std::uint64_t decrypt_calls_p2 = 0;
  std::uint64_t overlap_clamped = 0;
  std::uint64_t t_prime = 0;
  std::uint64_t t_total = 0;
  nlohmann::json config_echo;

  nlohmann::json to_json() const;
};

struct PipelineResult {
  std::vector<matcher::MatchResult> matches;
  RunStats stats;
};

// Executes the configured variant end-to-end over preprocessed datasets.
// A non-null tap observes every transported message.
PipelineResult run_pipeline(const PipelineConfig& cfg, const he::HEParams& he_params,
                            const approx::CompParams& comp_params,
                            const std::vector<dataio::Record>& d1,
                            const std::vector<dataio::Record>& d2,
                            Transport::Tap tap = nullptr);

}  // namespace pper::protocol
