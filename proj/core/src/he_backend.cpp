#include "pper/he_backend.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <thread>

namespace pper {

std::string to_string(PartyId p) {
  switch (p) {
    case PartyId::P1: return "P1";
    case PartyId::P2: return "P2";
    case PartyId::P3: return "P3";
  }
  return "?";
}

PartyId party_from_string(std::string_view s) {
  if (s == "P1") return PartyId::P1;
  if (s == "P2") return PartyId::P2;
  if (s == "P3") return PartyId::P3;
  throw ConfigError("unknown party id: " + std::string(s));
}

}  // namespace pper

namespace pper::he {

namespace {

constexpr char kKeyMagic[4] = {'P', 'P', 'H', 'E'};
constexpr char kCipherMagic[4] = {'P', 'P', 'C', 'T'};
constexpr std::uint8_t kBlobVersion = 1;
constexpr std::size_t kBlobHeader = 64;

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

std::uint64_t share_handle(std::uint64_t key_id, PartyId p) {
  return hash_mix(key_id, 0x5ec2e7ULL + static_cast<std::uint64_t>(p));
}

template <typename T>
void put(std::vector<std::uint8_t>& out, const T& v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T get(const std::vector<std::uint8_t>& in, std::size_t& off) {
  if (off + sizeof(T) > in.size()) throw ShapeError("blob truncated");
  T v;
  std::memcpy(&v, in.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

}  // namespace

std::string to_string(BackendKind k) {
  return k == BackendKind::exact ? "exact" : "leveled";
}

BackendKind backend_from_string(std::string_view s) {
  if (s == "exact") return BackendKind::exact;
  if (s == "leveled") return BackendKind::leveled;
  throw ConfigError("unknown backend: " + std::string(s));
}

HEParams HEParams::interactive_profile() { return HEParams{}; }

HEParams HEParams::non_interactive_profile() {
  HEParams p;
  p.multiplicative_depth = 12;
  p.bootstrapping_enabled = true;
  p.refresh_depth = 10;
  return p;
}

void HEParams::validate() const {
  if (!is_power_of_two(batch_size))
    throw ConfigError("batch_size must be a power of two, got " + std::to_string(batch_size));
  if (multiplicative_depth < 1) throw ConfigError("multiplicative_depth must be positive");
  if (scale_factor_bits < 1) throw ConfigError("scale_factor_bits must be positive");
  if (num_large_digits < 1) throw ConfigError("num_large_digits must be positive");
  if (first_mod_size < 1) throw ConfigError("first_mod_size must be positive");
  if (refresh_depth < 1 || refresh_depth > multiplicative_depth)
    throw ConfigError("refresh_depth must be in [1, multiplicative_depth]");
  if (noise_sigma < 0) throw ConfigError("noise_sigma must be non-negative");
}

std::size_t HEParams::ciphertext_bytes() const {
  const std::size_t coeff = (static_cast<std::size_t>(scale_factor_bits) + 7) / 8;
  return kBlobHeader +
         2 * static_cast<std::size_t>(batch_size) *
             (static_cast<std::size_t>(multiplicative_depth) + 1) * coeff;
}

bool KeyMaterial::covers_quorum() const {
  for (PartyId p : owners) {
    auto it = secret_shares.find(p);
    if (it == secret_shares.end() || it->second != share_handle(key_id, p)) return false;
  }
  return true;
}

KeyMaterial KeyMaterial::public_only() const {
  KeyMaterial k = *this;
  k.secret_shares.clear();
  return k;
}

KeyMaterial KeyMaterial::with_share_of(PartyId p) const {
  KeyMaterial k = public_only();
  auto it = secret_shares.find(p);
  if (it != secret_shares.end()) k.secret_shares.insert(*it);
  return k;
}

std::vector<std::uint8_t> KeyMaterial::serialize() const {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kKeyMagic, kKeyMagic + 4);
  out.push_back(kBlobVersion);
  put(out, key_id);
  put(out, public_part);
  put(out, static_cast<std::uint32_t>(owners.size()));
  for (PartyId p : owners) put(out, static_cast<std::uint8_t>(p));
  put(out, static_cast<std::uint32_t>(secret_shares.size()));
  for (const auto& [p, h] : secret_shares) {
    put(out, static_cast<std::uint8_t>(p));
    put(out, h);
  }
  return out;
}

KeyMaterial KeyMaterial::deserialize(const std::vector<std::uint8_t>& blob) {
  if (blob.size() < 5 || std::memcmp(blob.data(), kKeyMagic, 4) != 0)
    throw ShapeError("bad key blob magic");
  if (blob[4] != kBlobVersion) throw ShapeError("unsupported key blob version");
  std::size_t off = 5;
  KeyMaterial k;
  k.key_id = get<std::uint64_t>(blob, off);
  k.public_part = get<std::uint64_t>(blob, off);
  auto n_owners = get<std::uint32_t>(blob, off);
  for (std::uint32_t i = 0; i < n_owners; ++i)
    k.owners.insert(static_cast<PartyId>(get<std::uint8_t>(blob, off)));
  auto n_shares = get<std::uint32_t>(blob, off);
  for (std::uint32_t i = 0; i < n_shares; ++i) {
    auto p = static_cast<PartyId>(get<std::uint8_t>(blob, off));
    k.secret_shares[p] = get<std::uint64_t>(blob, off);
  }
  return k;
}

PlainVec PlainVec::zeros(int batch_size) {
  return PlainVec{std::vector<double>(static_cast<std::size_t>(batch_size), 0.0)};
}

PlainVec PlainVec::constant(int batch_size, double v) {
  return PlainVec{std::vector<double>(static_cast<std::size_t>(batch_size), v)};
}

PlainVec PlainVec::of(std::vector<double> v, int batch_size) {
  if (static_cast<int>(v.size()) > batch_size)
    throw ShapeError("plaintext longer than batch size: " + std::to_string(v.size()) + " > " +
                     std::to_string(batch_size));
  v.resize(static_cast<std::size_t>(batch_size), 0.0);
  return PlainVec{std::move(v)};
}

namespace {

std::size_t shard_index() {
  return std::hash<std::thread::id>{}(std::this_thread::get_id()) % MemoryTracker::kShards;
}

}  // namespace

std::int64_t MemoryTracker::live_sum() const {
  std::int64_t sum = 0;
  for (const auto& s : shards) sum += s.live.load(std::memory_order_relaxed);
  return sum;
}

void MemoryTracker::add(std::size_t n) {
  shards[shard_index()].live.fetch_add(static_cast<std::int64_t>(n),
                                       std::memory_order_relaxed);
  // Probing the global sum on every allocation would reintroduce the shared
  // line; every 8th allocation per thread keeps the high-water mark accurate
  // to a few ciphertexts.
  thread_local unsigned probe = 0;
  if ((++probe & 7u) != 0) return;
  const std::int64_t now = live_sum();
  std::int64_t prev = peak.load(std::memory_order_relaxed);
  while (prev < now && !peak.compare_exchange_weak(prev, now, std::memory_order_relaxed)) {
  }
}

void MemoryTracker::sub(std::size_t n) {
  shards[shard_index()].live.fetch_sub(static_cast<std::int64_t>(n),
                                       std::memory_order_relaxed);
}

CipherVec::Payload::~Payload() {
  if (tracker) tracker->sub(bytes);
}

int CipherVec::depth_consumed() const { return payload_->depth; }
double CipherVec::noise_estimate() const { return payload_->noise; }
BackendKind CipherVec::backend_kind() const { return payload_->kind; }
std::uint64_t CipherVec::key_id() const { return payload_->key_id; }
std::uint64_t CipherVec::nonce() const { return payload_->nonce; }
int CipherVec::slot_count() const { return static_cast<int>(payload_->slots.size()); }
std::size_t CipherVec::byte_size() const { return payload_->bytes; }

std::vector<std::uint8_t> CipherVec::serialize() const {
  const auto& p = *payload_;
  std::vector<std::uint8_t> out;
  out.reserve(p.bytes);
  out.insert(out.end(), kCipherMagic, kCipherMagic + 4);
  out.push_back(kBlobVersion);
  put(out, p.key_id);
  put(out, p.nonce);
  put(out, static_cast<std::int32_t>(p.depth));
  put(out, p.noise);
  put(out, static_cast<std::uint8_t>(p.kind));
  put(out, static_cast<std::uint32_t>(p.slots.size()));
  for (double v : p.slots) put(out, v);
  // Pad to the modeled ciphertext size so transported byte counts reflect the
  // parameter set rather than the simulator's compact representation.
  if (out.size() < p.bytes) out.resize(p.bytes, 0);
  return out;
}

HEBackend::HEBackend(HEParams params, std::uint64_t seed)
    : params_(std::move(params)), seed_(seed), tracker_(std::make_unique<MemoryTracker>()) {
  params_.validate();
}

void HEBackend::reset_peak() const {
  tracker_->peak.store(tracker_->live_sum());
}

CipherVec HEBackend::wrap(std::vector<double> slots, int depth, double noise,
                          std::uint64_t key_id, std::uint64_t nonce) const {
  auto payload = std::make_shared<CipherVec::Payload>();
  payload->slots = std::move(slots);
  payload->depth = depth;
  payload->noise = noise;
  payload->kind = kind();
  payload->key_id = key_id;
  payload->nonce = nonce;
  payload->bytes = params_.ciphertext_bytes();
  payload->tracker = tracker_.get();
  tracker_->add(payload->bytes);
  CipherVec c;
  c.payload_ = std::move(payload);
  return c;
}

void HEBackend::check_pair(const CipherVec& a, const CipherVec& b, const char* op) const {
  if (!a.valid() || !b.valid()) throw ShapeError(std::string(op) + ": empty ciphertext");
  if (a.key_id() != b.key_id())
    throw ProtocolError(std::string(op) + ": ciphertexts under different keys");
  if (a.backend_kind() != kind() || b.backend_kind() != kind())
    throw ProtocolError(std::string(op) + ": ciphertext from a different backend");
}

void HEBackend::check_depth(int new_depth, const char* site) const {
  if (new_depth > params_.multiplicative_depth)
    throw DepthBudgetError(site ? site : "mul", new_depth, params_.multiplicative_depth);
}

void HEBackend::jitter(std::vector<double>& slots, double sigma, std::uint64_t stream) const {
  if (sigma <= 0.0) return;
  std::mt19937_64 rng(hash_mix(seed_, stream));
  std::normal_distribution<double> dist(0.0, sigma);
  for (double& v : slots) v += dist(rng);
}

KeyMaterial HEBackend::keygen(const std::set<PartyId>& owners) const {
  params_.validate();
  if (owners.empty()) throw ConfigError("keygen: owner set must be non-empty");
  KeyMaterial k;
  std::uint64_t acc = hash_mix(seed_, fresh_counter_.fetch_add(1));
  for (PartyId p : owners) acc = hash_mix(acc, static_cast<std::uint64_t>(p));
  k.key_id = acc;
  k.public_part = hash_mix(acc, 0x9ab71cULL);
  k.owners = owners;
  for (PartyId p : owners) k.secret_shares[p] = share_handle(k.key_id, p);
  return k;
}

CipherVec HEBackend::encrypt(const PlainVec& p, const KeyMaterial& k, std::uint64_t stream) const {
  if (p.size() != params_.batch_size)
    throw ShapeError("encrypt: plaintext length " + std::to_string(p.size()) +
                     " != batch size " + std::to_string(params_.batch_size));
  if (k.public_part != hash_mix(k.key_id, 0x9ab71cULL))
    throw ProtocolError("encrypt: invalid public key part");
  const std::uint64_t nonce =
      stream != 0 ? hash_mix(k.key_id, stream)
                  : hash_mix(k.key_id, hash_mix(seed_, fresh_counter_.fetch_add(1)));
  std::vector<double> slots = p.values;
  jitter(slots, op_sigma(Op::encrypt), nonce);
  return wrap(std::move(slots), 0, op_sigma(Op::encrypt), k.key_id, nonce);
}

PlainVec HEBackend::decrypt(const CipherVec& a, const KeyMaterial& quorum) const {
  if (!a.valid()) throw ShapeError("decrypt: empty ciphertext");
  if (quorum.key_id != a.key_id()) throw ProtocolError("decrypt: key mismatch");
  if (!quorum.covers_quorum())
    throw AuthorizationError("decrypt requires the secret shares of all owner parties");
  return PlainVec{a.payload_->slots};
}

CipherVec HEBackend::add(const CipherVec& a, const CipherVec& b) const {
  check_pair(a, b, "add");
  std::vector<double> slots = a.payload_->slots;
  for (std::size_t i = 0; i < slots.size(); ++i) slots[i] += b.payload_->slots[i];
  const std::uint64_t nonce = hash_mix(hash_mix(a.nonce(), b.nonce()), fnv1a64("add"));
  const double sigma = op_sigma(Op::add);
  jitter(slots, sigma, nonce);
  const double noise = std::sqrt(a.noise_estimate() * a.noise_estimate() +
                                 b.noise_estimate() * b.noise_estimate() + sigma * sigma);
  return wrap(std::move(slots), std::max(a.depth_consumed(), b.depth_consumed()), noise,
              a.key_id(), nonce);
}

CipherVec HEBackend::sub(const CipherVec& a, const CipherVec& b) const {
  check_pair(a, b, "sub");
  std::vector<double> slots = a.payload_->slots;
  for (std::size_t i = 0; i < slots.size(); ++i) slots[i] -= b.payload_->slots[i];
  const std::uint64_t nonce = hash_mix(hash_mix(a.nonce(), b.nonce()), fnv1a64("sub"));
  const double sigma = op_sigma(Op::add);
  jitter(slots, sigma, nonce);
  const double noise = std::sqrt(a.noise_estimate() * a.noise_estimate() +
                                 b.noise_estimate() * b.noise_estimate() + sigma * sigma);
  return wrap(std::move(slots), std::max(a.depth_consumed(), b.depth_consumed()), noise,
              a.key_id(), nonce);
}

CipherVec HEBackend::mul(const CipherVec& a, const CipherVec& b, const char* site) const {
  check_pair(a, b, "mul");
  const int new_depth = std::max(a.depth_consumed(), b.depth_consumed()) + 1;
  check_depth(new_depth, site);
  std::vector<double> slots = a.payload_->slots;
  double mag_a = 0.0, mag_b = 0.0;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    mag_a = std::max(mag_a, std::abs(a.payload_->slots[i]));
    mag_b = std::max(mag_b, std::abs(b.payload_->slots[i]));
    slots[i] *= b.payload_->slots[i];
  }
  const std::uint64_t nonce = hash_mix(hash_mix(a.nonce(), b.nonce()), fnv1a64("mul"));
  const double sigma = op_sigma(Op::mul);
  jitter(slots, sigma, nonce);
  const double na = a.noise_estimate(), nb = b.noise_estimate();
  const double noise = std::sqrt((mag_a * nb) * (mag_a * nb) + (mag_b * na) * (mag_b * na) +
                                 (na * nb) * (na * nb) + sigma * sigma);
  return wrap(std::move(slots), new_depth, noise, a.key_id(), nonce);
}

CipherVec HEBackend::add_plain(const CipherVec& a, const PlainVec& p) const {
  if (!a.valid()) throw ShapeError("add_plain: empty ciphertext");
  if (p.size() != params_.batch_size) throw ShapeError("add_plain: plaintext length mismatch");
  std::vector<double> slots = a.payload_->slots;
  for (std::size_t i = 0; i < slots.size(); ++i) slots[i] += p.values[i];
  const std::uint64_t nonce = hash_mix(a.nonce(), fnv1a64("add_plain"));
  return wrap(std::move(slots), a.depth_consumed(), a.noise_estimate(), a.key_id(), nonce);
}

CipherVec HEBackend::sub_plain(const CipherVec& a, const PlainVec& p) const {
  if (!a.valid()) throw ShapeError("sub_plain: empty ciphertext");
  if (p.size() != params_.batch_size) throw ShapeError("sub_plain: plaintext length mismatch");
  std::vector<double> slots = a.payload_->slots;
  for (std::size_t i = 0; i < slots.size(); ++i) slots[i] -= p.values[i];
  const std::uint64_t nonce = hash_mix(a.nonce(), fnv1a64("sub_plain"));
  return wrap(std::move(slots), a.depth_consumed(), a.noise_estimate(), a.key_id(), nonce);
}

CipherVec HEBackend::sub_from_plain(const PlainVec& p, const CipherVec& a) const {
  if (!a.valid()) throw ShapeError("sub_from_plain: empty ciphertext");
  if (p.size() != params_.batch_size)
    throw ShapeError("sub_from_plain: plaintext length mismatch");
  std::vector<double> slots = a.payload_->slots;
  for (std::size_t i = 0; i < slots.size(); ++i) slots[i] = p.values[i] - slots[i];
  const std::uint64_t nonce = hash_mix(a.nonce(), fnv1a64("sub_from_plain"));
  return wrap(std::move(slots), a.depth_consumed(), a.noise_estimate(), a.key_id(), nonce);
}

CipherVec HEBackend::mul_plain(const CipherVec& a, const PlainVec& p, const char* site) const {
  if (!a.valid()) throw ShapeError("mul_plain: empty ciphertext");
  if (p.size() != params_.batch_size) throw ShapeError("mul_plain: plaintext length mismatch");
  const int new_depth = a.depth_consumed() + 1;
  check_depth(new_depth, site);
  std::vector<double> slots = a.payload_->slots;
  double mag_p = 0.0;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    mag_p = std::max(mag_p, std::abs(p.values[i]));
    slots[i] *= p.values[i];
  }
  const std::uint64_t nonce = hash_mix(a.nonce(), fnv1a64("mul_plain"));
  const double sigma = op_sigma(Op::mul);
  jitter(slots, sigma, nonce);
  const double noise =
      std::sqrt((mag_p * a.noise_estimate()) * (mag_p * a.noise_estimate()) + sigma * sigma);
  return wrap(std::move(slots), new_depth, noise, a.key_id(), nonce);
}

CipherVec HEBackend::add_scalar(const CipherVec& a, double v) const {
  return add_plain(a, PlainVec::constant(params_.batch_size, v));
}

CipherVec HEBackend::sub_from_scalar(double v, const CipherVec& a) const {
  return sub_from_plain(PlainVec::constant(params_.batch_size, v), a);
}

CipherVec HEBackend::mul_scalar(const CipherVec& a, double v, const char* site) const {
  return mul_plain(a, PlainVec::constant(params_.batch_size, v), site);
}

CipherVec HEBackend::rotate(const CipherVec& a, int k) const {
  if (!a.valid()) throw ShapeError("rotate: empty ciphertext");
  const int n = params_.batch_size;
  int shift = k % n;
  if (shift < 0) shift += n;
  const auto& src = a.payload_->slots;
  std::vector<double> slots(src.size());
  for (int i = 0; i < n; ++i) slots[static_cast<std::size_t>(i)] = src[(i + shift) % n];
  const std::uint64_t nonce = hash_mix(a.nonce(), fnv1a64("rotate") + static_cast<std::uint64_t>(shift));
  const double sigma = op_sigma(Op::rotate);
  jitter(slots, sigma, nonce);
  const double noise =
      std::sqrt(a.noise_estimate() * a.noise_estimate() + sigma * sigma);
  return wrap(std::move(slots), a.depth_consumed(), noise, a.key_id(), nonce);
}

CipherVec HEBackend::bootstrap(const CipherVec& a) const {
  if (!a.valid()) throw ShapeError("bootstrap: empty ciphertext");
  if (!params_.bootstrapping_enabled)
    throw ConfigError("bootstrap called but bootstrapping is disabled");
  std::vector<double> slots = a.payload_->slots;
  const std::uint64_t nonce = hash_mix(a.nonce(), fnv1a64("bootstrap"));
  const double sigma = op_sigma(Op::bootstrap);
  jitter(slots, sigma, nonce);
  const double noise =
      std::sqrt(a.noise_estimate() * a.noise_estimate() + sigma * sigma);
  const int depth = params_.multiplicative_depth - params_.refresh_depth;
  return wrap(std::move(slots), depth, noise, a.key_id(), nonce);
}

std::size_t HEBackend::key_material_bytes(const KeyMaterial& k) const {
  // Public key + relinearization digits + rotation keys for all power-of-two
  // shifts (both directions) + one share per owner, tripled when the
  // bootstrapping keys are present.
  const std::size_t coeff = (static_cast<std::size_t>(params_.scale_factor_bits) + 7) / 8;
  const std::size_t pair_bytes = 2 * static_cast<std::size_t>(params_.batch_size) *
                                 (static_cast<std::size_t>(params_.multiplicative_depth) + 1) *
                                 coeff;
  int log_b = 0;
  for (int v = params_.batch_size; v > 1; v >>= 1) ++log_b;
  const std::size_t units = 1 + static_cast<std::size_t>(params_.num_large_digits) +
                            2 * static_cast<std::size_t>(log_b) + k.owners.size();
  return pair_bytes * units * (params_.bootstrapping_enabled ? 3 : 1);
}

CipherVec HEBackend::deserialize_cipher(const std::vector<std::uint8_t>& blob) const {
  if (blob.size() < 5 || std::memcmp(blob.data(), kCipherMagic, 4) != 0)
    throw ShapeError("bad ciphertext blob magic");
  if (blob[4] != kBlobVersion) throw ShapeError("unsupported ciphertext blob version");
  std::size_t off = 5;
  const auto key_id = get<std::uint64_t>(blob, off);
  const auto nonce = get<std::uint64_t>(blob, off);
  const auto depth = get<std::int32_t>(blob, off);
  const auto noise = get<double>(blob, off);
  const auto kind_tag = get<std::uint8_t>(blob, off);
  if (static_cast<BackendKind>(kind_tag) != kind())
    throw ProtocolError("ciphertext blob from a different backend");
  const auto n = get<std::uint32_t>(blob, off);
  std::vector<double> slots(n);
  for (auto& v : slots) v = get<double>(blob, off);
  return wrap(std::move(slots), depth, noise, key_id, nonce);
}

double LeveledBackend::op_sigma(Op op) const {
  const double s = params().noise_sigma;
  switch (op) {
    case Op::encrypt: return s;
    case Op::add: return s;
    case Op::rotate: return s;
    case Op::mul: return 2.0 * s;
    case Op::bootstrap: return 10.0 * s;
  }
  return s;
}

std::unique_ptr<HEBackend> make_backend(BackendKind kind, HEParams params, std::uint64_t seed) {
  if (kind == BackendKind::exact)
    return std::make_unique<ExactBackend>(std::move(params), seed);
  return std::make_unique<LeveledBackend>(std::move(params), seed);
}

}  // namespace pper::he
