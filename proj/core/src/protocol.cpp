#include "pper/protocol.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <thread>
#include <unordered_map>

namespace pper::protocol {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Runs fn(0..n-1) on up to `workers` threads; the first exception wins and is
// rethrown on the caller thread.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
  pool.reserve(count);
  for (std::size_t i = 0; i < count; ++i) pool.emplace_back(body);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::size_t plain_bytes(std::size_t values) { return 32 + values * sizeof(double); }

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::cleartext: return "cleartext";
    case Variant::naive_he: return "naive_he";
    case Variant::amppere_base: return "amppere_base";
    case Variant::optimized: return "optimized";
  }
  return "?";
}

Variant variant_from_string(std::string_view s) {
  if (s == "cleartext") return Variant::cleartext;
  if (s == "naive_he") return Variant::naive_he;
  if (s == "amppere_base") return Variant::amppere_base;
  if (s == "optimized") return Variant::optimized;
  throw ConfigError("unknown variant: " + std::string(s));
}

std::string to_string(EeqMode m) {
  return m == EeqMode::interactive ? "interactive" : "non_interactive";
}

EeqMode eeq_mode_from_string(std::string_view s) {
  if (s == "interactive") return EeqMode::interactive;
  if (s == "non_interactive") return EeqMode::non_interactive;
  throw ConfigError("unknown eeq mode: " + std::string(s));
}

void PipelineConfig::validate(const he::HEParams& he_params,
                              const approx::CompParams& comp_params) const {
  he_params.validate();
  comp_params.validate();
  if (chunk_size < 1) throw ConfigError("chunk_size must be positive");
  if (chunk_size > he_params.batch_size)
    throw ConfigError("chunk_size " + std::to_string(chunk_size) + " exceeds batch size " +
                      std::to_string(he_params.batch_size));
  if (threshold < 0.0 || threshold > 1.0) throw ConfigError("threshold must lie in [0, 1]");
  if (workers < 1) throw ConfigError("workers must be positive");
  if (xi <= 0.0) throw ConfigError("xi must be positive");
  if (extract_tol <= 0.0) throw ConfigError("extract_tol must be positive");
  if (token_domain_interactive < 2 || token_domain_ni < 2)
    throw ConfigError("token domains must be at least 2");
  if (backend == he::BackendKind::leveled && xi < 1000.0 * he_params.noise_sigma)
    throw ConfigError("leveled backend needs xi well above the noise floor: xi >= 1000 * "
                      "noise_sigma");
  if (eeq_mode == EeqMode::non_interactive) {
    if (!he_params.bootstrapping_enabled)
      throw ConfigError("non_interactive eeq mode requires bootstrapping_enabled");
    if (he_params.multiplicative_depth < 12)
      throw ConfigError("non_interactive eeq mode requires multiplicative depth >= 12");
  }
}

void Transport::set_tap(Tap tap) {
  std::lock_guard lock(tap_mutex_);
  tap_ = std::move(tap);
  has_tap_.store(tap_ != nullptr);
}

void Transport::send(const Message& m) {
  messages_.fetch_add(1);
  bytes_.fetch_add(m.bytes);
  if (!has_tap_.load(std::memory_order_relaxed)) return;
  std::lock_guard lock(tap_mutex_);
  if (tap_) tap_(m);
}

OwnerCollective::OwnerCollective(const he::HEBackend& be, Transport& tr, std::uint64_t seed)
    : be_(be), tr_(tr), seed_(SeedStream(seed).sub("owners")) {
  full_key_ = be_.keygen({PartyId::P1, PartyId::P2});
  public_key_ = full_key_.public_only();
  // Public key handed to the evaluator once, up front.
  tr_.send({PartyId::P1, PartyId::P3, MsgKind::control, full_key_.public_only().serialize().size(),
            1, nullptr, "public key"});
  tr_.add_round();
}

PartyId OwnerCollective::next_endpoint() {
  const bool p1 = (endpoint_toggle_.fetch_add(1) % 2) == 0;
  if (p1)
    calls_p1_.fetch_add(1);
  else
    calls_p2_.fetch_add(1);
  return p1 ? PartyId::P1 : PartyId::P2;
}

void OwnerCollective::pregen_pool(std::int64_t count) {
  if (count <= 0) return;
  pool_capacity_.fetch_add(count);
  pool_pregenerated_.fetch_add(static_cast<std::uint64_t>(count));
  tr_.send({PartyId::P1, PartyId::P3, MsgKind::cipher_batch,
            static_cast<std::size_t>(count) * be_.ciphertext_bytes(),
            static_cast<std::size_t>(count), nullptr, "random cipher pool"});
  tr_.add_round();
}

void OwnerCollective::note_draw() {
  const auto drawn = static_cast<std::int64_t>(pool_drawn_.fetch_add(1)) + 1;
  if (drawn > pool_capacity_.load()) {
    // Pool exhausted: the owners ship another batch, costing one extra round.
    constexpr std::int64_t kRefillBatch = 4096;
    pool_capacity_.fetch_add(kRefillBatch);
    pool_refills_.fetch_add(1);
    pool_pregenerated_.fetch_add(kRefillBatch);
    tr_.send({PartyId::P2, PartyId::P3, MsgKind::cipher_batch,
              static_cast<std::size_t>(kRefillBatch) * be_.ciphertext_bytes(),
              static_cast<std::size_t>(kRefillBatch), nullptr, "random cipher pool refill"});
    tr_.add_round();
  }
}

he::CipherVec OwnerCollective::pool_cipher(std::uint64_t task_seed, std::uint64_t idx) {
  note_draw();
  // Random nonzero mask in +-[0.5, 2], sign-balanced, deterministic per
  // (task, index) so results are independent of scheduling.
  const SeedStream stream = seed_.sub("pool").sub(task_seed).sub(idx);
  std::vector<double> values(static_cast<std::size_t>(be_.batch_size()));
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double u = stream.uniform01(2 * i);
    const double sign = stream.uniform01(2 * i + 1) < 0.5 ? 1.0 : -1.0;
    values[i] = sign * (0.5 + 1.5 * u);
  }
  return be_.encrypt(he::PlainVec{std::move(values)}, public_key_,
                     seed_.sub("pool_enc").sub(task_seed).sub(idx).value());
}

he::CipherVec OwnerCollective::serve_inverse(std::uint64_t task_seed, std::uint64_t idx,
                                             const he::CipherVec& masked) {
  const PartyId endpoint = next_endpoint();
  tr_.send({PartyId::P3, endpoint, MsgKind::cipher, masked.byte_size(), 1, nullptr,
            "masked inverse request"});
  he::PlainVec v = be_.decrypt(masked, full_key_);
  std::vector<double> inv(v.values.size());
  for (std::size_t i = 0; i < inv.size(); ++i) {
    if (v.values[i] == 0.0)
      throw DataFault("interactive inverse hit a zero slot at the owner");
    inv[i] = 1.0 / v.values[i];
  }
  he::CipherVec fresh = be_.encrypt(he::PlainVec{std::move(inv)}, public_key_,
                                    seed_.sub("inv").sub(task_seed).sub(idx).value());
  tr_.send({endpoint, PartyId::P3, MsgKind::cipher, fresh.byte_size(), 1, nullptr,
            "masked inverse response"});
  tr_.add_round();
  return fresh;
}

he::CipherVec OwnerCollective::serve_refresh(std::uint64_t task_seed, std::uint64_t idx,
                                             const he::CipherVec& masked) {
  const PartyId endpoint = next_endpoint();
  tr_.send({PartyId::P3, endpoint, MsgKind::cipher, masked.byte_size(), 1, nullptr,
            "refresh request"});
  he::PlainVec v = be_.decrypt(masked, full_key_);
  he::CipherVec fresh = be_.encrypt(v, public_key_,
                                    seed_.sub("refresh").sub(task_seed).sub(idx).value());
  tr_.send({endpoint, PartyId::P3, MsgKind::cipher, fresh.byte_size(), 1, nullptr,
            "refresh response"});
  tr_.add_round();
  return fresh;
}

std::vector<he::PlainVec> OwnerCollective::serve_decrypt_to_p3(
    const std::vector<he::CipherVec>& batch, std::string_view note) {
  const PartyId endpoint = next_endpoint();
  std::size_t bytes = 0;
  for (const auto& c : batch) bytes += c.byte_size();
  tr_.send({PartyId::P3, endpoint, MsgKind::cipher_batch, bytes, batch.size(), nullptr,
            "decrypt request"});
  std::vector<he::PlainVec> plains;
  plains.reserve(batch.size());
  std::vector<double> flattened;
  for (const auto& c : batch) {
    he::PlainVec p = be_.decrypt(c, full_key_);
    flattened.insert(flattened.end(), p.values.begin(), p.values.end());
    plains.push_back(std::move(p));
  }
  tr_.send({endpoint, PartyId::P3, MsgKind::plain_rows, plain_bytes(flattened.size()),
            batch.size(), &flattened, note});
  tr_.add_round();
  return plains;
}

void OwnerCollective::score_candidates(const std::vector<std::int64_t>& ids_a,
                                       const std::vector<he::CipherVec>& cards_a,
                                       const std::vector<std::int64_t>& ids_b,
                                       const std::vector<he::CipherVec>& cards_b,
                                       const std::vector<std::pair<int, int>>& candidates,
                                       const std::vector<std::optional<he::CipherVec>>& overlaps,
                                       EeqMode mode, std::vector<matcher::MatchResult>& out) {
  if (candidates.size() != overlaps.size())
    throw ShapeError("candidate/overlap count mismatch");
  if (candidates.empty()) return;
  const PartyId endpoint = next_endpoint();
  std::size_t bytes = plain_bytes(candidates.size() * 2);
  std::size_t payloads = 0;
  for (const auto& ov : overlaps)
    if (ov) {
      bytes += ov->byte_size();
      ++payloads;
    }
  tr_.send({PartyId::P3, endpoint, MsgKind::cipher_batch, bytes, payloads, nullptr,
            "surviving candidates for collective scoring"});
  tr_.add_round();

  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const auto [i, j] = candidates[k];
    if (i < 0 || static_cast<std::size_t>(i) >= ids_a.size() || j < 0 ||
        static_cast<std::size_t>(j) >= ids_b.size())
      throw RangeError("candidate position outside chunk");
    const int card_a = static_cast<int>(
        std::llround(be_.decrypt(cards_a[static_cast<std::size_t>(i)], full_key_)[0]));
    const int card_b = static_cast<int>(
        std::llround(be_.decrypt(cards_b[static_cast<std::size_t>(j)], full_key_)[0]));
    int overlap = 0;
    if (overlaps[k]) {
      const double raw = be_.decrypt(*overlaps[k], full_key_)[0];
      overlap = static_cast<int>(std::llround(raw));
    }
    if (overlap < 0) overlap = 0;
    const int cap = std::min(card_a, card_b);
    if (overlap > cap) {
      // The polynomial equality leaves small residues on near-miss token
      // codes; tolerate one-off rounding there, fail loudly otherwise.
      if (mode == EeqMode::non_interactive && overlap - cap <= 2) {
        overlap = cap;
        overlap_clamped_.fetch_add(1);
      } else {
        throw DataFault("overlap " + std::to_string(overlap) + " exceeds cardinalities");
      }
    }
    matcher::MatchResult m;
    m.id1 = ids_a[static_cast<std::size_t>(i)];
    m.id2 = ids_b[static_cast<std::size_t>(j)];
    m.overlap = overlap;
    m.score = matcher::score_percent(overlap, card_a, card_b);
    out.push_back(m);
  }
}

P3Session::P3Session(const he::HEBackend& be, OwnerCollective& owners, std::uint64_t task_seed,
                     double xi)
    : be_(be), owners_(owners), task_seed_(task_seed), xi_(xi),
      stream_(SeedStream(task_seed).sub("p3")) {}

he::CipherVec P3Session::interactive_inverse(const he::CipherVec& x) {
  const std::uint64_t idx = cursor_++;
  he::CipherVec r = owners_.pool_cipher(task_seed_, idx);
  he::CipherVec rx = be_.mul(x, r, "interactive_inverse.mask");
  he::CipherVec inv_rx = owners_.serve_inverse(task_seed_, idx, rx);
  return be_.mul(inv_rx, r, "interactive_inverse.unmask");
}

he::CipherVec P3Session::eeq_interactive(const he::CipherVec& a, const he::CipherVec& b) {
  he::CipherVec x = be_.sub(a, b);
  he::CipherVec inv = interactive_inverse(be_.add_scalar(x, xi_));
  // (a-b) * (-1/(a-b+xi)) + 1 == 1 - x * inv.
  return be_.sub_from_scalar(1.0, be_.mul(x, inv, "eeq_interactive"));
}

he::CipherVec P3Session::refresh(const he::CipherVec& v) {
  const std::uint64_t idx = cursor_++;
  const SeedStream mask_stream = stream_.sub("mask").sub(idx);
  std::vector<double> mask(static_cast<std::size_t>(be_.batch_size()));
  for (std::size_t i = 0; i < mask.size(); ++i)
    mask[i] = (mask_stream.uniform01(i) - 0.5) * 2.0e6;
  he::PlainVec mask_vec{std::move(mask)};
  he::CipherVec fresh = owners_.serve_refresh(task_seed_, idx, be_.add_plain(v, mask_vec));
  return be_.sub_plain(fresh, mask_vec);
}

he::CipherVec P3Session::ensure(const he::CipherVec& v, int muls) {
  if (be_.params().multiplicative_depth - v.depth_consumed() < muls) return refresh(v);
  return v;
}

pmatrix::EvalOps P3Session::ops() {
  return pmatrix::EvalOps{
      [this](const he::CipherVec& a, const he::CipherVec& b) { return eeq_interactive(a, b); },
      [this](const he::CipherVec& v, int muls) { return ensure(v, muls); }};
}

pmatrix::EvalOps non_interactive_ops(const he::HEBackend& be, const approx::CompParams& p) {
  const he::HEBackend* bep = &be;
  return pmatrix::EvalOps{
      [bep, p](const he::CipherVec& a, const he::CipherVec& b) {
        return approx::eeq_ni(*bep, a, b, p);
      },
      [bep](const he::CipherVec& v, int muls) {
        if (bep->params().multiplicative_depth - v.depth_consumed() < muls &&
            bep->params().bootstrapping_enabled)
          return bep->bootstrap(v);
        return v;
      }};
}

nlohmann::json RunStats::to_json() const {
  nlohmann::json j{{"variant", variant},
                   {"eeq_mode", eeq_mode},
                   {"backend", backend},
                   {"chunk_size", chunk_size},
                   {"parallel", parallel},
                   {"workers", workers},
                   {"seed", seed},
                   {"total_seconds", total_seconds},
                   {"per_chunk_pair_seconds", per_chunk_pair_seconds},
                   {"normalized_per_pair_seconds", normalized_per_pair_seconds},
                   {"peak_memory_bytes", peak_memory_bytes},
                   {"chunk_storage_bytes_avg", chunk_storage_bytes_avg},
                   {"key_bytes", key_bytes},
                   {"messages", messages},
                   {"rounds", rounds},
                   {"bytes", bytes},
                   {"chunk_pairs", chunk_pairs},
                   {"candidates", candidates},
                   {"matches", matches},
                   {"vr_invocations", vr_invocations},
                   {"matrix_updates", matrix_updates},
                   {"pool_pregenerated", pool_pregenerated},
                   {"pool_refills", pool_refills},
                   {"decrypt_calls_p1", decrypt_calls_p1},
                   {"decrypt_calls_p2", decrypt_calls_p2},
                   {"overlap_clamped", overlap_clamped},
                   {"t_prime", t_prime},
                   {"t_total", t_total}};
  if (!config_echo.is_null()) j["config"] = config_echo;
  return j;
}

namespace {

nlohmann::json config_echo_json(const PipelineConfig& cfg, const he::HEParams& he_params,
                                const approx::CompParams& comp_params) {
  return nlohmann::json{
      {"pipeline",
       {{"variant", to_string(cfg.variant)},
        {"eeq_mode", to_string(cfg.eeq_mode)},
        {"backend", he::to_string(cfg.backend)},
        {"chunk_size", cfg.chunk_size},
        {"threshold", cfg.threshold},
        {"parallel", cfg.parallel},
        {"workers", cfg.workers},
        {"oblivious_rows", cfg.oblivious_rows},
        {"xi", cfg.xi},
        {"token_domain_interactive", cfg.token_domain_interactive},
        {"token_domain_ni", cfg.token_domain_ni},
        {"extract_tol", cfg.extract_tol},
        {"seed", cfg.seed}}},
      {"he",
       {{"multiplicative_depth", he_params.multiplicative_depth},
        {"scale_factor_bits", he_params.scale_factor_bits},
        {"batch_size", he_params.batch_size},
        {"num_large_digits", he_params.num_large_digits},
        {"first_mod_size", he_params.first_mod_size},
        {"security_level", he_params.security_level_label},
        {"bootstrapping", he_params.bootstrapping_enabled},
        {"refresh_depth", he_params.refresh_depth},
        {"noise_sigma", he_params.noise_sigma},
        {"interactive_bootstrap_compression", he_params.interactive_bootstrap_compression}}},
      {"approx",
       {{"m", comp_params.m},
        {"d_prime", comp_params.d_prime},
        {"d", comp_params.d},
        {"t", comp_params.t}}}};
}

struct TaskTotals {
  std::atomic<std::uint64_t> candidates{0};
  std::atomic<std::uint64_t> vr{0};
  std::atomic<std::uint64_t> updates{0};
};

// One ciphertext per token code (no padding); the representation of the
// element-wise baselines.
struct ElemRecord {
  std::vector<he::CipherVec> tokens;
  he::CipherVec cardinality;
};

struct ElemChunk {
  std::vector<std::int64_t> local_ids;
  std::vector<ElemRecord> records;
  std::map<std::uint64_t, std::vector<he::CipherVec>> key_index;
  std::vector<he::CipherVec> cards() const {
    std::vector<he::CipherVec> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.cardinality);
    return out;
  }
  std::size_t cipher_bytes(const he::HEBackend& be) const {
    std::size_t n = 0;
    for (const auto& r : records) n += r.tokens.size() + 1;
    for (const auto& [k, v] : key_index) n += v.size();
    return n * be.ciphertext_bytes();
  }
};

ElemChunk encrypt_elem_chunk(const he::HEBackend& be, const he::KeyMaterial& pub,
                             const blocking::ChunkPlan& plan,
                             const std::vector<dataio::Record>& dataset,
                             const blocking::SlotEncoding& enc, std::uint64_t stream_base) {
  std::unordered_map<std::int64_t, const dataio::Record*> by_id;
  for (const auto& r : dataset) by_id[r.local_id] = &r;
  SeedStream stream = SeedStream(stream_base).sub(static_cast<std::uint64_t>(plan.chunk_index));
  std::uint64_t seq = 0;
  const int B = be.batch_size();

  ElemChunk chunk;
  chunk.local_ids = plan.local_ids;
  for (std::int64_t id : plan.local_ids) {
    const dataio::Record* rec = by_id.at(id);
    dataio::TokenVec tv = dataio::tokenize(*rec, plan.side, enc.token_domain, B);
    ElemRecord er;
    for (int s = 0; s < tv.cardinality; ++s)
      er.tokens.push_back(
          be.encrypt(he::PlainVec::constant(
                         B, enc.token_value(tv.slots[static_cast<std::size_t>(s)])),
                     pub, stream.sub(++seq).value()));
    er.cardinality = be.encrypt(he::PlainVec::constant(B, tv.cardinality), pub,
                                stream.sub(++seq).value());
    chunk.records.push_back(std::move(er));
  }
  for (const auto& [key, ids] : plan.key_index) {
    auto& ciphers = chunk.key_index[key];
    for (int id : ids)
      ciphers.push_back(be.encrypt(he::PlainVec::constant(B, enc.id_value(id)), pub,
                                   stream.sub(++seq).value()));
  }
  return chunk;
}

class PipelineRunner {
 public:
  PipelineRunner(const PipelineConfig& cfg, const he::HEParams& he_params,
                 const approx::CompParams& comp_params, const std::vector<dataio::Record>& d1,
                 const std::vector<dataio::Record>& d2, Transport::Tap tap)
      : cfg_(cfg), he_params_(he_params), comp_params_(comp_params), d1_(d1), d2_(d2) {
    tr_.set_tap(std::move(tap));
  }

  PipelineResult run() {
    const auto t0 = Clock::now();
    PipelineResult result;
    result.stats.variant = to_string(cfg_.variant);
    result.stats.eeq_mode = to_string(cfg_.eeq_mode);
    result.stats.backend = he::to_string(cfg_.backend);
    result.stats.chunk_size = cfg_.chunk_size;
    result.stats.parallel = cfg_.parallel;
    result.stats.workers = cfg_.workers;
    result.stats.seed = cfg_.seed;
    result.stats.config_echo = config_echo_json(cfg_, he_params_, comp_params_);

    switch (cfg_.variant) {
      case Variant::cleartext: run_cleartext(result); break;
      case Variant::optimized: run_simd(result); break;
      case Variant::amppere_base: run_elementwise_chunked(result); break;
      case Variant::naive_he: run_naive(result); break;
    }

    result.matches = matcher::filter_matches(std::move(result.matches), cfg_.threshold);
    result.stats.matches = result.matches.size();
    result.stats.total_seconds = seconds_since(t0);
    if (be_) {
      result.stats.peak_memory_bytes = be_->peak_cipher_bytes();
      result.stats.messages = tr_.messages();
      result.stats.rounds = tr_.rounds();
      result.stats.bytes = tr_.bytes();
    }
    if (owners_) {
      result.stats.pool_pregenerated = owners_->pool_pregenerated();
      result.stats.pool_refills = owners_->pool_refills();
      result.stats.decrypt_calls_p1 = owners_->calls_p1();
      result.stats.decrypt_calls_p2 = owners_->calls_p2();
      result.stats.overlap_clamped = owners_->overlap_clamped();
    }
    return result;
  }

 private:
  void setup_backend() {
    be_ = he::make_backend(cfg_.backend, he_params_, cfg_.seed);
    owners_ = std::make_unique<OwnerCollective>(*be_, tr_, cfg_.seed);
  }

  blocking::SlotEncoding encoding() const {
    return blocking::SlotEncoding{cfg_.eeq_mode == EeqMode::non_interactive, cfg_.token_domain(),
                                  he_params_.batch_size};
  }

  pmatrix::EvalOps ops_for(P3Session* session) const {
    if (cfg_.eeq_mode == EeqMode::interactive) return session->ops();
    return non_interactive_ops(*be_, comp_params_);
  }

  void run_cleartext(PipelineResult& result) {
    const blocking::CandidateSet cands = blocking::cleartext_candidates(d1_, d2_);
    result.stats.t_prime = cands.pairs.size();
    result.stats.t_total = cands.total_comparisons;
    result.stats.candidates = cands.pairs.size();
    // Threshold 0 here: the runner applies the configured threshold once at
    // the end for every variant.
    result.matches = matcher::cleartext_er(d1_, d2_, 0.0, cfg_.token_domain_interactive,
                                           he_params_.batch_size);
  }

  void run_simd(PipelineResult& result) {
    setup_backend();
    const blocking::SlotEncoding enc = encoding();
    const int B = he_params_.batch_size;
    SeedStream root(cfg_.seed);

    auto plans_a = blocking::plan_chunks(d1_, cfg_.chunk_size, dataio::Side::A, B);
    auto plans_b = blocking::plan_chunks(d2_, cfg_.chunk_size, dataio::Side::B, B);

    blocking::EncodeContext ectx{be_.get(), &owners_->public_key(), enc, 0,
                                 !cfg_.oblivious_rows};
    std::vector<blocking::Chunk> chunks_a, chunks_b;
    std::size_t chunk_bytes = 0;
    ectx.stream_base = root.sub("chunksA").value();
    for (const auto& plan : plans_a) {
      chunks_a.push_back(blocking::encrypt_chunk(plan, d1_, ectx));
      std::size_t n = 0;
      for (const auto& [k, v] : chunks_a.back().key_index) n += v.size();
      const std::size_t bytes =
          (chunks_a.back().records.size() * 2 + n + 1) * be_->ciphertext_bytes();
      chunk_bytes += bytes;
      tr_.send({PartyId::P1, PartyId::P3, MsgKind::cipher_batch, bytes,
                chunks_a.back().records.size() * 2 + n + 1, nullptr, "chunk delivery"});
    }
    tr_.add_round();
    ectx.stream_base = root.sub("chunksB").value();
    for (const auto& plan : plans_b) {
      chunks_b.push_back(blocking::encrypt_chunk(plan, d2_, ectx));
      std::size_t n = 0;
      for (const auto& [k, v] : chunks_b.back().key_index) n += v.size();
      const std::size_t bytes =
          (chunks_b.back().records.size() * 2 + n + 1) * be_->ciphertext_bytes();
      chunk_bytes += bytes;
      tr_.send({PartyId::P2, PartyId::P3, MsgKind::cipher_batch, bytes,
                chunks_b.back().records.size() * 2 + n + 1, nullptr, "chunk delivery"});
    }
    tr_.add_round();
    const std::size_t n_chunks = chunks_a.size() + chunks_b.size();
    result.stats.chunk_storage_bytes_avg = n_chunks ? chunk_bytes / n_chunks : 0;
    result.stats.key_bytes = be_->key_material_bytes(owners_->full_key());

    // Update volume is known to the owners from the cleartext plans; the
    // pool is sized at twice the expected interactive calls.
    if (cfg_.eeq_mode == EeqMode::interactive) {
      std::int64_t updates = 0;
      for (const auto& pa : plans_a)
        for (const auto& pb : plans_b)
          for (const auto& [key, rows] : pa.key_index) {
            auto it = pb.key_index.find(key);
            if (it != pb.key_index.end())
              updates += static_cast<std::int64_t>(rows.size()) *
                         static_cast<std::int64_t>(it->second.size());
          }
      owners_->pregen_pool(2 * updates * (cfg_.chunk_size + 2));
    }

    struct Task {
      int ai, bi;
    };
    std::vector<Task> tasks;
    for (std::size_t ai = 0; ai < chunks_a.size(); ++ai)
      for (std::size_t bi = 0; bi < chunks_b.size(); ++bi)
        tasks.push_back({static_cast<int>(ai), static_cast<int>(bi)});

    std::vector<std::vector<matcher::MatchResult>> per_task(tasks.size());
    std::vector<double> durations(tasks.size(), 0.0);
    TaskTotals totals;

    // Encoded ladder of physical row ids, shared by every chunk pair.
    std::vector<double> ladder(static_cast<std::size_t>(B));
    for (int j = 0; j < B; ++j) ladder[static_cast<std::size_t>(j)] = enc.id_value(j);
    const he::PlainVec all_row_ids{ladder};

    auto process = [&](std::size_t t) {
      const auto task_t0 = Clock::now();
      const blocking::Chunk& ca = chunks_a[static_cast<std::size_t>(tasks[t].ai)];
      const blocking::Chunk& cb = chunks_b[static_cast<std::size_t>(tasks[t].bi)];
      const int M = static_cast<int>(ca.records.size());
      const int N = static_cast<int>(cb.records.size());
      const std::uint64_t task_seed = hash_mix(cfg_.seed, hash_mix(fnv1a64("task"), t));

      P3Session session(*be_, *owners_, task_seed, cfg_.xi);
      pmatrix::EvalOps ops = ops_for(&session);

      pmatrix::CandidateMatrix mat =
          pmatrix::init_matrix(*be_, owners_->public_key(), M, N, hash_mix(task_seed, 1));
      std::vector<he::CipherVec> row_probes;
      row_probes.reserve(static_cast<std::size_t>(M));
      SeedStream probe_stream = SeedStream(task_seed).sub("probes");
      for (int i = 0; i < M; ++i)
        row_probes.push_back(be_->encrypt(he::PlainVec::constant(B, enc.id_value(i)),
                                          owners_->public_key(),
                                          probe_stream.sub(static_cast<std::uint64_t>(i)).value()));

      for (const auto& [key, row_ciphers] : ca.key_index) {
        auto it = cb.key_index.find(key);
        if (it == cb.key_index.end()) continue;
        for (std::size_t r = 0; r < row_ciphers.size(); ++r) {
          for (const auto& col_cipher : it->second) {
            if (cfg_.oblivious_rows) {
              pmatrix::oblivious_update(*be_, mat, row_ciphers[r], col_cipher, cb.all_ids,
                                        all_row_ids, row_probes, ops);
            } else {
              pmatrix::plain_row_update(*be_, mat, ca.plain_key_index.at(key)[r], col_cipher,
                                        cb.all_ids, ops);
            }
            totals.updates.fetch_add(1);
          }
        }
      }

      pmatrix::obfuscate(*be_, mat, SeedStream(task_seed).sub("obfuscate"), ops);
      std::vector<he::PlainVec> plains = owners_->serve_decrypt_to_p3(mat.rows, "matrix rows");
      auto cands = pmatrix::extract_candidates(plains, N, cfg_.extract_tol);
      totals.candidates.fetch_add(cands.size());

      std::vector<std::optional<he::CipherVec>> overlaps;
      overlaps.reserve(cands.size());
      for (const auto& [i, j] : cands) {
        overlaps.emplace_back(matcher::vr_overlap(
            *be_, ca.records[static_cast<std::size_t>(i)].tokens,
            cb.records[static_cast<std::size_t>(j)].tokens, ops));
        totals.vr.fetch_add(1);
      }

      std::vector<he::CipherVec> cards_a, cards_b;
      for (const auto& r : ca.records) cards_a.push_back(r.cardinality);
      for (const auto& r : cb.records) cards_b.push_back(r.cardinality);
      owners_->score_candidates(ca.local_ids, cards_a, cb.local_ids, cards_b, cands, overlaps,
                                cfg_.eeq_mode, per_task[t]);
      durations[t] = seconds_since(task_t0);
    };

    parallel_for(tasks.size(), cfg_.parallel ? cfg_.workers : 1, process);

    for (auto& part : per_task)
      result.matches.insert(result.matches.end(), part.begin(), part.end());
    finish_stats(result, durations, totals,
                 static_cast<double>(cfg_.chunk_size) * cfg_.chunk_size);
  }

  void run_elementwise_chunked(PipelineResult& result) {
    setup_backend();
    const blocking::SlotEncoding enc = encoding();
    const int B = he_params_.batch_size;
    SeedStream root(cfg_.seed);

    auto plans_a = blocking::plan_chunks(d1_, cfg_.chunk_size, dataio::Side::A, B);
    auto plans_b = blocking::plan_chunks(d2_, cfg_.chunk_size, dataio::Side::B, B);

    std::vector<ElemChunk> chunks_a, chunks_b;
    std::size_t chunk_bytes = 0;
    for (const auto& plan : plans_a) {
      chunks_a.push_back(
          encrypt_elem_chunk(*be_, owners_->public_key(), plan, d1_, enc,
                             root.sub("elemA").value()));
      const std::size_t bytes = chunks_a.back().cipher_bytes(*be_);
      chunk_bytes += bytes;
      tr_.send({PartyId::P1, PartyId::P3, MsgKind::cipher_batch, bytes, 1, nullptr,
                "chunk delivery"});
    }
    tr_.add_round();
    for (const auto& plan : plans_b) {
      chunks_b.push_back(
          encrypt_elem_chunk(*be_, owners_->public_key(), plan, d2_, enc,
                             root.sub("elemB").value()));
      const std::size_t bytes = chunks_b.back().cipher_bytes(*be_);
      chunk_bytes += bytes;
      tr_.send({PartyId::P2, PartyId::P3, MsgKind::cipher_batch, bytes, 1, nullptr,
                "chunk delivery"});
    }
    tr_.add_round();
    const std::size_t n_chunks = chunks_a.size() + chunks_b.size();
    result.stats.chunk_storage_bytes_avg = n_chunks ? chunk_bytes / n_chunks : 0;
    result.stats.key_bytes = be_->key_material_bytes(owners_->full_key());

    if (cfg_.eeq_mode == EeqMode::interactive) owners_->pregen_pool(1 << 16);

    struct Task {
      int ai, bi;
    };
    std::vector<Task> tasks;
    for (std::size_t ai = 0; ai < chunks_a.size(); ++ai)
      for (std::size_t bi = 0; bi < chunks_b.size(); ++bi)
        tasks.push_back({static_cast<int>(ai), static_cast<int>(bi)});
    std::vector<std::vector<matcher::MatchResult>> per_task(tasks.size());
    std::vector<double> durations(tasks.size(), 0.0);
    TaskTotals totals;

    auto process = [&](std::size_t t) {
      const auto task_t0 = Clock::now();
      const ElemChunk& ca = chunks_a[static_cast<std::size_t>(tasks[t].ai)];
      const ElemChunk& cb = chunks_b[static_cast<std::size_t>(tasks[t].bi)];
      const int M = static_cast<int>(ca.records.size());
      const int N = static_cast<int>(cb.records.size());
      const std::uint64_t task_seed = hash_mix(cfg_.seed, hash_mix(fnv1a64("elem_task"), t));

      P3Session session(*be_, *owners_, task_seed, cfg_.xi);
      pmatrix::EvalOps ops = ops_for(&session);

      // Element-wise candidate matrix: one single-value ciphertext per cell.
      SeedStream cell_stream = SeedStream(task_seed).sub("cells");
      std::vector<std::vector<he::CipherVec>> cells(static_cast<std::size_t>(M));
      std::uint64_t seq = 0;
      for (auto& row : cells) {
        row.reserve(static_cast<std::size_t>(N));
        for (int j = 0; j < N; ++j)
          row.push_back(be_->encrypt(he::PlainVec::zeros(B), owners_->public_key(),
                                     cell_stream.sub(++seq).value()));
      }
      std::vector<he::CipherVec> row_probes, col_probes;
      SeedStream probe_stream = SeedStream(task_seed).sub("probes");
      for (int i = 0; i < M; ++i)
        row_probes.push_back(be_->encrypt(he::PlainVec::constant(B, enc.id_value(i)),
                                          owners_->public_key(), probe_stream.sub(seq = seq + 1).value()));
      for (int j = 0; j < N; ++j)
        col_probes.push_back(be_->encrypt(he::PlainVec::constant(B, enc.id_value(j)),
                                          owners_->public_key(), probe_stream.sub(seq = seq + 1).value()));

      for (const auto& [key, row_ciphers] : ca.key_index) {
        auto it = cb.key_index.find(key);
        if (it == cb.key_index.end()) continue;
        for (const auto& enc_row : row_ciphers) {
          for (const auto& enc_col : it->second) {
            std::vector<he::CipherVec> row_masks, col_masks;
            for (int i = 0; i < M; ++i)
              row_masks.push_back(ops.ensure(ops.eeq(row_probes[static_cast<std::size_t>(i)],
                                                     enc_row), 1));
            for (int j = 0; j < N; ++j)
              col_masks.push_back(ops.ensure(ops.eeq(col_probes[static_cast<std::size_t>(j)],
                                                     enc_col), 1));
            for (int i = 0; i < M; ++i) {
              for (int j = 0; j < N; ++j) {
                auto& cell = cells[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
                he::CipherVec upd = be_->mul(row_masks[static_cast<std::size_t>(i)],
                                             col_masks[static_cast<std::size_t>(j)],
                                             "elem.matrix.cell");
                he::CipherVec prod = be_->mul(ops.ensure(cell, 1), ops.ensure(upd, 1),
                                              "elem.matrix.or");
                cell = ops.ensure(be_->sub(be_->add(cell, upd), prod), 2);
              }
            }
            totals.updates.fetch_add(1);
          }
        }
      }

      // Obfuscate and decrypt every cell.
      SeedStream obf_stream = SeedStream(task_seed).sub("obfuscate");
      std::vector<he::CipherVec> flat;
      flat.reserve(static_cast<std::size_t>(M) * static_cast<std::size_t>(N));
      std::uint64_t obf_i = 0;
      for (auto& row : cells)
        for (auto& cell : row) {
          auto rng = obf_stream.sub(++obf_i).engine();
          std::uniform_real_distribution<double> u(0.5, 2.0);
          cell = be_->mul_scalar(ops.ensure(cell, 1), u(rng), "elem.obfuscate");
          flat.push_back(cell);
        }
      std::vector<he::PlainVec> plains =
          flat.empty() ? std::vector<he::PlainVec>{}
                       : owners_->serve_decrypt_to_p3(flat, "matrix cells");
      std::vector<std::pair<int, int>> cands;
      for (int i = 0; i < M; ++i)
        for (int j = 0; j < N; ++j)
          if (std::abs(plains[static_cast<std::size_t>(i) * static_cast<std::size_t>(N) +
                              static_cast<std::size_t>(j)][0]) > cfg_.extract_tol)
            cands.emplace_back(i, j);
      totals.candidates.fetch_add(cands.size());

      std::vector<std::optional<he::CipherVec>> overlaps;
      for (const auto& [i, j] : cands) {
        const auto& ta = ca.records[static_cast<std::size_t>(i)].tokens;
        const auto& tb = cb.records[static_cast<std::size_t>(j)].tokens;
        if (ta.empty() || tb.empty()) {
          overlaps.emplace_back(std::nullopt);
        } else {
          overlaps.emplace_back(matcher::elementwise_overlap(*be_, ta, tb, ops));
        }
        totals.vr.fetch_add(1);
      }
      owners_->score_candidates(ca.local_ids, ca.cards(), cb.local_ids, cb.cards(), cands,
                                overlaps, cfg_.eeq_mode, per_task[t]);
      durations[t] = seconds_since(task_t0);
    };

    // The base variant has no programming-level parallelism.
    parallel_for(tasks.size(), 1, process);

    for (auto& part : per_task)
      result.matches.insert(result.matches.end(), part.begin(), part.end());
    finish_stats(result, durations, totals,
                 static_cast<double>(cfg_.chunk_size) * cfg_.chunk_size);
  }

  void run_naive(PipelineResult& result) {
    setup_backend();
    const blocking::SlotEncoding enc = encoding();
    const int B = he_params_.batch_size;
    SeedStream root(cfg_.seed);

    // No blocking, no chunking: whole datasets as single element-wise lists.
    auto encrypt_all = [&](const std::vector<dataio::Record>& ds, dataio::Side side,
                           std::uint64_t stream_base, PartyId from) {
      blocking::ChunkPlan plan;
      plan.side = side;
      for (const auto& r : ds) plan.local_ids.push_back(r.local_id);
      ElemChunk chunk = encrypt_elem_chunk(*be_, owners_->public_key(), plan, ds, enc,
                                           stream_base);
      tr_.send({from, PartyId::P3, MsgKind::cipher_batch, chunk.cipher_bytes(*be_), 1, nullptr,
                "dataset delivery"});
      tr_.add_round();
      return chunk;
    };
    ElemChunk ea = encrypt_all(d1_, dataio::Side::A, root.sub("naiveA").value(), PartyId::P1);
    ElemChunk eb = encrypt_all(d2_, dataio::Side::B, root.sub("naiveB").value(), PartyId::P2);
    result.stats.chunk_storage_bytes_avg =
        (ea.cipher_bytes(*be_) + eb.cipher_bytes(*be_)) / 2;
    result.stats.key_bytes = be_->key_material_bytes(owners_->full_key());
    if (cfg_.eeq_mode == EeqMode::interactive) owners_->pregen_pool(1 << 16);

    std::vector<std::vector<matcher::MatchResult>> per_task(ea.records.size());
    std::vector<double> durations(ea.records.size(), 0.0);
    TaskTotals totals;

    auto process = [&](std::size_t i) {
      const auto task_t0 = Clock::now();
      const std::uint64_t task_seed = hash_mix(cfg_.seed, hash_mix(fnv1a64("naive_task"), i));
      P3Session session(*be_, *owners_, task_seed, cfg_.xi);
      pmatrix::EvalOps ops = ops_for(&session);
      std::vector<std::pair<int, int>> cands;
      std::vector<std::optional<he::CipherVec>> overlaps;
      for (std::size_t j = 0; j < eb.records.size(); ++j) {
        cands.emplace_back(static_cast<int>(i), static_cast<int>(j));
        const auto& ta = ea.records[i].tokens;
        const auto& tb = eb.records[j].tokens;
        if (ta.empty() || tb.empty())
          overlaps.emplace_back(std::nullopt);
        else
          overlaps.emplace_back(matcher::elementwise_overlap(*be_, ta, tb, ops));
        totals.vr.fetch_add(1);
      }
      totals.candidates.fetch_add(cands.size());
      owners_->score_candidates(ea.local_ids, ea.cards(), eb.local_ids, eb.cards(), cands,
                                overlaps, cfg_.eeq_mode, per_task[i]);
      durations[i] = seconds_since(task_t0);
    };

    // The most basic adaptation runs sequentially.
    parallel_for(ea.records.size(), 1, process);

    for (auto& part : per_task)
      result.matches.insert(result.matches.end(), part.begin(), part.end());

    RunStats& st = result.stats;
    st.chunk_pairs = durations.size();
    st.candidates = totals.candidates.load();
    st.vr_invocations = totals.vr.load();
    st.matrix_updates = totals.updates.load();
    double sum = 0;
    for (double d : durations) sum += d;
    st.per_chunk_pair_seconds = durations.empty() ? 0 : sum / static_cast<double>(durations.size());
    const double potential = static_cast<double>(d1_.size()) * static_cast<double>(d2_.size());
    st.normalized_per_pair_seconds = potential > 0 ? sum / potential : 0;
  }

  void finish_stats(PipelineResult& result, const std::vector<double>& durations,
                    const TaskTotals& totals, double pairs_per_chunk_pair) {
    RunStats& st = result.stats;
    st.chunk_pairs = durations.size();
    st.candidates = totals.candidates.load();
    st.vr_invocations = totals.vr.load();
    st.matrix_updates = totals.updates.load();
    double sum = 0;
    for (double d : durations) sum += d;
    st.per_chunk_pair_seconds = durations.empty() ? 0 : sum / static_cast<double>(durations.size());
    st.normalized_per_pair_seconds =
        durations.empty() ? 0 : st.per_chunk_pair_seconds / pairs_per_chunk_pair;
  }

  const PipelineConfig& cfg_;
  const he::HEParams& he_params_;
  const approx::CompParams& comp_params_;
  const std::vector<dataio::Record>& d1_;
  const std::vector<dataio::Record>& d2_;
  Transport tr_;
  std::unique_ptr<he::HEBackend> be_;
  std::unique_ptr<OwnerCollective> owners_;
};

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& cfg, const he::HEParams& he_params,
                            const approx::CompParams& comp_params,
                            const std::vector<dataio::Record>& d1,
                            const std::vector<dataio::Record>& d2, Transport::Tap tap) {
  cfg.validate(he_params, comp_params);
  PipelineRunner runner(cfg, he_params, comp_params, d1, d2, std::move(tap));
  return runner.run();
}

}  // namespace pper::protocol
