#include "pper/blocking.hpp"

#include <algorithm>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace pper::blocking {

namespace {

char soundex_digit(char c) {
  switch (c) {
    case 'b': case 'f': case 'p': case 'v': return '1';
    case 'c': case 'g': case 'j': case 'k': case 'q': case 's': case 'x': case 'z': return '2';
    case 'd': case 't': return '3';
    case 'l': return '4';
    case 'm': case 'n': return '5';
    case 'r': return '6';
    default: return 0;  // vowels, h, w, y
  }
}

}  // namespace

std::string soundex(std::string_view name) {
  if (name.empty()) return "";
  std::string out;
  out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(name[0]))));
  char prev = soundex_digit(name[0]);
  for (std::size_t i = 1; i < name.size() && out.size() < 4; ++i) {
    const char c = name[i];
    const char code = soundex_digit(c);
    if (code && code != prev) out.push_back(code);
    if (c != 'h' && c != 'w') prev = code;
  }
  out.resize(4, '0');
  return out;
}

std::set<std::uint64_t> blocking_keys(const Record& r) {
  std::set<std::uint64_t> keys;
  if (!r.dob_norm.empty()) keys.insert(fnv1a64("dob:" + r.dob_norm));
  if (!r.last_name.empty()) keys.insert(fnv1a64("lns:" + soundex(r.last_name)));
  if (!r.first_name.empty() && !r.dob_norm.empty())
    keys.insert(fnv1a64("fny:" + soundex(r.first_name) + r.dob_norm.substr(6, 4)));
  return keys;
}

std::vector<ChunkPlan> plan_chunks(const std::vector<Record>& records, int chunk_size, Side side,
                                   int batch_size) {
  if (chunk_size < 1) throw ConfigError("chunk_size must be positive");
  if (chunk_size > batch_size)
    throw ConfigError("chunk_size " + std::to_string(chunk_size) + " exceeds batch size " +
                      std::to_string(batch_size));
  std::vector<ChunkPlan> plans;
  for (std::size_t begin = 0; begin < records.size(); begin += static_cast<std::size_t>(chunk_size)) {
    ChunkPlan plan;
    plan.side = side;
    plan.chunk_index = static_cast<int>(plans.size());
    const std::size_t end = std::min(records.size(), begin + static_cast<std::size_t>(chunk_size));
    for (std::size_t i = begin; i < end; ++i) {
      const int in_chunk_id = static_cast<int>(i - begin);
      plan.local_ids.push_back(records[i].local_id);
      for (std::uint64_t key : blocking_keys(records[i]))
        plan.key_index[key].push_back(in_chunk_id);
    }
    plans.push_back(std::move(plan));
  }
  return plans;
}

CandidateSet cleartext_candidates(const std::vector<Record>& d1, const std::vector<Record>& d2) {
  std::unordered_map<std::uint64_t, std::vector<std::int64_t>> index;
  for (const auto& r : d1)
    for (std::uint64_t key : blocking_keys(r)) index[key].push_back(r.local_id);
  CandidateSet out;
  out.total_comparisons = static_cast<std::uint64_t>(d1.size()) * d2.size();
  for (const auto& r : d2) {
    for (std::uint64_t key : blocking_keys(r)) {
      auto it = index.find(key);
      if (it == index.end()) continue;
      for (std::int64_t id1 : it->second) out.pairs.emplace_back(id1, r.local_id);
    }
  }
  std::sort(out.pairs.begin(), out.pairs.end());
  out.pairs.erase(std::unique(out.pairs.begin(), out.pairs.end()), out.pairs.end());
  return out;
}

std::vector<std::vector<std::pair<std::int64_t, std::int64_t>>> chunk_by_blocks(
    const std::vector<Record>& d1, const std::vector<Record>& d2, int chunk_size) {
  if (chunk_size < 1) throw ConfigError("chunk_size must be positive");
  const CandidateSet cands = cleartext_candidates(d1, d2);
  std::vector<std::vector<std::pair<std::int64_t, std::int64_t>>> chunks;
  for (std::size_t begin = 0; begin < cands.pairs.size();
       begin += static_cast<std::size_t>(chunk_size)) {
    const std::size_t end =
        std::min(cands.pairs.size(), begin + static_cast<std::size_t>(chunk_size));
    chunks.emplace_back(cands.pairs.begin() + static_cast<std::ptrdiff_t>(begin),
                        cands.pairs.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return chunks;
}

double SlotEncoding::id_value(int id) const {
  if (!rescaled) return static_cast<double>(id);
  if (id < 0 || id >= batch_size) throw RangeError("id outside [0, batch_size)");
  return 0.5 + static_cast<double>(id) / static_cast<double>(batch_size);
}

double SlotEncoding::token_value(std::uint32_t code) const {
  if (!rescaled) return static_cast<double>(code);
  if (code == token_domain) return 1.125;      // side-A pad
  if (code == 2 * token_domain) return 1.375;  // side-B pad
  if (code > token_domain) throw RangeError("token code outside domain");
  return 0.5 + static_cast<double>(code) / (2.0 * static_cast<double>(token_domain));
}

Chunk encrypt_chunk(const ChunkPlan& plan, const std::vector<Record>& dataset,
                    const EncodeContext& ctx) {
  const auto& be = *ctx.backend;
  const int B = be.batch_size();
  SeedStream stream(ctx.stream_base);
  SeedStream chunk_stream = stream.sub(static_cast<std::uint64_t>(plan.chunk_index) + 1);

  std::unordered_map<std::int64_t, const Record*> by_id;
  for (const auto& r : dataset) by_id[r.local_id] = &r;

  Chunk chunk;
  chunk.side = plan.side;
  chunk.chunk_index = plan.chunk_index;
  chunk.local_ids = plan.local_ids;

  std::uint64_t seq = 0;
  for (std::size_t i = 0; i < plan.local_ids.size(); ++i) {
    const Record* rec = by_id.at(plan.local_ids[i]);
    const dataio::TokenVec tv =
        dataio::tokenize(*rec, plan.side, ctx.encoding.token_domain, B);
    std::vector<double> slots(static_cast<std::size_t>(B));
    for (int s = 0; s < B; ++s)
      slots[static_cast<std::size_t>(s)] =
          ctx.encoding.token_value(tv.slots[static_cast<std::size_t>(s)]);
    EncRecord er;
    er.in_chunk_id = static_cast<int>(i);
    er.tokens = be.encrypt(he::PlainVec{std::move(slots)}, *ctx.public_key,
                           chunk_stream.sub(++seq).value());
    er.cardinality = be.encrypt(he::PlainVec::constant(B, tv.cardinality), *ctx.public_key,
                                chunk_stream.sub(++seq).value());
    chunk.cardinalities.push_back(tv.cardinality);
    chunk.records.push_back(std::move(er));
  }

  for (const auto& [key, ids] : plan.key_index) {
    auto& ciphers = chunk.key_index[key];
    for (int id : ids)
      ciphers.push_back(be.encrypt(
          he::PlainVec::constant(B, ctx.encoding.id_value(id)), *ctx.public_key,
          chunk_stream.sub(++seq).value()));
    if (ctx.include_plain_index) chunk.plain_key_index[key] = ids;
  }

  // Slot ladder of all encoded ids: slot j holds the encoding of id j. Slots
  // past the chunk size still hold their own index and so never match a real
  // id below the chunk size.
  std::vector<double> ladder(static_cast<std::size_t>(B));
  for (int j = 0; j < B; ++j) ladder[static_cast<std::size_t>(j)] = ctx.encoding.id_value(j);
  chunk.all_ids = be.encrypt(he::PlainVec{std::move(ladder)}, *ctx.public_key,
                             chunk_stream.sub(++seq).value());
  return chunk;
}

std::string chunk_manifest_json(const std::vector<ChunkPlan>& plans) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : plans) {
    nlohmann::json keys = nlohmann::json::array();
    for (const auto& [key, ids] : p.key_index)
      keys.push_back({{"code", key}, {"ids", ids.size()}});
    arr.push_back({{"side", p.side == Side::A ? "A" : "B"},
                   {"chunk_index", p.chunk_index},
                   {"size", p.local_ids.size()},
                   {"keys", std::move(keys)}});
  }
  return arr.dump(2);
}

}  // namespace pper::blocking
