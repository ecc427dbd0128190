#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "pper/blocking.hpp"

using namespace pper;
using namespace pper::blocking;
using dataio::GenConfig;
using dataio::GenOutput;
using dataio::Record;
using dataio::Side;

namespace {

Record rec(std::int64_t id, const std::string& fn, const std::string& ln,
           const std::string& dob) {
  Record r;
  r.local_id = id;
  r.first_name = fn;
  r.last_name = ln;
  r.dob_norm = dob;
  return r;
}

// Record-based candidate derivation straight from the cleartext chunk plans:
// the union over chunk pairs of per-key row x column products.
std::set<std::pair<std::int64_t, std::int64_t>> record_based_candidates(
    const std::vector<Record>& d1, const std::vector<Record>& d2, int chunk_size) {
  auto plans_a = plan_chunks(d1, chunk_size, Side::A, 128);
  auto plans_b = plan_chunks(d2, chunk_size, Side::B, 128);
  std::set<std::pair<std::int64_t, std::int64_t>> out;
  for (const auto& pa : plans_a) {
    for (const auto& pb : plans_b) {
      for (const auto& [key, rows] : pa.key_index) {
        auto it = pb.key_index.find(key);
        if (it == pb.key_index.end()) continue;
        for (int i : rows)
          for (int j : it->second)
            out.emplace(pa.local_ids[static_cast<std::size_t>(i)],
                        pb.local_ids[static_cast<std::size_t>(j)]);
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("soundex classic vectors") {
  CHECK(soundex("robert") == "R163");
  CHECK(soundex("rupert") == "R163");
  CHECK(soundex("ashcraft") == "A261");  // h/w do not reset the previous code
  CHECK(soundex("tymczak") == "T522");
  CHECK(soundex("pfister") == "P236");   // first-letter code absorbs the f
  CHECK(soundex("jackson") == "J250");
  CHECK(soundex("a") == "A000");
  CHECK(soundex("") == "");
}

TEST_CASE("blocking keys: composition and missing fields") {
  Record a = rec(0, "alice", "smith", "01/02/1990");
  Record b = rec(1, "alice", "smith", "01/02/1990");
  CHECK(blocking_keys(a) == blocking_keys(b));
  CHECK(blocking_keys(a).size() == 3);

  // A name typo with the same DOB still shares the DOB key.
  Record c = rec(2, "alicx", "smyth", "01/02/1990");
  std::set<std::uint64_t> ka = blocking_keys(a), kc = blocking_keys(c);
  std::vector<std::uint64_t> shared;
  std::set_intersection(ka.begin(), ka.end(), kc.begin(), kc.end(), std::back_inserter(shared));
  CHECK(!shared.empty());

  Record missing;
  missing.local_id = 9;
  CHECK(blocking_keys(missing).empty());  // never a candidate

  // No DOB: no dob key, no first-name+year key.
  Record no_dob = rec(3, "alice", "smith", "");
  CHECK(blocking_keys(no_dob).size() == 1);
}

TEST_CASE("chunk planning: sizes, order, per-chunk indexes") {
  std::vector<Record> records;
  for (int i = 0; i < 101; ++i)
    records.push_back(rec(i, "n" + std::to_string(i % 7), "l" + std::to_string(i % 5),
                          "01/02/19" + std::to_string(50 + i % 40)));

  auto plans100 = plan_chunks({records.begin(), records.begin() + 100}, 50, Side::A, 128);
  REQUIRE(plans100.size() == 2);
  CHECK(plans100[0].local_ids.size() == 50);
  CHECK(plans100[1].local_ids.size() == 50);

  auto plans101 = plan_chunks(records, 50, Side::A, 128);
  REQUIRE(plans101.size() == 3);
  CHECK(plans101[2].local_ids.size() == 1);
  CHECK(plans101[0].local_ids[0] == 0);  // input order preserved
  CHECK(plans101[1].local_ids[0] == 50);

  // In-chunk ids stay inside the chunk and the index only references them.
  for (const auto& p : plans101)
    for (const auto& [key, ids] : p.key_index)
      for (int id : ids) {
        CHECK(id >= 0);
        CHECK(static_cast<std::size_t>(id) < p.local_ids.size());
      }

  CHECK_THROWS_AS(plan_chunks(records, 129, Side::A, 128), ConfigError);
  CHECK_THROWS_AS(plan_chunks(records, 0, Side::A, 128), ConfigError);
}

TEST_CASE("cleartext candidates: subset of T, exact counts") {
  std::vector<Record> d1{rec(0, "ann", "lee", "01/02/1990"), rec(1, "bob", "ray", "03/04/1970")};
  std::vector<Record> d2{rec(0, "ann", "lee", "01/02/1990"), rec(1, "zed", "kim", "05/06/1960")};
  CandidateSet cs = cleartext_candidates(d1, d2);
  CHECK(cs.total_comparisons == 4);
  REQUIRE(cs.pairs.size() == 1);
  CHECK(cs.pairs[0] == std::make_pair<std::int64_t, std::int64_t>(0, 0));

  // Zero shared keys: empty T', RR = 1.
  std::vector<Record> d3{rec(0, "qq", "ww", "07/08/1950")};
  CandidateSet none = cleartext_candidates(d3, d2);
  CHECK(none.pairs.empty());

  // Duplicate pair from two shared keys appears once.
  std::vector<Record> da{rec(0, "ann", "lee", "01/02/1990")};
  std::vector<Record> db{rec(0, "ann", "lee", "01/02/1990")};
  CHECK(cleartext_candidates(da, db).pairs.size() == 1);
}

TEST_CASE("record-based and blocking-based chunking yield identical candidates") {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    GenConfig cfg;
    cfg.n1 = 30 + static_cast<std::int64_t>(seed % 4) * 10;
    cfg.n2 = 60;
    cfg.overlap = 15;
    cfg.seed = seed;
    GenOutput g = dataio::generate(cfg);
    auto d1 = dataio::preprocess(g.d1);
    auto d2 = dataio::preprocess(g.d2);

    CandidateSet oracle = cleartext_candidates(d1, d2);
    std::set<std::pair<std::int64_t, std::int64_t>> oracle_set(oracle.pairs.begin(),
                                                               oracle.pairs.end());

    const int chunk_size = 10 + static_cast<int>(seed % 3) * 15;
    CHECK(record_based_candidates(d1, d2, chunk_size) == oracle_set);

    auto block_chunks = chunk_by_blocks(d1, d2, chunk_size);
    std::set<std::pair<std::int64_t, std::int64_t>> blocked;
    for (const auto& chunk : block_chunks)
      for (const auto& p : chunk) CHECK(blocked.insert(p).second);  // no duplicates
    CHECK(blocked == oracle_set);
    for (std::size_t i = 0; i + 1 < block_chunks.size(); ++i)
      CHECK(block_chunks[i].size() == static_cast<std::size_t>(chunk_size));
  }
}

TEST_CASE("chunk_by_blocks: disjoint keys give zero pair chunks") {
  std::vector<Record> d1{rec(0, "ann", "lee", "01/02/1990")};
  std::vector<Record> d2{rec(0, "zed", "kim", "05/06/1960")};
  CHECK(chunk_by_blocks(d1, d2, 10).empty());
}

TEST_CASE("reduction ratio on synthetic defaults") {
  GenConfig cfg;  // 500 x 2000, overlap 200
  cfg.seed = 42;
  GenOutput g = dataio::generate(cfg);
  auto d1 = dataio::preprocess(g.d1);
  auto d2 = dataio::preprocess(g.d2);
  CandidateSet cs = cleartext_candidates(d1, d2);
  const double rr =
      1.0 - static_cast<double>(cs.pairs.size()) / static_cast<double>(cs.total_comparisons);
  CHECK(rr >= 0.99);
  // Every truth pair sharing at least one key is in T' (PC hook).
  std::set<std::pair<std::int64_t, std::int64_t>> tset(cs.pairs.begin(), cs.pairs.end());
  std::unordered_map<std::int64_t, const Record*> by1, by2;
  for (const auto& r : d1) by1[r.local_id] = &r;
  for (const auto& r : d2) by2[r.local_id] = &r;
  for (const auto& [a, b] : g.truth.pairs) {
    auto ka = blocking_keys(*by1.at(a));
    auto kb = blocking_keys(*by2.at(b));
    std::vector<std::uint64_t> shared;
    std::set_intersection(ka.begin(), ka.end(), kb.begin(), kb.end(),
                          std::back_inserter(shared));
    if (!shared.empty()) CHECK(tset.count({a, b}) == 1);
  }
}

TEST_CASE("encrypted chunks carry tokens, cardinalities, indexes and the id ladder") {
  GenConfig cfg;
  cfg.n1 = 23;
  cfg.n2 = 20;
  cfg.overlap = 5;
  cfg.seed = 9;
  GenOutput g = dataio::generate(cfg);
  auto d1 = dataio::preprocess(g.d1);

  he::ExactBackend be(he::HEParams{}, 4);
  he::KeyMaterial key = be.keygen({PartyId::P1, PartyId::P2});
  SlotEncoding enc{false, 65536, 128};
  EncodeContext ctx{&be, &key, enc, 123, true};

  auto plans = plan_chunks(d1, 10, Side::A, 128);
  REQUIRE(plans.size() == 3);
  Chunk chunk = encrypt_chunk(plans[1], d1, ctx);
  CHECK(chunk.chunk_index == 1);
  CHECK(chunk.records.size() == 10);
  CHECK(chunk.local_ids == plans[1].local_ids);
  CHECK(chunk.plain_key_index.size() == plans[1].key_index.size());

  // Decrypting with the full key exposes the expected encodings.
  for (std::size_t i = 0; i < chunk.records.size(); ++i) {
    he::PlainVec card = be.decrypt(chunk.records[i].cardinality, key);
    CHECK(card[0] == chunk.cardinalities[i]);
    he::PlainVec toks = be.decrypt(chunk.records[i].tokens, key);
    const Record* r = nullptr;
    for (const auto& cand : d1)
      if (cand.local_id == chunk.local_ids[i]) r = &cand;
    REQUIRE(r != nullptr);
    dataio::TokenVec tv = dataio::tokenize(*r, Side::A, 65536, 128);
    for (int s = 0; s < 128; ++s)
      CHECK(toks[s] == static_cast<double>(tv.slots[static_cast<std::size_t>(s)]));
  }
  he::PlainVec ladder = be.decrypt(chunk.all_ids, key);
  for (int j = 0; j < 128; ++j) CHECK(ladder[j] == j);

  // Rescaled encoding keeps everything in the comparison domain.
  SlotEncoding resc{true, 1024, 128};
  EncodeContext ctx2{&be, &key, resc, 321, false};
  Chunk chunk2 = encrypt_chunk(plans[0], d1, ctx2);
  CHECK(chunk2.plain_key_index.empty());
  he::PlainVec toks = be.decrypt(chunk2.records[0].tokens, key);
  for (double v : toks.values) {
    CHECK(v >= 0.5);
    CHECK(v < 1.5);
  }
  he::PlainVec ladder2 = be.decrypt(chunk2.all_ids, key);
  CHECK(ladder2[0] == 0.5);
  CHECK(ladder2[64] == 1.0);
}

TEST_CASE("chunk manifest lists shapes and key codes") {
  std::vector<Record> d1{rec(0, "ann", "lee", "01/02/1990"), rec(1, "bob", "ray", "03/04/1970")};
  auto plans = plan_chunks(d1, 1, Side::A, 128);
  const std::string manifest = chunk_manifest_json(plans);
  CHECK(manifest.find("\"side\": \"A\"") != std::string::npos);
  CHECK(manifest.find("\"chunk_index\": 1") != std::string::npos);
  CHECK(manifest.find("\"keys\"") != std::string::npos);
}
