#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "pper/approx_ops.hpp"
#include "pper/blocking.hpp"
#include "pper/private_matrix.hpp"
#include "pper/protocol.hpp"

using namespace pper;
using namespace pper::pmatrix;

namespace {

// Interactive equality at depth 2 exercises the refresh path; the exact
// backend keeps the brute-force oracle checks exact.
struct Rig {
  Rig()
      : be(he::HEParams{}, 17),
        owners(be, tr, 17),
        session(be, owners, /*task_seed=*/5, /*xi=*/1e-9),
        ops(session.ops()) {}

  he::CipherVec enc_id(int id) {
    return be.encrypt(he::PlainVec::constant(128, id), owners.public_key());
  }
  he::CipherVec ladder_cipher() {
    std::vector<double> ladder(128);
    for (int j = 0; j < 128; ++j) ladder[static_cast<std::size_t>(j)] = j;
    return be.encrypt(he::PlainVec{ladder}, owners.public_key());
  }
  he::PlainVec ladder_plain() {
    std::vector<double> ladder(128);
    for (int j = 0; j < 128; ++j) ladder[static_cast<std::size_t>(j)] = j;
    return he::PlainVec{ladder};
  }
  std::vector<he::CipherVec> probes(int m) {
    std::vector<he::CipherVec> out;
    for (int i = 0; i < m; ++i) out.push_back(enc_id(i));
    return out;
  }
  std::vector<he::PlainVec> decrypt_rows(const CandidateMatrix& mat) {
    std::vector<he::PlainVec> rows;
    for (const auto& r : mat.rows) rows.push_back(be.decrypt(r, owners.full_key()));
    return rows;
  }

  he::ExactBackend be;
  protocol::Transport tr;
  protocol::OwnerCollective owners;
  protocol::P3Session session;
  EvalOps ops;
};

}  // namespace

TEST_CASE("init_matrix shapes and validation") {
  Rig rig;
  CandidateMatrix m = init_matrix(rig.be, rig.owners.public_key(), 3, 4, 1);
  CHECK(m.rows.size() == 3);
  CHECK(m.cols == 4);
  for (const auto& row : rig.decrypt_rows(m))
    for (double v : row.values) CHECK(v == 0.0);

  CandidateMatrix empty = init_matrix(rig.be, rig.owners.public_key(), 0, 4, 1);
  CHECK(empty.rows.empty());

  CHECK_THROWS_AS(init_matrix(rig.be, rig.owners.public_key(), 3, 129, 1), ConfigError);
}

TEST_CASE("oblivious update: single cell, dedup, multiple cells") {
  Rig rig;
  const he::CipherVec all_cols = rig.ladder_cipher();
  const he::PlainVec all_rows = rig.ladder_plain();
  auto probes = rig.probes(3);

  CandidateMatrix m = init_matrix(rig.be, rig.owners.public_key(), 3, 4, 2);
  oblivious_update(rig.be, m, rig.enc_id(1), rig.enc_id(2), all_cols, all_rows, probes, rig.ops);

  auto rows = rig.decrypt_rows(m);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j)
      CHECK(std::abs(rows[static_cast<std::size_t>(i)][j] -
                     (i == 1 && j == 2 ? 1.0 : 0.0)) <= 1e-6);

  // The same cell updated twice (two shared keys) stays a single 1.
  oblivious_update(rig.be, m, rig.enc_id(1), rig.enc_id(2), all_cols, all_rows, probes, rig.ops);
  auto rows2 = rig.decrypt_rows(m);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j)
      CHECK(std::abs(rows2[static_cast<std::size_t>(i)][j] -
                     rows[static_cast<std::size_t>(i)][j]) <= 1e-6);

  oblivious_update(rig.be, m, rig.enc_id(0), rig.enc_id(0), all_cols, all_rows, probes, rig.ops);
  oblivious_update(rig.be, m, rig.enc_id(2), rig.enc_id(3), all_cols, all_rows, probes, rig.ops);
  auto rows3 = rig.decrypt_rows(m);
  std::set<std::pair<int, int>> expect{{1, 2}, {0, 0}, {2, 3}};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j)
      CHECK(std::abs(rows3[static_cast<std::size_t>(i)][j] -
                     (expect.count({i, j}) ? 1.0 : 0.0)) <= 1e-6);
}

TEST_CASE("row-parallel oblivious update matches the sequential result") {
  Rig seq_rig, par_rig;
  const he::PlainVec all_rows = seq_rig.ladder_plain();

  CandidateMatrix seq_m = init_matrix(seq_rig.be, seq_rig.owners.public_key(), 8, 8, 3);
  CandidateMatrix par_m = init_matrix(par_rig.be, par_rig.owners.public_key(), 8, 8, 3);
  oblivious_update(seq_rig.be, seq_m, seq_rig.enc_id(5), seq_rig.enc_id(6),
                   seq_rig.ladder_cipher(), all_rows, seq_rig.probes(8), seq_rig.ops, false);
  oblivious_update(par_rig.be, par_m, par_rig.enc_id(5), par_rig.enc_id(6),
                   par_rig.ladder_cipher(), all_rows, par_rig.probes(8), par_rig.ops, true);

  auto a = seq_rig.decrypt_rows(seq_m);
  auto b = par_rig.decrypt_rows(par_m);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j)
      CHECK(std::abs(a[static_cast<std::size_t>(i)][j] -
                     b[static_cast<std::size_t>(i)][j]) <= 1e-6);
}

TEST_CASE("plain-row update agrees with the oblivious one") {
  Rig rig;
  const he::CipherVec all_cols = rig.ladder_cipher();
  const he::PlainVec all_rows = rig.ladder_plain();
  auto probes = rig.probes(4);

  CandidateMatrix oblivious = init_matrix(rig.be, rig.owners.public_key(), 4, 4, 4);
  CandidateMatrix plain = init_matrix(rig.be, rig.owners.public_key(), 4, 4, 5);
  oblivious_update(rig.be, oblivious, rig.enc_id(2), rig.enc_id(1), all_cols, all_rows, probes,
                   rig.ops);
  plain_row_update(rig.be, plain, 2, rig.enc_id(1), all_cols, rig.ops);
  auto a = rig.decrypt_rows(oblivious);
  auto b = rig.decrypt_rows(plain);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      CHECK(std::abs(a[static_cast<std::size_t>(i)][j] -
                     b[static_cast<std::size_t>(i)][j]) <= 1e-6);

  CHECK_THROWS_AS(plain_row_update(rig.be, plain, 4, rig.enc_id(1), all_cols, rig.ops),
                  RangeError);
}

TEST_CASE("obfuscation: zero stays zero, ones land in [0.5, 2], candidates survive") {
  Rig rig;
  const he::CipherVec all_cols = rig.ladder_cipher();
  const he::PlainVec all_rows = rig.ladder_plain();
  auto probes = rig.probes(3);

  CandidateMatrix zeros = init_matrix(rig.be, rig.owners.public_key(), 3, 4, 6);
  obfuscate(rig.be, zeros, SeedStream(10), rig.ops);
  for (const auto& row : rig.decrypt_rows(zeros))
    for (double v : row.values) CHECK(std::abs(v) <= 1e-6);

  CandidateMatrix m = init_matrix(rig.be, rig.owners.public_key(), 3, 4, 7);
  oblivious_update(rig.be, m, rig.enc_id(1), rig.enc_id(2), all_cols, all_rows, probes, rig.ops);
  oblivious_update(rig.be, m, rig.enc_id(0), rig.enc_id(3), all_cols, all_rows, probes, rig.ops);
  obfuscate(rig.be, m, SeedStream(11), rig.ops);
  auto rows = rig.decrypt_rows(m);
  std::set<std::pair<int, int>> expect{{1, 2}, {0, 3}};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 4; ++j) {
      const double v = rows[static_cast<std::size_t>(i)][j];
      if (expect.count({i, j})) {
        CHECK(std::abs(v) >= 0.5 - 1e-6);
        CHECK(std::abs(v) <= 2.0 + 1e-6);
      } else {
        CHECK(std::abs(v) <= 1e-6);
      }
    }
  }
  CHECK(extract_candidates(rows, 4, 0.25) ==
        std::vector<std::pair<int, int>>{{0, 3}, {1, 2}});
}

TEST_CASE("extract_candidates thresholding") {
  he::PlainVec row = he::PlainVec::of({0.0, 1.3, 0.0001, 0.0}, 128);
  auto cands = extract_candidates({row}, 4, 0.25);
  REQUIRE(cands.size() == 1);
  CHECK(cands[0] == std::make_pair(0, 1));
  CHECK(extract_candidates({he::PlainVec::zeros(128)}, 4, 0.25).empty());
}

TEST_CASE("end-to-end oracle equality over seeded small chunk pairs") {
  using blocking::SlotEncoding;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    dataio::GenConfig cfg;
    cfg.n1 = 18;
    cfg.n2 = 20;
    cfg.overlap = 8;
    cfg.seed = seed;
    auto g = dataio::generate(cfg);
    auto d1 = dataio::preprocess(g.d1);
    auto d2 = dataio::preprocess(g.d2);

    Rig rig;
    SlotEncoding enc{false, 65536, 128};
    blocking::EncodeContext ctx{&rig.be, &rig.owners.public_key(), enc, seed, false};
    auto plans_a = blocking::plan_chunks(d1, 20, dataio::Side::A, 128);
    auto plans_b = blocking::plan_chunks(d2, 20, dataio::Side::B, 128);
    blocking::Chunk ca = blocking::encrypt_chunk(plans_a[0], d1, ctx);
    blocking::Chunk cb = blocking::encrypt_chunk(plans_b[0], d2, ctx);

    const int M = static_cast<int>(ca.records.size());
    const int N = static_cast<int>(cb.records.size());
    CandidateMatrix mat = init_matrix(rig.be, rig.owners.public_key(), M, N, seed);
    auto probes = rig.probes(M);
    const he::PlainVec all_rows = rig.ladder_plain();
    for (const auto& [key, rows] : ca.key_index) {
      auto it = cb.key_index.find(key);
      if (it == cb.key_index.end()) continue;
      for (const auto& r : rows)
        for (const auto& c : it->second)
          oblivious_update(rig.be, mat, r, c, cb.all_ids, all_rows, probes, rig.ops);
    }
    obfuscate(rig.be, mat, SeedStream(seed).sub("obf"), rig.ops);
    auto cands = extract_candidates(rig.decrypt_rows(mat), N, 0.25);

    std::set<std::pair<std::int64_t, std::int64_t>> got;
    for (const auto& [i, j] : cands)
      got.emplace(ca.local_ids[static_cast<std::size_t>(i)],
                  cb.local_ids[static_cast<std::size_t>(j)]);
    auto oracle = blocking::cleartext_candidates(d1, d2);
    std::set<std::pair<std::int64_t, std::int64_t>> expect(oracle.pairs.begin(),
                                                           oracle.pairs.end());
    CHECK(got == expect);
  }
}
