#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pper/he_backend.hpp"

using namespace pper;
using namespace pper::he;

namespace {

PlainVec vec(std::initializer_list<double> head, int batch = 128) {
  return PlainVec::of(std::vector<double>(head), batch);
}

}  // namespace

TEST_CASE("keygen: collective key shapes and parameter validation") {
  ExactBackend be(HEParams{}, 1);
  KeyMaterial k = be.keygen({PartyId::P1, PartyId::P2});
  CHECK(k.secret_shares.size() == 2);
  CHECK(k.owners.size() == 2);
  CHECK(k.covers_quorum());

  KeyMaterial single = be.keygen({PartyId::P1});
  CHECK(single.secret_shares.size() == 1);

  HEParams bad;
  bad.batch_size = 127;
  CHECK_THROWS_AS(ExactBackend(bad, 1), ConfigError);

  CHECK_THROWS_AS(be.keygen({}), ConfigError);
}

TEST_CASE("table 3 defaults") {
  HEParams p;
  CHECK(p.multiplicative_depth == 2);
  CHECK(p.scale_factor_bits == 50);
  CHECK(p.batch_size == 128);
  CHECK(p.num_large_digits == 1);
  CHECK(p.first_mod_size == 60);
  CHECK_FALSE(p.bootstrapping_enabled);
  HEParams ni = HEParams::non_interactive_profile();
  CHECK(ni.multiplicative_depth == 12);
  CHECK(ni.bootstrapping_enabled);
}

TEST_CASE("encrypt/decrypt round trip and freshness") {
  ExactBackend be(HEParams{}, 7);
  KeyMaterial k = be.keygen({PartyId::P1, PartyId::P2});

  CipherVec z = be.encrypt(PlainVec::zeros(128), k);
  PlainVec out = be.decrypt(z, k);
  for (double v : out.values) CHECK(v == 0.0);

  PlainVec v = vec({1.5, -2.25, 3.0});
  CipherVec c1 = be.encrypt(v, k);
  CipherVec c2 = be.encrypt(v, k);
  CHECK(c1.serialize() != c2.serialize());  // fresh randomness
  CHECK(be.decrypt(c1, k).values == be.decrypt(c2, k).values);

  CHECK_THROWS_AS(be.encrypt(PlainVec::zeros(64), k), ShapeError);
  CHECK(c1.depth_consumed() == 0);
}

TEST_CASE("leveled backend: round-trip error within 6 sigma over 1e4 slots") {
  HEParams p;
  p.noise_sigma = 1e-9;
  LeveledBackend be(p, 99);
  KeyMaterial k = be.keygen({PartyId::P1, PartyId::P2});
  auto rng = SeedStream(3).engine();
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  int slots_checked = 0;
  while (slots_checked < 10000) {
    std::vector<double> vals(128);
    for (auto& x : vals) x = u(rng);
    CipherVec c = be.encrypt(PlainVec{vals}, k);
    PlainVec out = be.decrypt(c, k);
    for (int i = 0; i < 128; ++i) {
      CHECK(std::abs(out.values[i] - vals[i]) <= 6e-9);
      ++slots_checked;
    }
  }
}

TEST_CASE("additive and multiplicative homomorphism examples") {
  ExactBackend be(HEParams{}, 5);
  KeyMaterial k = be.keygen({PartyId::P1, PartyId::P2});

  CipherVec a = be.encrypt(vec({1, 2}), k);
  CipherVec b = be.encrypt(vec({3, 4}), k);
  PlainVec sum = be.decrypt(be.add(a, b), k);
  CHECK(sum[0] == 4);
  CHECK(sum[1] == 6);
  CHECK(sum[2] == 0);

  PlainVec v = vec({1.5, 2.5, -3.5});
  CipherVec c = be.encrypt(v, k);
  PlainVec diff = be.decrypt(be.sub(c, be.encrypt(v, k)), k);
  for (double x : diff.values) CHECK(x == 0.0);

  PlainVec with_zero = be.decrypt(be.add(c, be.encrypt(PlainVec::zeros(128), k)), k);
  CHECK(with_zero.values == v.values);

  CipherVec m = be.mul(be.encrypt(vec({2, 3}), k), be.encrypt(vec({4, 5}), k));
  PlainVec prod = be.decrypt(m, k);
  CHECK(prod[0] == 8);
  CHECK(prod[1] == 15);
  CHECK(prod[2] == 0);
  CHECK(m.depth_consumed() == 1);

  CipherVec mp = be.mul_plain(c, PlainVec::constant(128, 1.0));
  CHECK(be.decrypt(mp, k).values == v.values);
  CHECK(mp.depth_consumed() == 1);  // identity value, non-identity cost
}

TEST_CASE("homomorphism property on random vectors") {
  for (BackendKind kind : {BackendKind::exact, BackendKind::leveled}) {
    HEParams p;
    p.multiplicative_depth = 4;
    p.noise_sigma = 1e-10;
    auto be = make_backend(kind, p, 21);
    KeyMaterial k = be->keygen({PartyId::P1, PartyId::P2});
    auto rng = SeedStream(55).engine();
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<double> va(128), vb(128);
      for (auto& x : va) x = u(rng);
      for (auto& x : vb) x = u(rng);
      CipherVec a = be->encrypt(PlainVec{va}, k);
      CipherVec b = be->encrypt(PlainVec{vb}, k);
      PlainVec s = be->decrypt(be->add(a, b), k);
      PlainVec d = be->decrypt(be->sub(a, b), k);
      CipherVec mc = be->mul(a, b);
      PlainVec m = be->decrypt(mc, k);
      for (int i = 0; i < 128; ++i) {
        if (kind == BackendKind::exact) {
          CHECK(s[i] == va[i] + vb[i]);
          CHECK(d[i] == va[i] - vb[i]);
          CHECK(m[i] == va[i] * vb[i]);
        } else {
          CHECK(std::abs(s[i] - (va[i] + vb[i])) <= 6 * 3e-10 + 1e-12);
          CHECK(std::abs(m[i] - va[i] * vb[i]) <= 6 * mc.noise_estimate() + 1e-12);
        }
      }
    }
  }
}

TEST_CASE("depth budget is enforced, loudly") {
  HEParams p;  // depth 2
  ExactBackend be(p, 2);
  KeyMaterial k = be.keygen({PartyId::P1, PartyId::P2});
  CipherVec v = be.encrypt(vec({1.1}), k);
  CipherVec w = be.encrypt(vec({0.9}), k);
  CipherVec u = be.encrypt(vec({1.0}), k);
  CipherVec p1 = be.mul(v, w);
  CipherVec p2 = be.mul(p1, u);
  CHECK(p2.depth_consumed() == 2);
  CHECK_THROWS_AS(be.mul(p2, u), DepthBudgetError);
  try {
    be.mul(p2, u, "test.site");
  } catch (const DepthBudgetError& e) {
    CHECK(e.site == "test.site");
    CHECK(e.budget == 2);
  }
}

TEST_CASE("rotation: examples, group law, bijection") {
  ExactBackend be(HEParams{}, 3);
  KeyMaterial k = be.keygen({PartyId::P1, PartyId::P2});
  CipherVec x = be.encrypt(vec({1, 2, 3}), k);

  PlainVec r1 = be.decrypt(be.rotate(x, 1), k);
  CHECK(r1[0] == 2);
  CHECK(r1[1] == 3);
  CHECK(r1[2] == 0);
  CHECK(r1[127] == 1);

  CHECK(be.decrypt(be.rotate(x, 0), k).values == be.decrypt(x, k).values);

  auto rng = SeedStream(4).engine();
  for (int rep = 0; rep < 10; ++rep) {
    const int i = static_cast<int>(rng() % 300) - 150;
    const int j = static_cast<int>(rng() % 300) - 150;
    PlainVec lhs = be.decrypt(be.rotate(be.rotate(x, i), j), k);
    PlainVec rhs = be.decrypt(be.rotate(x, i + j), k);
    CHECK(lhs.values == rhs.values);
  }

  // Bijection: rotated slots are a permutation of the original.
  std::vector<double> vals(128);
  for (int i = 0; i < 128; ++i) vals[static_cast<std::size_t>(i)] = i * 1.25;
  CipherVec y = be.encrypt(PlainVec{vals}, k);
  PlainVec rot = be.decrypt(be.rotate(y, 37), k);
  std::vector<double> sorted_rot = rot.values;
  std::sort(sorted_rot.begin(), sorted_rot.end());
  std::sort(vals.begin(), vals.end());
  CHECK(sorted_rot == vals);
  CHECK(be.rotate(y, 37).depth_consumed() == y.depth_consumed());
}

TEST_CASE("bootstrap bookkeeping and gating") {
  HEParams p = HEParams::non_interactive_profile();  // depth 12, refresh 10
  ExactBackend be(p, 6);
  KeyMaterial k = be.keygen({PartyId::P1, PartyId::P2});
  CipherVec c = be.encrypt(vec({1.01}), k);
  for (int i = 0; i < 11; ++i) c = be.mul(c, be.encrypt(vec({1.0}), k));
  CHECK(c.depth_consumed() == 11);
  CipherVec fresh = be.bootstrap(c);
  CHECK(fresh.depth_consumed() == 12 - 10);
  CHECK(be.decrypt(fresh, k).values == be.decrypt(c, k).values);  // value identity

  ExactBackend no_boot(HEParams{}, 6);
  KeyMaterial k2 = no_boot.keygen({PartyId::P1});
  CipherVec c2 = no_boot.encrypt(vec({1.0}), k2);
  CHECK_THROWS_AS(no_boot.bootstrap(c2), ConfigError);
}

TEST_CASE("depth monotonicity: never decreases except via bootstrap") {
  HEParams p = HEParams::non_interactive_profile();
  ExactBackend be(p, 8);
  KeyMaterial k = be.keygen({PartyId::P1, PartyId::P2});
  auto rng = SeedStream(9).engine();
  CipherVec c = be.encrypt(vec({1.0}), k);
  int depth = 0;
  for (int step = 0; step < 60; ++step) {
    switch (rng() % 4) {
      case 0: c = be.add(c, be.encrypt(vec({0.5}), k)); break;
      case 1: c = be.rotate(c, static_cast<int>(rng() % 128)); break;
      case 2:
        if (c.depth_consumed() < p.multiplicative_depth) c = be.mul(c, be.encrypt(vec({1.0}), k));
        break;
      default: c = be.sub(c, be.encrypt(vec({0.25}), k)); break;
    }
    CHECK(c.depth_consumed() >= depth);
    depth = c.depth_consumed();
    if (depth >= 11) {
      c = be.bootstrap(c);
      depth = c.depth_consumed();
    }
  }
}

TEST_CASE("collective decryption: quorum enforcement") {
  ExactBackend be(HEParams{}, 11);
  KeyMaterial k = be.keygen({PartyId::P1, PartyId::P2});
  PlainVec v = vec({42.0});
  CipherVec c = be.encrypt(v, k);

  CHECK(be.decrypt(c, k).values == v.values);
  CHECK_THROWS_AS(be.decrypt(c, k.with_share_of(PartyId::P1)), AuthorizationError);
  CHECK_THROWS_AS(be.decrypt(c, k.public_only()), AuthorizationError);

  // Key mismatch is a protocol error, not an authorization one.
  KeyMaterial other = be.keygen({PartyId::P1, PartyId::P2});
  CHECK_THROWS_AS(be.decrypt(c, other), ProtocolError);
  CipherVec c2 = be.encrypt(v, other);
  CHECK_THROWS_AS(be.add(c, c2), ProtocolError);
}

TEST_CASE("serialization: magic headers and round trips") {
  ExactBackend be(HEParams{}, 13);
  KeyMaterial k = be.keygen({PartyId::P1, PartyId::P2});

  auto key_blob = k.serialize();
  CHECK(key_blob[0] == 'P');
  CHECK(key_blob[1] == 'P');
  CHECK(key_blob[2] == 'H');
  CHECK(key_blob[3] == 'E');
  CHECK(key_blob[4] == 1);  // version
  KeyMaterial k2 = KeyMaterial::deserialize(key_blob);
  CHECK(k2.key_id == k.key_id);
  CHECK(k2.covers_quorum());

  auto tampered = key_blob;
  tampered[0] = 'X';
  CHECK_THROWS_AS(KeyMaterial::deserialize(tampered), ShapeError);

  PlainVec v = vec({1, 2, 3.5});
  CipherVec c = be.encrypt(v, k);
  auto blob = c.serialize();
  CHECK(blob.size() == be.ciphertext_bytes());
  CipherVec c2 = be.deserialize_cipher(blob);
  CHECK(be.decrypt(c2, k).values == v.values);
  CHECK(c2.depth_consumed() == c.depth_consumed());
}

TEST_CASE("modeled sizes scale with depth and bootstrapping") {
  HEParams interactive;
  HEParams ni = HEParams::non_interactive_profile();
  CHECK(ni.ciphertext_bytes() > 3 * interactive.ciphertext_bytes());
  ExactBackend be_i(interactive, 1);
  ExactBackend be_n(ni, 1);
  KeyMaterial ki = be_i.keygen({PartyId::P1, PartyId::P2});
  KeyMaterial kn = be_n.keygen({PartyId::P1, PartyId::P2});
  CHECK(be_n.key_material_bytes(kn) > 3 * be_i.key_material_bytes(ki));
}

TEST_CASE("live ciphertext memory accounting") {
  ExactBackend be(HEParams{}, 17);
  KeyMaterial k = be.keygen({PartyId::P1});
  const std::size_t before = be.live_cipher_bytes();
  {
    std::vector<CipherVec> keep;
    for (int i = 0; i < 10; ++i) keep.push_back(be.encrypt(PlainVec::zeros(128), k));
    CHECK(be.live_cipher_bytes() >= before + 10 * be.ciphertext_bytes());
  }
  CHECK(be.live_cipher_bytes() == before);
  CHECK(be.peak_cipher_bytes() >= before + 8 * be.ciphertext_bytes());
}
