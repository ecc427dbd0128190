#include <benchmark/benchmark.h>

#include "pper/he_backend.hpp"

using namespace pper;
using namespace pper::he;

namespace {

struct Fixture {
  Fixture() : be(HEParams::non_interactive_profile(), 1) {
    key = be.keygen({PartyId::P1, PartyId::P2});
    std::vector<double> va(128), vb(128);
    for (int i = 0; i < 128; ++i) {
      va[static_cast<std::size_t>(i)] = 0.5 + i / 128.0;
      vb[static_cast<std::size_t>(i)] = 1.5 - i / 256.0;
    }
    a = be.encrypt(PlainVec{va}, key);
    b = be.encrypt(PlainVec{vb}, key);
  }
  ExactBackend be;
  KeyMaterial key;
  CipherVec a, b;
};

Fixture& fix() {
  static Fixture f;
  return f;
}

}  // namespace

static void BM_Encrypt(benchmark::State& state) {
  auto& f = fix();
  PlainVec v = PlainVec::constant(128, 1.25);
  for (auto _ : state) benchmark::DoNotOptimize(f.be.encrypt(v, f.key));
}
BENCHMARK(BM_Encrypt);

static void BM_Add(benchmark::State& state) {
  auto& f = fix();
  for (auto _ : state) benchmark::DoNotOptimize(f.be.add(f.a, f.b));
}
BENCHMARK(BM_Add);

static void BM_Mul(benchmark::State& state) {
  auto& f = fix();
  for (auto _ : state) benchmark::DoNotOptimize(f.be.mul(f.a, f.b));
}
BENCHMARK(BM_Mul);

static void BM_Rotate(benchmark::State& state) {
  auto& f = fix();
  int k = 0;
  for (auto _ : state) benchmark::DoNotOptimize(f.be.rotate(f.a, ++k));
}
BENCHMARK(BM_Rotate);

static void BM_Bootstrap(benchmark::State& state) {
  auto& f = fix();
  CipherVec deep = f.be.mul(f.a, f.b);
  for (auto _ : state) benchmark::DoNotOptimize(f.be.bootstrap(deep));
}
BENCHMARK(BM_Bootstrap);

static void BM_Decrypt(benchmark::State& state) {
  auto& f = fix();
  for (auto _ : state) benchmark::DoNotOptimize(f.be.decrypt(f.a, f.key));
}
BENCHMARK(BM_Decrypt);

BENCHMARK_MAIN();
