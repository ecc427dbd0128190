#include <benchmark/benchmark.h>

#include "pper/approx_ops.hpp"
#include "pper/matcher.hpp"
#include "pper/private_matrix.hpp"
#include "pper/protocol.hpp"

using namespace pper;

namespace {

struct Rig {
  Rig()
      : be(he::HEParams::non_interactive_profile(), 3),
        owners(be, tr, 3),
        session(be, owners, 1, 1e-9) {
    std::vector<double> va(128), vb(128);
    for (int i = 0; i < 128; ++i) {
      va[static_cast<std::size_t>(i)] = i;
      vb[static_cast<std::size_t>(i)] = (i % 2) ? i : i + 200;
    }
    tok_a = be.encrypt(he::PlainVec{va}, owners.public_key());
    tok_b = be.encrypt(he::PlainVec{vb}, owners.public_key());
    ra = be.encrypt(he::PlainVec::constant(128, approx::rescale_id(3, 128).value),
                    owners.public_key());
    rb = be.encrypt(he::PlainVec::constant(128, approx::rescale_id(4, 128).value),
                    owners.public_key());
  }
  he::ExactBackend be;
  protocol::Transport tr;
  protocol::OwnerCollective owners;
  protocol::P3Session session;
  he::CipherVec tok_a, tok_b, ra, rb;
};

Rig& rig() {
  static Rig r;
  return r;
}

}  // namespace

static void BM_EeqInteractive(benchmark::State& state) {
  auto& r = rig();
  for (auto _ : state) benchmark::DoNotOptimize(r.session.eeq_interactive(r.tok_a, r.tok_b));
}
BENCHMARK(BM_EeqInteractive);

static void BM_EeqNonInteractive(benchmark::State& state) {
  auto& r = rig();
  approx::CompParams p;
  for (auto _ : state) benchmark::DoNotOptimize(approx::eeq_ni(r.be, r.ra, r.rb, p));
}
BENCHMARK(BM_EeqNonInteractive);

static void BM_VrOverlapInteractive(benchmark::State& state) {
  auto& r = rig();
  pmatrix::EvalOps ops = r.session.ops();
  for (auto _ : state)
    benchmark::DoNotOptimize(matcher::vr_overlap(r.be, r.tok_a, r.tok_b, ops));
}
BENCHMARK(BM_VrOverlapInteractive);

static void BM_ObliviousUpdate(benchmark::State& state) {
  auto& r = rig();
  pmatrix::EvalOps ops = r.session.ops();
  const int M = static_cast<int>(state.range(0));
  auto mat = pmatrix::init_matrix(r.be, r.owners.public_key(), M, M, 7);
  std::vector<he::CipherVec> probes;
  std::vector<double> ladder(128);
  for (int i = 0; i < 128; ++i) ladder[static_cast<std::size_t>(i)] = approx::rescale_id(i, 128).value;
  for (int i = 0; i < M; ++i)
    probes.push_back(r.be.encrypt(
        he::PlainVec::constant(128, approx::rescale_id(i, 128).value), r.owners.public_key()));
  he::CipherVec all_ids = r.be.encrypt(he::PlainVec{ladder}, r.owners.public_key());
  for (auto _ : state)
    pmatrix::oblivious_update(r.be, mat, r.ra, r.rb, all_ids, he::PlainVec{ladder}, probes, ops);
}
BENCHMARK(BM_ObliviousUpdate)->Arg(25)->Arg(50)->Arg(100);
