#include <benchmark/benchmark.h>

#include "dcs/engines.hpp"
#include "dcs/mixing.hpp"
#include "dcs/topology.hpp"

using namespace dcs;

namespace {

TimeVaryingTopology make_topology(int n, int window, long horizon) {
  Rng rng(17);
  return build_joint_topology(n, 0.9, 2, window, horizon, rng);
}

std::vector<CoordinateMask> make_masks(int count, int d, double q,
                                       std::uint64_t seed) {
  Rng rng(seed);
  std::vector<CoordinateMask> masks;
  for (int i = 0; i < count; ++i) masks.push_back(draw_mask(d, q, rng));
  return masks;
}

}  // namespace

static void BM_DrawMask(benchmark::State& state) {
  Rng rng(5);
  const int d = static_cast<int>(state.range(0));
  for (auto _ : state) {
    auto mask = draw_mask(d, 0.1, rng);
    benchmark::DoNotOptimize(mask);
  }
}
BENCHMARK(BM_DrawMask)->Arg(64)->Arg(512);

static void BM_NormalizeWeights(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  auto topo = make_topology(n, 1, 1);
  auto weights = base_weights(topo.snapshots[0]);
  auto masks = make_masks(n, 64, 0.25, 3);
  for (auto _ : state) {
    auto a = normalize_in(weights.w_in, masks, 7);
    benchmark::DoNotOptimize(a);
  }
}
BENCHMARK(BM_NormalizeWeights)->Arg(10)->Arg(50)->Arg(100);

static void BM_WindowSpectrum(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const int b = 5;
  auto topo = make_topology(n, b, b);
  std::vector<std::vector<CoordinateMask>> step_masks(b);
  for (int s = 0; s < b; ++s)
    step_masks[s] = make_masks(2 * n, 8, 0.5, 100 + s);
  for (auto _ : state) {
    auto wm = window_matrices(topo, 0, step_masks, 0.05, 1);
    auto rep = spectral_sigma(wm.m_blocks[0], wm.b_products[0]);
    benchmark::DoNotOptimize(rep.sigma);
  }
}
BENCHMARK(BM_WindowSpectrum)->Arg(10)->Arg(50)->Arg(100);

static void BM_ConsensusStep(benchmark::State& state) {
  const int n = 10, d = 64;
  const long steps = state.range(0);
  auto topo = make_topology(n, 1, steps);
  Rng init(4);
  Eigen::MatrixXd x0 = Eigen::MatrixXd::NullaryExpr(
      n, d, [&](Eigen::Index, Eigen::Index) { return init.normal(); });
  for (auto _ : state) {
    auto trace = consensus_run(topo, x0, 0.05, 0.25, steps, 9);
    benchmark::DoNotOptimize(trace.final_residual);
  }
  state.SetItemsProcessed(state.iterations() * steps);
}
BENCHMARK(BM_ConsensusStep)->Arg(100)->Unit(benchmark::kMillisecond);

static void BM_SvrgStep(benchmark::State& state) {
  const int n = 10, d = 64;
  const long steps = state.range(0);
  auto topo = make_topology(n, 1, steps);
  Rng data_rng(6);
  auto inst = gen_linreg(n, 50, d, 0.01, data_rng);
  auto consts = constants(inst.data);
  Eigen::VectorXd x_star = inst.planted_x;
  Rng init(4);
  Eigen::MatrixXd x0 = Eigen::MatrixXd::NullaryExpr(
      n, d, [&](Eigen::Index, Eigen::Index) { return init.normal(); });
  EngineConfig cfg;
  cfg.kind = EngineKind::svrg;
  cfg.alpha = 1e-9;
  cfg.window = 1;
  cfg.inner_steps = steps;
  cfg.epochs = 1;
  cfg.q = 0.25;
  cfg.seed = 2;
  cfg.record_stride = steps;
  for (auto _ : state) {
    auto trace = svrg_run(topo, inst.data, consts, x_star, x0, cfg);
    benchmark::DoNotOptimize(trace.final_residual);
  }
  state.SetItemsProcessed(state.iterations() * steps);
}
BENCHMARK(BM_SvrgStep)->Arg(100)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
