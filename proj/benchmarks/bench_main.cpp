#include <random>

#include <benchmark/benchmark.h>

#include "gmdyn/dmft.hpp"
#include "gmdyn/simulator.hpp"

using namespace gmdyn;

namespace {

const MixtureSpec kTwo{ClusterKind::TwoCluster, 0.5, 0.0, 0.5};

KernelSet smooth_kernels(std::size_t n) {
  KernelSet k = KernelSet::zeros(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    k.lambda_hat(ii) = 0.3;
    k.mu(ii) = -0.1;
    k.m(ii) = 0.05 * static_cast<double>(i) / static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      const double gap = std::abs(static_cast<double>(i) - static_cast<double>(j));
      k.noise(ii, jj) = 0.2 * std::exp(-0.05 * gap) + (i == j ? 0.01 : 0.0);
      if (j < i) k.memory(ii, jj) = -0.1 * std::exp(-0.1 * gap);
    }
  }
  return k;
}

}  // namespace

static void BM_GdStep(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  RunParams p;
  p.alpha = 2;
  p.d = d;
  RandomStream rng(1);
  const Dataset data = sample_dataset(kTwo, d, 2 * d, rng);
  Eigen::VectorXd w = init_weights(d, 0.01, rng);
  const MaskState mask{Eigen::VectorXd::Ones(static_cast<Eigen::Index>(2 * d))};
  const LossModel model = kTwo.loss_model();
  for (auto _ : state) {
    w = gd_step(p, model, w, data, mask);
    benchmark::DoNotOptimize(w.data());
  }
}
BENCHMARK(BM_GdStep)->Arg(500)->Arg(2000);

static void BM_HAndResponsePath(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const TimeGrid grid{0.2, n - 1};
  const KernelSet k = smooth_kernels(n);
  const EffectiveProcess proc{2.0, 0.5, 0.0, kTwo.loss_model()};
  PathDraws d;
  d.h0 = 0.4;
  d.h_init = 0.1;
  d.mask = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n));
  RandomStream rng(2);
  d.noise = NoiseSampler(k.noise).sample(rng);
  for (auto _ : state) {
    const Eigen::VectorXd h = simulate_h_path(k, proc, d, grid);
    const RowMatrix g = simulate_response_path(k, proc, h, d, grid);
    benchmark::DoNotOptimize(g.data());
  }
}
BENCHMARK(BM_HAndResponsePath)->Arg(101)->Arg(251);

static void BM_NoiseSample(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const NoiseSampler sampler(smooth_kernels(n).noise);
  RandomStream rng(3);
  for (auto _ : state) benchmark::DoNotOptimize(sampler.sample(rng).data());
}
BENCHMARK(BM_NoiseSample)->Arg(101)->Arg(251);

static void BM_SolveDyson(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const TimeGrid grid{0.2, n - 1};
  const KernelSet k = smooth_kernels(n);
  for (auto _ : state) {
    const DysonSolution s = solve_dyson(k, 0.0, 0.01, grid);
    benchmark::DoNotOptimize(s.correlation.data());
  }
}
BENCHMARK(BM_SolveDyson)->Arg(101)->Arg(251);
BENCHMARK_MAIN();
