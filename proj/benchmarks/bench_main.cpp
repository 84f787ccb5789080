#include <benchmark/benchmark.h>

#include "doit/doob.hpp"
#include "doit/sampler.hpp"

namespace {

doit::DiffusionChain gaussian_chain(int dim, int steps) {
  return doit::DiffusionChain(doit::ScoreModel::gaussian(Eigen::VectorXd::Zero(dim), 1.0),
                              doit::make_schedule(1.0, steps, doit::GridKind::log_snr),
                              doit::KernelKind::euler_ancestral());
}

doit::HSpec linear_tilt(int dim) {
  return doit::HSpec::exp_tilt(doit::RewardSpec::linear(Eigen::VectorXd::Ones(dim)), 1.0);
}

void BM_SurrogateEstimate(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  const int M = static_cast<int>(state.range(1));
  const auto chain = gaussian_chain(dim, 100);
  doit::DoobConfig cfg;
  cfg.num_samples = M;
  doit::DoobEstimator est(chain, linear_tilt(dim), cfg);
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(dim, 0.3);
  const doit::ScoreEval ev = doit::score_for_estimate(chain, x, 50, cfg.jacobian);
  std::uint32_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(est.surrogate(x, 50, ev, {7, i++}).grad_log_h_hat.data());
  }
  state.SetItemsProcessed(state.iterations() * M);
}
BENCHMARK(BM_SurrogateEstimate)->Args({1, 64})->Args({1, 1024})->Args({16, 256})->Args({64, 256});

void BM_RolloutEstimate(benchmark::State& state) {
  const int M = static_cast<int>(state.range(0));
  const auto chain = gaussian_chain(2, 20);
  doit::DoobConfig cfg;
  cfg.num_samples = M;
  cfg.estimator = doit::EstimatorKind::rollout;
  doit::DoobEstimator est(chain, linear_tilt(2), cfg);
  const Eigen::VectorXd x = Eigen::VectorXd::Zero(2);
  const doit::ScoreEval ev = doit::score_for_estimate(chain, x, 20, cfg.jacobian);
  std::uint32_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(est.rollout(x, 20, ev, {7, i++}).h_hat);
  }
}
BENCHMARK(BM_RolloutEstimate)->Arg(16)->Arg(128);

void BM_VanillaTrajectory(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  const auto chain = gaussian_chain(dim, 100);
  const doit::Sampler sampler(chain);
  std::uint32_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(sampler.draw(3, i++).data());
}
BENCHMARK(BM_VanillaTrajectory)->Arg(1)->Arg(64);

void BM_SteeredTrajectory(benchmark::State& state) {
  const int M = static_cast<int>(state.range(0));
  const auto chain = gaussian_chain(1, 100);
  doit::DoobConfig cfg;
  cfg.num_samples = M;
  const doit::Sampler sampler(chain, linear_tilt(1), cfg, doit::SamplerMode::doit);
  std::uint32_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(sampler.draw(3, i++).data());
}
BENCHMARK(BM_SteeredTrajectory)->Arg(64)->Arg(1024);

void BM_GmmScore(benchmark::State& state) {
  const int K = static_cast<int>(state.range(0));
  std::vector<doit::GaussianComponent> comps;
  for (int k = 0; k < K; ++k) {
    comps.push_back({1.0 / K, Eigen::VectorXd::Constant(8, k - K / 2.0), 0.5});
  }
  const auto model = doit::ScoreModel::mixture(comps);
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(8, 0.1);
  Eigen::VectorXd out(8);
  for (auto _ : state) {
    model.score_into(x, 0.3, out);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_GmmScore)->Arg(2)->Arg(16);

}  // namespace

BENCHMARK_MAIN();
