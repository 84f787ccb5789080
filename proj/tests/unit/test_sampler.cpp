#include <doctest.h>

#include <cmath>
#include <vector>

#include "doit/error.hpp"
#include "doit/metrics.hpp"
#include "doit/sampler.hpp"

using namespace doit;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

DiffusionChain chain_for(const KernelKind& kernel, int L, int dim = 1) {
  return DiffusionChain(ScoreModel::gaussian(Eigen::VectorXd::Zero(dim), 1.0),
                        make_schedule(1.0, L, GridKind::log_snr), kernel);
}

HSpec tilt(int dim = 1, double tau = 1.0) {
  return HSpec::exp_tilt(RewardSpec::linear(Eigen::VectorXd::Ones(dim)), tau);
}

DoobConfig doob(int M, double gamma = 1.0) {
  DoobConfig c;
  c.num_samples = M;
  c.gamma = gamma;
  return c;
}

double mean_of(const SampleBatch& b) { return b.data.col(0).mean(); }

double se_of(const SampleBatch& b) {
  const Eigen::VectorXd c = b.data.col(0);
  const double m = c.mean();
  return std::sqrt((c.array() - m).square().sum() / (c.size() - 1) / c.size());
}

}  // namespace

TEST_CASE("vanilla output is deterministic and independent of the worker count") {
  const auto chain = chain_for(KernelKind::euler_ancestral(), 20, 2);
  const auto a = sample_vanilla(chain, 64, 7, 1);
  const auto b = sample_vanilla(chain, 64, 7, 3);
  const auto c = sample_vanilla(chain, 64, 7, 0);
  CHECK(a.data == b.data);
  CHECK(a.data == c.data);
  CHECK(sample_vanilla(chain, 1, 7).data == sample_vanilla(chain, 1, 7).data);
  CHECK(sample_vanilla(chain, 1, 8).data != a.data.topRows(1));
  CHECK(a.nfe_total == 64 * 20);
  CHECK(a.estimator_calls == 0);

  // Row i depends only on (seed, i).
  Sampler s(chain);
  CHECK(s.draw(7, 13).transpose() == a.data.row(13));
}

TEST_CASE("steered output is deterministic and independent of the worker count") {
  const auto chain = chain_for(KernelKind::euler_ancestral(), 10);
  const auto a = sample_doit(chain, tilt(), doob(16), 40, 3, 1);
  const auto b = sample_doit(chain, tilt(), doob(16), 40, 3, 4);
  CHECK(a.data == b.data);
  CHECK(a.truncation_events == b.truncation_events);
  DoobConfig roll = doob(4);
  roll.estimator = EstimatorKind::rollout;
  CHECK(sample_doit(chain, tilt(), roll, 12, 3, 1).data ==
        sample_doit(chain, tilt(), roll, 12, 3, 2).data);
}

TEST_CASE("single deterministic DDIM step with a zero score") {
  const auto zero = ScoreModel::external(1, [](const Eigen::VectorXd& x, double) -> Eigen::VectorXd {
    return Eigen::VectorXd::Zero(x.size());
  });
  const auto schedule = make_schedule(1.0, 1);
  const DiffusionChain chain(zero, schedule, KernelKind::ddim(0.0));
  const auto batch = sample_vanilla(chain, 5, 11);
  const double factor = std::sqrt(schedule.alpha_bar(0) / schedule.alpha_bar(1));
  for (int i = 0; i < 5; ++i) {
    RandomStream init(11, StreamFamily::initial, static_cast<std::uint32_t>(i));
    const double x_T = init.normal();
    CHECK(batch.data(i, 0) == doctest::Approx(factor * x_T).epsilon(1e-15));
  }
}

TEST_CASE("gamma = 0 reproduces vanilla bit for bit") {
  for (const auto& kernel : {KernelKind::euler_ancestral(), KernelKind::ddim(1.0)}) {
    const auto chain = chain_for(kernel, 15, 2);
    const auto van = sample_vanilla(chain, 50, 99);
    const auto sur = sample_doit(chain, tilt(2), doob(32, 0.0), 50, 99);
    CHECK(van.data == sur.data);
    CHECK(van.nfe_total == sur.nfe_total);
    DoobConfig roll = doob(3, 0.0);
    roll.estimator = EstimatorKind::rollout;
    CHECK(sample_doit(chain, tilt(2), roll, 10, 99).data == van.data.topRows(10));
  }
}

TEST_CASE("accounting") {
  const auto chain = chain_for(KernelKind::euler_ancestral(), 3);
  const auto proto = sample_doit_prototypical(chain, tilt(), doob(2), 1, 5);
  CHECK(prototypical_nfe(3, 2) == 3 + 2 * (1 + 2));
  CHECK(proto.nfe_total == prototypical_nfe(3, 2));
  CHECK(proto.estimator_calls == 2);

  const auto chain20 = chain_for(KernelKind::euler_ancestral(), 20);
  const auto van = sample_vanilla(chain20, 30, 1);
  const auto sur = sample_doit(chain20, tilt(), doob(64), 30, 1);
  CHECK(sur.nfe_total == van.nfe_total);
  CHECK(sur.estimator_calls == 30 * 19);
  CHECK(sur.truncation_rate >= 0.0);
  CHECK(sur.truncation_rate <= 1.0);

  DoobConfig gated = doob(8);
  gated.l_star = 5;
  CHECK(sample_doit(chain20, tilt(), gated, 10, 1).estimator_calls == 10 * 4);
}

TEST_CASE("a zero-noise corrected step fails before sampling") {
  const auto chain = chain_for(KernelKind::ddim(0.0), 10);
  try {
    Sampler s(chain, tilt(), doob(8), SamplerMode::doit);
    FAIL("expected a configuration error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::config);
  }
  CHECK_THROWS_AS(Sampler(chain, tilt(), doob(8), SamplerMode::prototypical), Error);
  // l* = 1 corrects nothing, so a deterministic kernel is fine.
  DoobConfig off = doob(8);
  off.l_star = 1;
  CHECK(sample_doit(chain, tilt(), off, 4, 2).data == sample_vanilla(chain, 4, 2).data);
}

TEST_CASE("invalid runs") {
  const auto chain = chain_for(KernelKind::euler_ancestral(), 5);
  CHECK_THROWS_AS(sample_vanilla(chain, 0, 1), Error);
  CHECK_THROWS_AS(sample_doit(chain, tilt(), doob(0), 4, 1), Error);
  const auto ext = ScoreModel::external(1, [](const Eigen::VectorXd& x, double) -> Eigen::VectorXd {
    return -x;
  });
  const DiffusionChain echain(ext, make_schedule(1.0, 5), KernelKind::euler_ancestral());
  CHECK_THROWS_AS(Sampler(echain, tilt(), doob(4), SamplerMode::doit), Error);
  DoobConfig frozen = doob(4);
  frozen.jacobian = JacobianMode::frozen;
  CHECK(sample_doit(echain, tilt(), frozen, 4, 1).data.allFinite());
}

TEST_CASE("best of K") {
  const auto reward = RewardSpec::linear(vec({1.0}));
  const InnerSampler inner = [](std::uint64_t seed, std::uint32_t i) {
    RandomStream rs(seed, StreamFamily::auxiliary, i);
    return Eigen::VectorXd::Constant(1, rs.normal());
  };
  const auto one = best_of_k(inner, 1, reward, 4, 9);
  CHECK(one.sample == inner(4, 9));
  CHECK(one.index == 0);

  const InnerSampler fixed = [](std::uint64_t, std::uint32_t) { return Eigen::VectorXd::Constant(1, 0.25); };
  for (int K : {1, 3, 8}) {
    const auto b = best_of_k(fixed, K, reward, 1);
    CHECK(b.sample[0] == 0.25);
    CHECK(b.index == 0);
  }

  const auto best = best_of_k(inner, 16, reward, 4);
  for (std::uint32_t k = 0; k < 16; ++k) CHECK(inner(4, k)[0] <= best.reward);
  CHECK(inner(4, static_cast<std::uint32_t>(best.index))[0] == best.reward);
  CHECK_THROWS_AS(best_of_k(inner, 0, reward, 4), Error);
}

TEST_CASE("stochastic DDIM and Euler-ancestral agree in law") {
  const auto ddim = chain_for(KernelKind::ddim(1.0), 100);
  const auto ea = chain_for(KernelKind::euler_ancestral(), 100);
  const auto a = sample_vanilla(ddim, 50000, 1);
  const auto b = sample_vanilla(ea, 50000, 2);
  CHECK(wasserstein_1d(a.data.col(0), b.data.col(0)) < 0.02);
}

TEST_CASE("mean reward grows with gamma") {
  const auto chain = chain_for(KernelKind::euler_ancestral(), 20);
  std::vector<double> means, ses;
  for (double gamma : {0.0, 0.25, 0.5, 1.0}) {
    const auto b = sample_doit(chain, tilt(), doob(64, gamma), 10000, 17);
    means.push_back(mean_of(b));
    ses.push_back(se_of(b));
  }
  int inversions = 0;
  for (std::size_t i = 1; i < means.size(); ++i) {
    if (means[i] < means[i - 1]) {
      ++inversions;
      CHECK(means[i - 1] - means[i] < 2.0 * std::hypot(ses[i], ses[i - 1]));
    }
  }
  CHECK(inversions <= 1);
  CHECK(means.back() > 0.8);
}
