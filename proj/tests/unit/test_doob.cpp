#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "doit/doob.hpp"
#include "doit/error.hpp"
#include "doit/oracle.hpp"

using namespace doit;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

DiffusionChain gaussian_chain(const KernelKind& kernel, int L = 100, int dim = 1) {
  return DiffusionChain(ScoreModel::gaussian(Eigen::VectorXd::Zero(dim), 1.0),
                        make_schedule(1.0, L, GridKind::log_snr), kernel);
}

HSpec linear_tilt(int dim, double tau = 1.0, double r_max = 1e300) {
  return HSpec::exp_tilt(RewardSpec::linear(Eigen::VectorXd::Ones(dim)).with_r_max(r_max), tau);
}

DoobConfig config(int M, TruncationRule eta = TruncationRule::none()) {
  DoobConfig c;
  c.num_samples = M;
  c.eta = eta;
  return c;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST_CASE("truncation levels") {
  CHECK(truncation_level(64, TruncationRule::decaying()) == doctest::Approx(1.0 / std::numbers::e));
  CHECK(truncation_level(1000000, TruncationRule::decaying()) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(truncation_level(5, TruncationRule::none()) == 0.0);
  CHECK(truncation_level(5, TruncationRule::fixed(0.2)) == 0.2);
  CHECK_THROWS_AS(truncation_level(0, TruncationRule::decaying()), Error);
  CHECK_THROWS_AS(truncation_level(4, TruncationRule::fixed(-1.0)), Error);
}

TEST_CASE("config validation") {
  DoobConfig c;
  CHECK_NOTHROW(c.validate(10));
  c.num_samples = 0;
  CHECK_THROWS_AS(c.validate(10), Error);
  c = DoobConfig{};
  c.gamma = -0.5;
  CHECK_THROWS_AS(c.validate(10), Error);
  c = DoobConfig{};
  c.l_star = 11;
  CHECK_THROWS_AS(c.validate(10), Error);
  c.l_star = 0;
  CHECK(c.effective_l_star(10) == 10);
  c.eta = TruncationRule::fixed(-0.1);
  CHECK_THROWS_AS(c.validate(10), Error);
}

TEST_CASE("single draw reduces to the transition log-density gradient") {
  for (const auto& kernel : {KernelKind::ddim(1.0), KernelKind::ddim(0.5)}) {
    const auto chain = gaussian_chain(kernel, 20, 2);
    const Eigen::VectorXd x = vec({0.3, -0.8});
    const int l = 7;
    const ScoreEval ev = score_for_estimate(chain, x, l, JacobianMode::exact);
    const TrajectoryKey key{99, 4};
    for (double tau : {0.3, 1.0, 7.0}) {
      const DoobEstimate est = estimate_surrogate(x, l, ev, chain, linear_tilt(2, tau), config(1), key);
      const auto m = transition_moments(kernel, x, ev.value, l, chain.schedule());
      RandomStream rs(key.seed, StreamFamily::lookahead, key.sample, l, 0);
      Eigen::VectorXd z(2);
      rs.fill_normal(z);
      const Eigen::VectorXd y = m.mean + m.std * z;
      const Eigen::VectorXd expected = transition_logdensity_grad(x, y, m, *ev.jacobian);
      CHECK(est.h_hat == 1.0);
      CHECK((est.grad_log_h_hat - expected).cwiseAbs().maxCoeff() < 1e-12);
      CHECK(est.nfe_added == 0);
    }
  }
}

TEST_CASE("all-zero indicator weights give a zero correction") {
  const auto chain = gaussian_chain(KernelKind::euler_ancestral(), 20);
  const auto h = HSpec::indicator(RewardSpec::linear(vec({1.0})), 100.0);
  const Eigen::VectorXd x = vec({0.1});
  for (auto eta : {TruncationRule::none(), TruncationRule::decaying()}) {
    const auto est = estimate_surrogate(x, 10, score_for_estimate(chain, x, 10, JacobianMode::exact),
                                        chain, h, config(32, eta), {1, 0});
    CHECK(est.h_hat == 0.0);
    CHECK(est.grad_h_hat.norm() == 0.0);
    CHECK(est.grad_log_h_hat.norm() == 0.0);
    CHECK(est.truncation_active);
  }
}

TEST_CASE("ratio is invariant to rescaling h") {
  const auto chain = gaussian_chain(KernelKind::euler_ancestral(), 30, 2);
  const Eigen::VectorXd x = vec({0.4, 0.2});
  const int l = 12;
  const ScoreEval ev = score_for_estimate(chain, x, l, JacobianMode::exact);
  const auto base = linear_tilt(2, 1.0, 20.0);
  DoobConfig shifted = config(256);
  DoobConfig absolute = shifted;
  absolute.weights = WeightScale::absolute;
  const auto a = estimate_surrogate(x, l, ev, chain, base, shifted, {5, 1});
  const auto b = estimate_surrogate(x, l, ev, chain, base, absolute, {5, 1});
  CHECK(a.h_hat > b.h_hat);
  CHECK((a.grad_log_h_hat - b.grad_log_h_hat).cwiseAbs().maxCoeff() < 1e-12);

  // A larger declared bound multiplies every absolute weight by the same constant.
  const auto c = estimate_surrogate(x, l, ev, chain, linear_tilt(2, 1.0, 25.0), absolute, {5, 1});
  CHECK(c.h_hat == doctest::Approx(b.h_hat * std::exp(-5.0)).epsilon(1e-12));
  CHECK((c.grad_log_h_hat - b.grad_log_h_hat).cwiseAbs().maxCoeff() < 1e-12);

  // Shifted weights never see r_max, so any rescaling of h is bitwise invisible.
  const auto d = estimate_surrogate(x, l, ev, chain, linear_tilt(2, 1.0, 25.0), shifted, {5, 1});
  CHECK(d.grad_log_h_hat == a.grad_log_h_hat);

  // The surrogate is deterministic in its key.
  const auto a2 = estimate_surrogate(x, l, ev, chain, base, shifted, {5, 1});
  CHECK(a2.grad_log_h_hat == a.grad_log_h_hat);
}

TEST_CASE("grad_log_h_hat is grad_h_hat over the floored h_hat") {
  const auto chain = gaussian_chain(KernelKind::euler_ancestral(), 30);
  const Eigen::VectorXd x = vec({-0.3});
  const auto h = HSpec::indicator(RewardSpec::linear(vec({1.0})), 0.8);
  for (int M : {4, 64, 1024}) {
    for (auto rule : {TruncationRule::decaying(), TruncationRule::fixed(0.6), TruncationRule::none()}) {
      const auto est = estimate_surrogate(x, 25, score_for_estimate(chain, x, 25, JacobianMode::exact),
                                          chain, h, config(M, rule), {3, 2});
      const double eta = truncation_level(M, rule);
      const double denom = std::max(est.h_hat, eta);
      CHECK(est.eta == eta);
      CHECK(est.truncation_active == (est.h_hat < eta || est.h_hat == 0.0));
      if (denom > 0) CHECK((est.grad_log_h_hat - est.grad_h_hat / denom).norm() == 0.0);
      CHECK(est.h_hat >= 0.0);
      CHECK(est.h_hat <= 1.0);
    }
  }
}

TEST_CASE("surrogate matches the exact correction when one lookahead spans the chain") {
  // The lookahead variance must dominate the remaining path for the surrogate to be
  // accurate, and the Monte Carlo spread scales as 1 / (sigma sqrt(M)): a short chain
  // satisfies both (bias 0.015, spread 0.006 here).
  const auto chain = gaussian_chain(KernelKind::euler_ancestral(), 3);
  const auto hspec = linear_tilt(1, 1.0, 8.0);
  const int l = 3;
  const Eigen::VectorXd x = vec({0.5});
  const auto law = backward_affine_law(chain, l, 0);
  const Eigen::VectorXd exact = exact_grad_log_h(law, hspec, x);
  for (std::uint32_t rep = 0; rep < 3; ++rep) {
    const auto est = estimate_surrogate(x, l, score_for_estimate(chain, x, l, JacobianMode::exact),
                                        chain, hspec, config(100000), {2024, rep});
    CHECK((est.grad_log_h_hat - exact).norm() < 0.05);
  }
}

TEST_CASE("rollout estimator accounting and preconditions") {
  const auto chain = gaussian_chain(KernelKind::euler_ancestral(), 12);
  const auto hspec = linear_tilt(1);
  const Eigen::VectorXd x = vec({0.2});
  for (int l : {2, 5, 12}) {
    const auto est = estimate_rollout(x, l, chain, hspec, config(7), {1, 1});
    CHECK(est.nfe_added == 7LL * (l - 1));
  }
  CHECK_THROWS_AS(estimate_rollout(x, 1, chain, hspec, config(7), {1, 1}), Error);
  CHECK_THROWS_AS(estimate_rollout(x, 13, chain, hspec, config(7), {1, 1}), Error);

  const auto det = gaussian_chain(KernelKind::ddim(0.0), 12);
  try {
    estimate_rollout(x, 5, det, hspec, config(7), {1, 1});
    FAIL("expected degenerate transition");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::degenerate_transition);
  }

  const auto ind = HSpec::indicator(RewardSpec::linear(vec({1.0})), -100.0);
  CHECK(estimate_rollout(x, 6, chain, ind, config(1), {1, 1}).h_hat == 1.0);
}

TEST_CASE("rollout and surrogate agree on h_hat for l = 2") {
  const auto chain = gaussian_chain(KernelKind::euler_ancestral(), 2);
  const auto hspec = linear_tilt(1, 1.0, 8.0);
  DoobConfig cfg = config(4096);
  cfg.weights = WeightScale::absolute;
  const Eigen::VectorXd x = vec({0.7});
  const ScoreEval ev = score_for_estimate(chain, x, 2, JacobianMode::exact);
  DoobEstimator est(chain, hspec, cfg);
  const auto s = est.surrogate(x, 2, ev, {8, 0});
  const auto r = est.rollout(x, 2, ev, {8, 0});
  // t_1 = 1e-3: both read the same lookahead draws; standard error from the weights.
  CHECK(std::abs(s.h_hat - r.h_hat) < 2.0 * 1e-3 * r.h_hat + 1e-300);
}

TEST_CASE("constant reward: estimate shrinks with M") {
  const auto chain = gaussian_chain(KernelKind::euler_ancestral(), 10);
  const auto hspec = HSpec::exp_tilt(RewardSpec::linear(vec({0.0})).with_r_max(0.0), 1.0);
  const Eigen::VectorXd x = vec({0.3});
  auto norms = [&](int M) {
    std::vector<double> out;
    for (std::uint32_t rep = 0; rep < 100; ++rep) {
      out.push_back(estimate_rollout(x, 5, chain, hspec, config(M), {11, rep}).grad_log_h_hat.norm());
    }
    return median(out);
  };
  CHECK(norms(4096) < norms(64));
}

TEST_CASE("exact jacobian mode needs an analytic model") {
  const auto ext = ScoreModel::external(1, [](const Eigen::VectorXd& x, double) -> Eigen::VectorXd {
    return -x;
  });
  const DiffusionChain chain(ext, make_schedule(1.0, 10), KernelKind::euler_ancestral());
  CHECK_THROWS_AS(DoobEstimator(chain, linear_tilt(1), config(8)), Error);
  DoobConfig frozen = config(8);
  frozen.jacobian = JacobianMode::frozen;
  DoobEstimator est(chain, linear_tilt(1), frozen);
  const Eigen::VectorXd x = vec({0.1});
  const auto ev = score_for_estimate(chain, x, 5, JacobianMode::frozen);
  CHECK(est.surrogate(x, 5, ev, {1, 0}).grad_log_h_hat.allFinite());
  ScoreEval missing = ev;
  DoobEstimator exact(gaussian_chain(KernelKind::euler_ancestral(), 10), linear_tilt(1), config(8));
  CHECK_THROWS_AS(exact.surrogate(x, 5, missing, {1, 0}), Error);
}
