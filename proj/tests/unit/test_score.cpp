#include <doctest.h>

#include <cmath>

#include "doit/error.hpp"
#include "doit/random.hpp"
#include "doit/score.hpp"

using doit::GaussianComponent;
using doit::ScoreModel;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Eigen::VectorXd score(const ScoreModel& m, const Eigen::VectorXd& x, double t) {
  Eigen::VectorXd out(x.size());
  m.score_into(x, t, out);
  return out;
}

Eigen::MatrixXd fd_jacobian(const ScoreModel& m, const Eigen::VectorXd& x, double t, double h) {
  Eigen::MatrixXd J(x.size(), x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Eigen::VectorXd up = x, down = x;
    up[j] += h;
    down[j] -= h;
    J.col(j) = (score(m, up, t) - score(m, down, t)) / (2.0 * h);
  }
  return J;
}

ScoreModel symmetric_gmm(double mu, double var) {
  return ScoreModel::mixture({{0.5, vec({mu}), var}, {0.5, vec({-mu}), var}});
}

}  // namespace

TEST_CASE("gaussian score examples") {
  const auto sched = doit::make_schedule(60.0, 10);
  const auto std_normal = ScoreModel::gaussian(vec({0.0}), 1.0);
  for (double t : {0.0, 0.3, 2.0, 6.0}) {
    const auto ev = doit::eval_score(std_normal, vec({1.7}), t, sched);
    CHECK(ev.value[0] == doctest::Approx(-1.7).epsilon(1e-14));
    REQUIRE(ev.jacobian.has_value());
    CHECK((*ev.jacobian)(0, 0) == doctest::Approx(-1.0).epsilon(1e-14));
  }
  const auto shifted = ScoreModel::gaussian(vec({2.0}), 0.25);
  CHECK(std::abs(doit::eval_score(shifted, vec({1.0}), std::log(4.0), sched).value[0]) < 1e-14);

  const auto wide = ScoreModel::gaussian(vec({1.0, -2.0}), 4.0);
  const Eigen::MatrixXd J = doit::score_jacobian(wide, vec({0.3, 0.1}), 50.0, sched);
  CHECK((J + Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("symmetric mixture has zero score at the origin") {
  const auto m = symmetric_gmm(3.0, 0.5);
  for (double t : {0.0, 0.1, 1.0, 5.0}) CHECK(std::abs(score(m, vec({0.0}), t)[0]) < 1e-15);
  const Eigen::MatrixXd J = m.jacobian(vec({0.0}), 0.2);
  CHECK(J(0, 0) == doctest::Approx(fd_jacobian(m, vec({0.0}), 0.2, 1e-5)(0, 0)).epsilon(1e-6));
}

TEST_CASE("analytic jacobians match finite differences") {
  const auto gmm = ScoreModel::mixture({{0.2, vec({1.0, -1.0}), 0.3},
                                        {0.5, vec({-2.0, 0.5}), 1.5},
                                        {0.3, vec({0.0, 2.5}), 0.1}});
  const auto gauss = ScoreModel::gaussian(vec({0.5, -0.25}), 2.0);
  doit::RandomStream rs(11, doit::StreamFamily::auxiliary, 0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    Eigen::VectorXd x(2);
    x[0] = 6.0 * rs.uniform() - 3.0;
    x[1] = 6.0 * rs.uniform() - 3.0;
    const double t = 0.05 + 3.0 * rs.uniform();
    for (const ScoreModel* m : {&gmm, &gauss}) {
      const Eigen::MatrixXd err = m->jacobian(x, t) - fd_jacobian(*m, x, t, 1e-5);
      worst = std::max(worst, err.cwiseAbs().maxCoeff());
    }
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("one-component mixture equals the gaussian family") {
  const auto g = ScoreModel::gaussian(vec({0.7, -1.2}), 0.6);
  const auto m = ScoreModel::mixture({{1.0, vec({0.7, -1.2}), 0.6}});
  for (double t : {0.0, 0.4, 3.0}) {
    const Eigen::VectorXd x = vec({0.1, 2.0});
    CHECK((score(g, x, t) - score(m, x, t)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((g.jacobian(x, t) - m.jacobian(x, t)).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("large t approaches the standard normal score") {
  doit::RandomStream rs(3, doit::StreamFamily::auxiliary, 1);
  for (int i = 0; i < 50; ++i) {
    const double var = 0.1 + 9.9 * rs.uniform();
    Eigen::VectorXd mean(3);
    for (int j = 0; j < 3; ++j) mean[j] = (2.0 * rs.uniform() - 1.0) * 5.0 / std::sqrt(3.0);
    const auto m = ScoreModel::gaussian(mean, var);
    const Eigen::VectorXd x = vec({0.4, -1.1, 2.2});
    CHECK((score(m, x, 50.0) + x).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("mixture responsibilities survive far-out points") {
  const auto m = symmetric_gmm(3.0, 0.01);
  const Eigen::VectorXd s = score(m, vec({40.0}), 0.0);
  CHECK(s.allFinite());
  CHECK(s[0] == doctest::Approx(-(40.0 - 3.0) / 0.01).epsilon(1e-12));
}

TEST_CASE("model validation") {
  CHECK_THROWS_AS(ScoreModel::mixture({{0.5, vec({0.0}), 1.0}, {0.4, vec({1.0}), 1.0}}),
                  doit::Error);
  CHECK_THROWS_AS(ScoreModel::mixture({{1.0, vec({0.0}), 0.0}}), doit::Error);
  CHECK_THROWS_AS(ScoreModel::mixture({{1.0, vec({0.0}), -1.0}}), doit::Error);
  CHECK_THROWS_AS(ScoreModel::mixture({{0.5, vec({0.0}), 1.0}, {0.5, vec({0.0, 1.0}), 1.0}}),
                  doit::Error);
  CHECK_THROWS_AS(ScoreModel::mixture({{-0.5, vec({0.0}), 1.0}, {1.5, vec({1.0}), 1.0}}),
                  doit::Error);
}

TEST_CASE("eval_score range and dimension checks") {
  const auto sched = doit::make_schedule(1.0, 10);
  const auto m = ScoreModel::gaussian(vec({0.0, 0.0}), 1.0);
  CHECK_THROWS_AS(doit::eval_score(m, vec({0.0, 0.0}), 1.5, sched), doit::Error);
  CHECK_THROWS_AS(doit::eval_score(m, vec({0.0, 0.0}), -0.1, sched), doit::Error);
  CHECK_THROWS_AS(doit::eval_score(m, vec({0.0}), 0.5, sched), doit::Error);
  CHECK_NOTHROW(doit::eval_score(m, vec({0.0, 0.0}), 1.0, sched));
}

TEST_CASE("external models run frozen and refuse jacobians") {
  const auto sched = doit::make_schedule(1.0, 10);
  const auto ext = ScoreModel::external(2, [](const Eigen::VectorXd& x, double) -> Eigen::VectorXd {
    return -2.0 * x;
  });
  CHECK(doit::default_jacobian_mode(ext) == doit::JacobianMode::frozen);
  const auto ev = doit::eval_score(ext, vec({1.0, 2.0}), 0.5, sched);
  CHECK(ev.value[1] == -4.0);
  CHECK_FALSE(ev.jacobian.has_value());
  try {
    doit::score_jacobian(ext, vec({1.0, 2.0}), 0.5, sched);
    FAIL("expected unsupported");
  } catch (const doit::Error& e) {
    CHECK(e.code() == doit::Errc::unsupported);
  }
}

TEST_CASE("data sampling follows the t = 0 law") {
  const auto m = symmetric_gmm(3.0, 0.25);
  double pos = 0, sum = 0, sq = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    doit::RandomStream rs(9, doit::StreamFamily::proposal, static_cast<std::uint32_t>(i));
    const double x = m.sample_data(rs)[0];
    pos += x > 0;
    sum += x;
    sq += x * x;
  }
  CHECK(pos / n == doctest::Approx(0.5).epsilon(0.02));
  CHECK(std::abs(sum / n) < 0.03);
  CHECK(sq / n == doctest::Approx(9.25).epsilon(0.01));
}
