#include "doit/score.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "doit/error.hpp"

namespace doit {
namespace {

struct Marginal {
  double mean_scale;  // exp(-t/2)
  double variance;    // exp(-t) s^2 + 1 - exp(-t)
};

inline Marginal marginal_at(double component_variance, double t) {
  const double decay = std::exp(-t);
  return {std::exp(-0.5 * t), decay * component_variance - std::expm1(-t)};
}

void check_time(double t, const NoiseSchedule& schedule) {
  if (!(t >= 0.0 && t <= schedule.terminal_time())) {
    throw Error(Errc::invalid_argument, "score time " + std::to_string(t) + " outside [0, T]");
  }
}

void check_dim(const ScoreModel& model, Eigen::Index size) {
  if (size != model.dim()) {
    throw Error(Errc::invalid_argument, "state dimension " + std::to_string(size) +
                                            " does not match model dimension " +
                                            std::to_string(model.dim()));
  }
}

}  // namespace

ScoreModel ScoreModel::gaussian(Eigen::VectorXd mean, double variance) {
  return mixture({GaussianComponent{1.0, std::move(mean), variance}});
}

ScoreModel ScoreModel::mixture(std::vector<GaussianComponent> components) {
  if (components.empty()) throw Error(Errc::invalid_argument, "mixture needs a component");
  const auto dim = components.front().mean.size();
  if (dim < 1) throw Error(Errc::invalid_argument, "component mean must be non-empty");
  double total = 0.0;
  for (const auto& c : components) {
    if (c.mean.size() != dim) throw Error(Errc::invalid_argument, "component dimensions differ");
    if (!(c.weight > 0.0)) throw Error(Errc::invalid_argument, "mixture weights must be positive");
    if (!(c.variance > 0.0)) throw Error(Errc::invalid_argument, "variances must be positive");
    if (!c.mean.allFinite()) throw Error(Errc::invalid_argument, "component mean not finite");
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw Error(Errc::invalid_argument, "mixture weights must sum to 1");
  }
  ScoreModel m;
  m.family_ = components.size() == 1 ? ScoreFamily::gaussian : ScoreFamily::gmm;
  m.dim_ = static_cast<int>(dim);
  for (const auto& c : components) m.log_weights_.push_back(std::log(c.weight));
  m.components_ = std::move(components);
  return m;
}

ScoreModel ScoreModel::external(int dim, ScoreCallback callback) {
  if (dim < 1) throw Error(Errc::invalid_argument, "external score needs dim >= 1");
  if (!callback) throw Error(Errc::invalid_argument, "external score callback is empty");
  ScoreModel m;
  m.family_ = ScoreFamily::external;
  m.dim_ = dim;
  m.callback_ = std::move(callback);
  return m;
}

void ScoreModel::score_into(const Eigen::Ref<const Eigen::VectorXd>& x, double t,
                            Eigen::Ref<Eigen::VectorXd> out) const {
  if (family_ == ScoreFamily::external) {
    out = callback_(x, t);
    return;
  }
  if (components_.size() == 1) {
    const auto& c = components_.front();
    const Marginal mg = marginal_at(c.variance, t);
    out = -(x - mg.mean_scale * c.mean) / mg.variance;
    return;
  }
  // Responsibilities in log space with max subtraction; two passes avoid scratch storage.
  const double d = static_cast<double>(dim_);
  double max_log = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto& c = components_[k];
    const Marginal mg = marginal_at(c.variance, t);
    const double sq = (x - mg.mean_scale * c.mean).squaredNorm();
    const double lr = log_weights_[k] - 0.5 * sq / mg.variance - 0.5 * d * std::log(mg.variance);
    max_log = std::max(max_log, lr);
  }
  out.setZero();
  double norm = 0.0;
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto& c = components_[k];
    const Marginal mg = marginal_at(c.variance, t);
    const double sq = (x - mg.mean_scale * c.mean).squaredNorm();
    const double lr = log_weights_[k] - 0.5 * sq / mg.variance - 0.5 * d * std::log(mg.variance);
    const double r = std::exp(lr - max_log);
    norm += r;
    out.noalias() -= (r / mg.variance) * (x - mg.mean_scale * c.mean);
  }
  out /= norm;
}

Eigen::MatrixXd ScoreModel::jacobian(const Eigen::Ref<const Eigen::VectorXd>& x, double t) const {
  if (family_ == ScoreFamily::external) {
    throw Error(Errc::unsupported,
                "external score models have no Jacobian; use frozen jacobian mode");
  }
  const auto n = static_cast<Eigen::Index>(dim_);
  if (components_.size() == 1) {
    const Marginal mg = marginal_at(components_.front().variance, t);
    return Eigen::MatrixXd::Identity(n, n) * (-1.0 / mg.variance);
  }
  // J = sum_k r_k (-I / v_k) + sum_k r_k g_k g_k^T - gbar gbar^T, g_k the component score.
  const double d = static_cast<double>(dim_);
  std::vector<double> log_r(components_.size());
  double max_log = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto& c = components_[k];
    const Marginal mg = marginal_at(c.variance, t);
    const double sq = (x - mg.mean_scale * c.mean).squaredNorm();
    log_r[k] = log_weights_[k] - 0.5 * sq / mg.variance - 0.5 * d * std::log(mg.variance);
    max_log = std::max(max_log, log_r[k]);
  }
  double norm = 0.0;
  for (double& lr : log_r) {
    lr = std::exp(lr - max_log);
    norm += lr;
  }
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd mean_score = Eigen::VectorXd::Zero(n);
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto& c = components_[k];
    const Marginal mg = marginal_at(c.variance, t);
    const double r = log_r[k] / norm;
    const Eigen::VectorXd g = -(x - mg.mean_scale * c.mean) / mg.variance;
    jac.diagonal().array() -= r / mg.variance;
    jac.noalias() += r * g * g.transpose();
    mean_score += r * g;
  }
  jac.noalias() -= mean_score * mean_score.transpose();
  return jac;
}

Eigen::VectorXd ScoreModel::sample_data(RandomStream& stream) const {
  if (family_ == ScoreFamily::external) {
    throw Error(Errc::unsupported, "external score models have no data law to sample");
  }
  std::size_t k = 0;
  if (components_.size() > 1) {
    const double u = stream.uniform();
    double acc = 0.0;
    k = components_.size() - 1;
    for (std::size_t j = 0; j < components_.size(); ++j) {
      acc += components_[j].weight;
      if (u < acc) {
        k = j;
        break;
      }
    }
  }
  const auto& c = components_[k];
  Eigen::VectorXd z(dim_);
  stream.fill_normal(z);
  return c.mean + std::sqrt(c.variance) * z;
}

JacobianMode default_jacobian_mode(const ScoreModel& model) noexcept {
  return model.analytic() ? JacobianMode::exact : JacobianMode::frozen;
}

ScoreEval eval_score(const ScoreModel& model, const Eigen::VectorXd& x, double t,
                     const NoiseSchedule& schedule) {
  return eval_score(model, x, t, schedule, default_jacobian_mode(model));
}

ScoreEval eval_score(const ScoreModel& model, const Eigen::VectorXd& x, double t,
                     const NoiseSchedule& schedule, JacobianMode mode) {
  check_time(t, schedule);
  check_dim(model, x.size());
  ScoreEval ev;
  ev.value.resize(model.dim());
  model.score_into(x, t, ev.value);
  ev.jacobian_mode = mode;
  if (mode == JacobianMode::exact) ev.jacobian = model.jacobian(x, t);
  return ev;
}

Eigen::MatrixXd score_jacobian(const ScoreModel& model, const Eigen::VectorXd& x, double t,
                               const NoiseSchedule& schedule) {
  check_time(t, schedule);
  check_dim(model, x.size());
  return model.jacobian(x, t);
}

}  // namespace doit
