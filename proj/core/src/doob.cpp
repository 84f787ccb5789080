#include "doit/doob.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "doit/error.hpp"

namespace doit {

void DoobConfig::validate(int steps) const {
  if (num_samples < 1) throw Error(Errc::config, "doob.M must be >= 1");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw Error(Errc::config, "doob.gamma must be >= 0");
  const int ls = effective_l_star(steps);
  if (ls < 1 || ls > steps) {
    throw Error(Errc::config, "doob.l_star must lie in [1, L] (L = " + std::to_string(steps) + ")");
  }
  if (eta.kind == TruncationRule::Kind::fixed && !(eta.value >= 0.0)) {
    throw Error(Errc::config, "fixed doob.eta must be >= 0");
  }
}

double truncation_level(int num_samples, const TruncationRule& rule) {
  if (num_samples < 1) throw Error(Errc::invalid_argument, "M must be >= 1");
  switch (rule.kind) {
    case TruncationRule::Kind::decaying:
      return std::min(std::pow(static_cast<double>(num_samples), -1.0 / 6.0),
                      1.0 / std::numbers::e);
    case TruncationRule::Kind::fixed:
      if (!(rule.value >= 0.0)) throw Error(Errc::invalid_argument, "eta must be >= 0");
      return rule.value;
    case TruncationRule::Kind::none:
      return 0.0;
  }
  return 0.0;
}

DoobEstimator::DoobEstimator(const DiffusionChain& chain, const HSpec& hspec,
                             const DoobConfig& config)
    : chain_(chain), hspec_(hspec), config_(config) {
  hspec_.validate();
  config_.validate(chain.steps());
  if (config_.jacobian == JacobianMode::exact && !chain.model().analytic()) {
    throw Error(Errc::config, "exact jacobian mode needs an analytic score model");
  }
  if (config_.weights == WeightScale::absolute && hspec_.kind == HKind::exp_tilt &&
      !std::isfinite(hspec_.reward.r_max())) {
    throw Error(Errc::config, "absolute exp_tilt weights need a declared finite r_max");
  }
  eta_ = truncation_level(config_.num_samples, config_.eta);
  const Eigen::Index d = chain.dim();
  const Eigen::Index M = config_.num_samples;
  mean_.resize(d);
  lookahead_.resize(d, M);
  terminal_.resize(d, M);
  rewards_.resize(M);
  weights_.resize(M);
  noise_.resize(d);
  state_.resize(d);
  score_.resize(d);
}

void DoobEstimator::check_step(int l, const ScoreEval& score_at_x) const {
  if (l <= 1 || l > chain_.steps()) {
    throw Error(Errc::invalid_argument,
                "Doob estimates are defined for 1 < l <= L, got l = " + std::to_string(l));
  }
  if (!(chain_.step(l).std > 0.0)) {
    throw Error(Errc::degenerate_transition,
                "step " + std::to_string(l) + " has zero noise; grad log phi is undefined");
  }
  if (score_at_x.value.size() != chain_.dim()) {
    throw Error(Errc::invalid_argument, "score dimension does not match the model");
  }
  if (config_.jacobian == JacobianMode::exact && !score_at_x.jacobian) {
    throw Error(Errc::invalid_argument, "exact jacobian mode needs score_at_x.jacobian");
  }
}

void DoobEstimator::draw_lookaheads(const Eigen::VectorXd& x, int l, const Eigen::VectorXd& score,
                                    TrajectoryKey key) {
  const StepCoefficients& c = chain_.step(l);
  mean_.noalias() = c.lin * x + c.score * score;
  for (Eigen::Index m = 0; m < lookahead_.cols(); ++m) {
    RandomStream rs(key.seed, StreamFamily::lookahead, key.sample, static_cast<std::uint32_t>(l),
                    static_cast<std::uint32_t>(m));
    rs.fill_normal(noise_);
    lookahead_.col(m).noalias() = mean_ + c.std * noise_;
  }
}

DoobEstimate DoobEstimator::finish(int l, const ScoreEval& score_at_x) {
  const Eigen::Index M = weights_.size();

  if (hspec_.kind == HKind::ratio_event) {
    for (Eigen::Index m = 0; m < M; ++m) {
      const double ratio = hspec_.density_ratio(terminal_.col(m));
      if (!std::isfinite(ratio) || ratio < 0.0) {
        throw Error(Errc::evaluation, "density ratio must be finite and non-negative");
      }
      weights_[m] = ratio / hspec_.c_q;
    }
  } else {
    hspec_.reward.values(terminal_, rewards_);
    if (!rewards_.allFinite()) throw Error(Errc::evaluation, "reward is not finite");
    if (hspec_.kind == HKind::indicator) {
      for (Eigen::Index m = 0; m < M; ++m) weights_[m] = rewards_[m] >= hspec_.r0 ? 1.0 : 0.0;
    } else {
      const double ref = config_.weights == WeightScale::shifted ? rewards_.maxCoeff()
                                                                 : hspec_.reward.r_max();
      const double inv_tau = 1.0 / hspec_.tau;
      for (Eigen::Index m = 0; m < M; ++m) weights_[m] = std::exp((rewards_[m] - ref) * inv_tau);
    }
  }

  DoobEstimate est;
  est.eta = eta_;
  est.h_hat = weights_.mean();

  // grad h_hat = (1/M) sum_m w_m sigma^-2 D^T (y_m - mu), D = d mean / dx.
  const StepCoefficients& c = chain_.step(l);
  noise_.noalias() = (lookahead_.colwise() - mean_) * weights_;
  const double inv_var = 1.0 / (c.std * c.std);
  est.grad_h_hat = (inv_var / static_cast<double>(M)) * (c.lin * noise_);
  if (config_.jacobian == JacobianMode::exact) {
    // Chain rule: the score was evaluated at state_scale(l) * x.
    const double jac_scale = c.score * chain_.state_scale(l);
    est.grad_h_hat.noalias() += (inv_var / static_cast<double>(M) * jac_scale) *
                                (score_at_x.jacobian->transpose() * noise_);
  }

  const double denom = std::max(est.h_hat, eta_);
  est.truncation_active = est.h_hat < eta_ || est.h_hat == 0.0;
  if (denom > 0.0) {
    est.grad_log_h_hat = est.grad_h_hat / denom;
  } else {
    est.grad_log_h_hat = Eigen::VectorXd::Zero(est.grad_h_hat.size());
  }
  est.nfe_added = nfe_;
  return est;
}

DoobEstimate DoobEstimator::surrogate(const Eigen::VectorXd& x, int l, const ScoreEval& score_at_x,
                                      TrajectoryKey key) {
  check_step(l, score_at_x);
  draw_lookaheads(x, l, score_at_x.value, key);
  const double t_prev = chain_.time(l - 1);
  const double scale_prev = chain_.state_scale(l - 1);
  // x0_hat = exp(t'/2) (x_vp' + (1 - exp(-t')) s(x, t_l)), x_vp' the VP lookahead.
  const double outer = std::exp(0.5 * t_prev);
  state_.noalias() = (-std::expm1(-t_prev) * outer) * score_at_x.value;
  terminal_.noalias() = (outer * scale_prev) * lookahead_;
  terminal_.colwise() += state_;
  nfe_ = 0;
  return finish(l, score_at_x);
}

DoobEstimate DoobEstimator::rollout(const Eigen::VectorXd& x, int l, const ScoreEval& score_at_x,
                                    TrajectoryKey key) {
  check_step(l, score_at_x);
  draw_lookaheads(x, l, score_at_x.value, key);
  nfe_ = 0;
  for (Eigen::Index m = 0; m < lookahead_.cols(); ++m) {
    RandomStream rs(key.seed, StreamFamily::rollout, key.sample, static_cast<std::uint32_t>(l),
                    static_cast<std::uint32_t>(m));
    state_ = lookahead_.col(m);
    for (int j = l - 1; j >= 1; --j) {
      chain_.score_at_state(state_, j, score_);
      ++nfe_;
      const StepCoefficients& c = chain_.step(j);
      rs.fill_normal(noise_);
      state_ = c.lin * state_ + c.score * score_ + c.std * noise_;
    }
    terminal_.col(m) = state_;
  }
  return finish(l, score_at_x);
}

DoobEstimate DoobEstimator::estimate(const Eigen::VectorXd& x, int l, const ScoreEval& score_at_x,
                                     TrajectoryKey key) {
  return config_.estimator == EstimatorKind::rollout ? rollout(x, l, score_at_x, key)
                                                     : surrogate(x, l, score_at_x, key);
}

ScoreEval score_for_estimate(const DiffusionChain& chain, const Eigen::VectorXd& x, int l,
                             JacobianMode mode) {
  if (l < 0 || l > chain.steps()) {
    throw Error(Errc::invalid_argument, "step index " + std::to_string(l) + " outside [0, " +
                                            std::to_string(chain.steps()) + "]");
  }
  ScoreEval ev;
  ev.value.resize(chain.dim());
  chain.score_at_state(x, l, ev.value);
  ev.jacobian_mode = mode;
  if (mode == JacobianMode::exact) {
    ev.jacobian = chain.model().jacobian(chain.state_scale(l) * x, chain.time(l));
  }
  return ev;
}

DoobEstimate estimate_surrogate(const Eigen::VectorXd& x, int l, const ScoreEval& score_at_x,
                                const DiffusionChain& chain, const HSpec& hspec,
                                const DoobConfig& config, TrajectoryKey key) {
  DoobEstimator est(chain, hspec, config);
  return est.surrogate(x, l, score_at_x, key);
}

DoobEstimate estimate_rollout(const Eigen::VectorXd& x, int l, const DiffusionChain& chain,
                              const HSpec& hspec, const DoobConfig& config, TrajectoryKey key) {
  DoobEstimator est(chain, hspec, config);
  return est.rollout(x, l, score_for_estimate(chain, x, l, config.jacobian), key);
}

const char* estimator_kind_name(EstimatorKind kind) noexcept {
  return kind == EstimatorKind::rollout ? "rollout" : "surrogate";
}

}  // namespace doit
