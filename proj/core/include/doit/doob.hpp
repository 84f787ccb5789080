#pragma once

#include <cstdint>

#include <Eigen/Core>

#include "doit/chain.hpp"
#include "doit/reward.hpp"

namespace doit {

/// Floor eta applied to h_hat in grad_h_hat / max(h_hat, eta).
struct TruncationRule {
  enum class Kind { decaying, fixed, none };

  Kind kind = Kind::decaying;
  double value = 0.0;  // used by `fixed`

  static TruncationRule decaying() { return {Kind::decaying, 0.0}; }
  static TruncationRule fixed(double eta) { return {Kind::fixed, eta}; }
  static TruncationRule none() { return {Kind::none, 0.0}; }
};

enum class EstimatorKind { surrogate, rollout };

/// How terminal exp_tilt weights are scaled inside one estimate.
///
/// `shifted` subtracts the largest reward among the M draws before exponentiating,
/// so the best draw always has weight 1. grad log h_hat is unchanged by this
/// whenever truncation is inactive, and nothing overflows. `absolute` uses the
/// declared r_max and gives an unbiased h_hat and grad_h_hat.
enum class WeightScale { shifted, absolute };

struct DoobConfig {
  int num_samples = 64;  // M
  double gamma = 1.0;
  int l_star = 0;        // 0 selects L
  TruncationRule eta = TruncationRule::decaying();
  EstimatorKind estimator = EstimatorKind::surrogate;
  JacobianMode jacobian = JacobianMode::exact;
  WeightScale weights = WeightScale::shifted;

  int effective_l_star(int steps) const noexcept { return l_star == 0 ? steps : l_star; }
  void validate(int steps) const;
};

struct DoobEstimate {
  double h_hat = 0.0;
  Eigen::VectorXd grad_h_hat;
  Eigen::VectorXd grad_log_h_hat;  // grad_h_hat / max(h_hat, eta); 0 when both are 0
  double eta = 0.0;
  bool truncation_active = false;
  long long nfe_added = 0;
};

/// decaying: min(M^(-1/6), 1/e); fixed: the given value; none: 0.
double truncation_level(int num_samples, const TruncationRule& rule);

/// Keys the estimator's random streams to one trajectory of one run.
struct TrajectoryKey {
  std::uint64_t seed = 0;
  std::uint32_t sample = 0;
};

/// Monte Carlo estimate of the Doob correction grad log h(x, t_l).
///
/// All vectors are in the kernel's sampler-state coordinates (see DiffusionChain).
/// Lookahead draw m of step l reads stream (seed, lookahead, sample, l, m);
/// rollout continuations read (seed, rollout, sample, l, m). Neither family is
/// used by the sampler's own step noise.
///
/// Holds scratch buffers, so one instance per worker thread.
class DoobEstimator {
 public:
  DoobEstimator(const DiffusionChain& chain, const HSpec& hspec, const DoobConfig& config);

  /// Algorithm with one-step lookaheads and the parent-score surrogate for x_0.
  /// `score_at_x` is the VP score evaluated at the VP image of x; its Jacobian
  /// (w.r.t. the VP point) is required in exact mode. No score evaluations.
  DoobEstimate surrogate(const Eigen::VectorXd& x, int l, const ScoreEval& score_at_x,
                         TrajectoryKey key);

  /// M full uncorrected backward rollouts to t_0; weights use the true terminal
  /// states and the gradient factor uses only the first transition. Adds
  /// M * (l - 1) score evaluations.
  DoobEstimate rollout(const Eigen::VectorXd& x, int l, const ScoreEval& score_at_x,
                       TrajectoryKey key);

  DoobEstimate estimate(const Eigen::VectorXd& x, int l, const ScoreEval& score_at_x,
                        TrajectoryKey key);

  const DoobConfig& config() const noexcept { return config_; }

 private:
  void draw_lookaheads(const Eigen::VectorXd& x, int l, const Eigen::VectorXd& score,
                       TrajectoryKey key);
  DoobEstimate finish(int l, const ScoreEval& score_at_x);
  void check_step(int l, const ScoreEval& score_at_x) const;

  const DiffusionChain& chain_;
  HSpec hspec_;
  DoobConfig config_;
  double eta_;

  Eigen::VectorXd mean_;        // transition mean at x
  Eigen::MatrixXd lookahead_;   // d x M states at step l-1
  Eigen::MatrixXd terminal_;    // d x M terminal (or surrogate) points
  Eigen::VectorXd rewards_;     // M
  Eigen::VectorXd weights_;     // M
  Eigen::VectorXd noise_;       // d
  Eigen::VectorXd state_;       // d
  Eigen::VectorXd score_;       // d
  long long nfe_ = 0;
};

/// One-shot wrappers around DoobEstimator.
DoobEstimate estimate_surrogate(const Eigen::VectorXd& x, int l, const ScoreEval& score_at_x,
                                const DiffusionChain& chain, const HSpec& hspec,
                                const DoobConfig& config, TrajectoryKey key);

/// Evaluates the base score at x itself (not counted in nfe_added).
DoobEstimate estimate_rollout(const Eigen::VectorXd& x, int l, const DiffusionChain& chain,
                              const HSpec& hspec, const DoobConfig& config, TrajectoryKey key);

/// Base score at a sampler state, in the mode the config asks for.
ScoreEval score_for_estimate(const DiffusionChain& chain, const Eigen::VectorXd& x, int l,
                             JacobianMode mode);

const char* estimator_kind_name(EstimatorKind kind) noexcept;

}  // namespace doit
