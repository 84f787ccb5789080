#pragma once

#include <Eigen/Core>

#include "doit/kernel_kind.hpp"
#include "doit/schedule.hpp"

namespace doit {

/// Backward transition N(mean, std^2 I) from step l to l-1.
///
/// The mean is affine in both the state and the supplied score:
///   mean = lin_coeff * x + score_coeff * score.
/// That is what lets the Doob correction enter as an additive score term.
struct TransitionMoments {
  Eigen::VectorXd mean;
  double std = 0.0;
  double lin_coeff = 1.0;
  double score_coeff = 0.0;
};

/// Scalar part of a transition, independent of the state.
struct StepCoefficients {
  double lin = 1.0;
  double score = 0.0;
  double std = 0.0;
};

inline constexpr double kSqrtClampTolerance = 1e-12;

StepCoefficients ddim_coefficients(double alpha_prev, double alpha_cur, double eta);
StepCoefficients euler_ancestral_coefficients(double alpha_prev, double alpha_cur);
StepCoefficients step_coefficients(const KernelKind& kernel, const NoiseSchedule& schedule, int l);

TransitionMoments ddim_moments(const Eigen::VectorXd& x, const Eigen::VectorXd& score, int l,
                               const NoiseSchedule& schedule, double eta);
TransitionMoments euler_ancestral_moments(const Eigen::VectorXd& x, const Eigen::VectorXd& score,
                                          int l, const NoiseSchedule& schedule);
TransitionMoments transition_moments(const KernelKind& kernel, const Eigen::VectorXd& x,
                                     const Eigen::VectorXd& score, int l,
                                     const NoiseSchedule& schedule);

/// Factor mapping the kernel's sampler state at step l to VP coordinates:
/// x_vp = state_scale * x_state. 1 for DDIM, sqrt(alpha_bar_l) for Euler-ancestral.
double state_scale(const KernelKind& kernel, const NoiseSchedule& schedule, int l);

Eigen::VectorXd kernel_step(const TransitionMoments& moments, const Eigen::VectorXd& noise);

/// Posterior-mean prediction of clean data from a VP state at time t.
Eigen::VectorXd tweedie_x0(const Eigen::VectorXd& x, const Eigen::VectorXd& score_at_x, double t);

/// One-step lookahead prediction of clean data that reuses the parent-state score.
/// `x_lookahead` is a VP state at t_prev; `score_at_parent` was evaluated one step
/// earlier. Costs no score evaluation.
Eigen::VectorXd surrogate_x0(const Eigen::VectorXd& x_lookahead,
                             const Eigen::VectorXd& score_at_parent, double t_prev);

/// Gradient in x of log N(y; mean(x), std^2 I) with the score held fixed
/// (d mean / dx = lin_coeff * I).
Eigen::VectorXd transition_logdensity_grad(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                           const TransitionMoments& moments_at_x);

/// Same gradient with d mean / dx = lin_coeff * I + score_coeff * score_jacobian, where
/// score_jacobian is the derivative of the supplied score with respect to x.
Eigen::VectorXd transition_logdensity_grad(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                           const TransitionMoments& moments_at_x,
                                           const Eigen::MatrixXd& score_jacobian);

}  // namespace doit
