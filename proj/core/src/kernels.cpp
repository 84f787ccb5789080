#include "doit/kernels.hpp"

#include <cmath>
#include <string>

#include "doit/error.hpp"

namespace doit {
namespace {

double clamped_sqrt(double v, const char* what) {
  if (v < -kSqrtClampTolerance) {
    throw Error(Errc::schedule_inconsistency,
                std::string(what) + " is negative (" + std::to_string(v) + ")");
  }
  return v <= 0.0 ? 0.0 : std::sqrt(v);
}

void check_step(const NoiseSchedule& schedule, int l) {
  if (l < 1 || l > schedule.steps()) {
    throw Error(Errc::invalid_argument, "step index " + std::to_string(l) + " outside [1, " +
                                            std::to_string(schedule.steps()) + "]");
  }
}

TransitionMoments moments_from(const StepCoefficients& c, const Eigen::VectorXd& x,
                               const Eigen::VectorXd& score) {
  if (x.size() != score.size()) {
    throw Error(Errc::invalid_argument, "state and score dimensions differ");
  }
  TransitionMoments m;
  m.mean = c.lin * x + c.score * score;
  m.std = c.std;
  m.lin_coeff = c.lin;
  m.score_coeff = c.score;
  return m;
}

}  // namespace

KernelKind KernelKind::ddim(double eta) {
  if (!(eta >= 0.0 && eta <= 1.0)) {
    throw Error(Errc::invalid_argument, "ddim eta must lie in [0, 1]");
  }
  return KernelKind{Variant::ddim, eta};
}

KernelKind KernelKind::euler_ancestral() { return KernelKind{Variant::euler_ancestral, 0.0}; }

std::string KernelKind::name() const {
  return is_ddim() ? "ddim(eta=" + std::to_string(eta) + ")" : "euler_ancestral";
}

StepCoefficients ddim_coefficients(double alpha_prev, double alpha_cur, double eta) {
  if (!(alpha_cur > 0.0 && alpha_cur < 1.0 && alpha_prev > 0.0 && alpha_prev <= 1.0)) {
    throw Error(Errc::invalid_argument, "alpha_bar values must lie in (0, 1]");
  }
  const double ratio = alpha_prev / alpha_cur;
  const double var = eta * eta * ((1.0 - alpha_prev) / (1.0 - alpha_cur)) * (1.0 - 1.0 / ratio);
  const double std = clamped_sqrt(var, "ddim step variance");
  const double dir = clamped_sqrt(1.0 - alpha_prev - std * std, "1 - alpha_prev - sigma^2");
  const double sqrt_one_minus = std::sqrt(1.0 - alpha_cur);
  const double lin = std::sqrt(ratio);
  // eps = -sqrt(1 - alpha_cur) * score
  const double eps_coeff = dir - sqrt_one_minus * lin;
  return {lin, -sqrt_one_minus * eps_coeff, std};
}

StepCoefficients euler_ancestral_coefficients(double alpha_prev, double alpha_cur) {
  if (!(alpha_cur > 0.0 && alpha_cur < 1.0 && alpha_prev > 0.0 && alpha_prev <= 1.0)) {
    throw Error(Errc::invalid_argument, "alpha_bar values must lie in (0, 1]");
  }
  const double sig_cur2 = (1.0 - alpha_cur) / alpha_cur;
  const double sig_prev2 = (1.0 - alpha_prev) / alpha_prev;
  if (!(sig_prev2 < sig_cur2)) {
    throw Error(Errc::non_monotone_schedule, "EDM noise level must decrease along the step");
  }
  const double up2 = sig_prev2 / sig_cur2 * (sig_cur2 - sig_prev2);
  const double down = clamped_sqrt(sig_prev2 - up2, "sigma_down^2");
  const double sig_cur = std::sqrt(sig_cur2);
  return {1.0, -std::sqrt(1.0 - alpha_cur) * (down - sig_cur), std::sqrt(up2)};
}

StepCoefficients step_coefficients(const KernelKind& kernel, const NoiseSchedule& schedule, int l) {
  check_step(schedule, l);
  const double a_prev = schedule.alpha_bar(l - 1);
  const double a_cur = schedule.alpha_bar(l);
  return kernel.is_ddim() ? ddim_coefficients(a_prev, a_cur, kernel.eta)
                          : euler_ancestral_coefficients(a_prev, a_cur);
}

TransitionMoments ddim_moments(const Eigen::VectorXd& x, const Eigen::VectorXd& score, int l,
                               const NoiseSchedule& schedule, double eta) {
  return moments_from(step_coefficients(KernelKind::ddim(eta), schedule, l), x, score);
}

TransitionMoments euler_ancestral_moments(const Eigen::VectorXd& x, const Eigen::VectorXd& score,
                                          int l, const NoiseSchedule& schedule) {
  return moments_from(step_coefficients(KernelKind::euler_ancestral(), schedule, l), x, score);
}

TransitionMoments transition_moments(const KernelKind& kernel, const Eigen::VectorXd& x,
                                     const Eigen::VectorXd& score, int l,
                                     const NoiseSchedule& schedule) {
  return moments_from(step_coefficients(kernel, schedule, l), x, score);
}

double state_scale(const KernelKind& kernel, const NoiseSchedule& schedule, int l) {
  return kernel.is_ddim() ? 1.0 : std::sqrt(schedule.alpha_bar(l));
}

Eigen::VectorXd kernel_step(const TransitionMoments& moments, const Eigen::VectorXd& noise) {
  if (noise.size() != moments.mean.size()) {
    throw Error(Errc::invalid_argument, "noise dimension does not match the transition");
  }
  return moments.mean + moments.std * noise;
}

Eigen::VectorXd tweedie_x0(const Eigen::VectorXd& x, const Eigen::VectorXd& score_at_x, double t) {
  return (x - std::expm1(-t) * score_at_x) * std::exp(0.5 * t);
}

Eigen::VectorXd surrogate_x0(const Eigen::VectorXd& x_lookahead,
                             const Eigen::VectorXd& score_at_parent, double t_prev) {
  return std::exp(0.5 * t_prev) * (x_lookahead - std::expm1(-t_prev) * score_at_parent);
}

Eigen::VectorXd transition_logdensity_grad(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                           const TransitionMoments& moments_at_x) {
  if (!(moments_at_x.std > 0.0)) {
    throw Error(Errc::degenerate_transition, "log-density gradient needs a positive step std");
  }
  if (x.size() != y.size() || y.size() != moments_at_x.mean.size()) {
    throw Error(Errc::invalid_argument, "dimension mismatch in transition gradient");
  }
  const double inv_var = 1.0 / (moments_at_x.std * moments_at_x.std);
  return (inv_var * moments_at_x.lin_coeff) * (y - moments_at_x.mean);
}

Eigen::VectorXd transition_logdensity_grad(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                           const TransitionMoments& moments_at_x,
                                           const Eigen::MatrixXd& score_jacobian) {
  const Eigen::VectorXd frozen = transition_logdensity_grad(x, y, moments_at_x);
  if (score_jacobian.rows() != x.size() || score_jacobian.cols() != x.size()) {
    throw Error(Errc::invalid_argument, "score Jacobian has the wrong shape");
  }
  const double inv_var = 1.0 / (moments_at_x.std * moments_at_x.std);
  return frozen + (inv_var * moments_at_x.score_coeff) *
                      (score_jacobian.transpose() * (y - moments_at_x.mean));
}

}  // namespace doit
