#include "doit/schedule.hpp"

#include <cmath>
#include <string>

#include "doit/error.hpp"
#include "doit/kernels.hpp"

namespace doit {
namespace {

double log_snr(double t) { return -std::log(std::expm1(t)); }
double time_from_log_snr(double lambda) { return std::log1p(std::exp(-lambda)); }

}  // namespace

NoiseSchedule make_schedule(double terminal_time, int steps, GridKind kind, double t_min) {
  if (!(terminal_time > 0.0) || !std::isfinite(terminal_time)) {
    throw Error(Errc::invalid_argument, "terminal time must be positive, got " +
                                            std::to_string(terminal_time));
  }
  if (steps < 1) {
    throw Error(Errc::invalid_argument, "step count must be >= 1, got " + std::to_string(steps));
  }

  NoiseSchedule s;
  s.terminal_time_ = terminal_time;
  s.grid_kind_ = kind;
  s.times_.resize(static_cast<std::size_t>(steps) + 1);
  s.times_[0] = 0.0;

  if (kind == GridKind::uniform || steps == 1) {
    for (int l = 1; l <= steps; ++l) {
      s.times_[static_cast<std::size_t>(l)] = (static_cast<double>(l) * terminal_time) / steps;
    }
  } else {
    if (!(t_min > 0.0) || !(t_min < terminal_time)) {
      throw Error(Errc::invalid_argument, "log-snr grid needs 0 < t_min < T");
    }
    const double lam_first = log_snr(t_min);
    const double lam_last = log_snr(terminal_time);
    for (int l = 1; l <= steps; ++l) {
      const double frac = static_cast<double>(l - 1) / (steps - 1);
      s.times_[static_cast<std::size_t>(l)] =
          time_from_log_snr(lam_first + (lam_last - lam_first) * frac);
    }
    s.times_[1] = t_min;
  }
  s.times_.back() = terminal_time;

  s.alpha_bar_.resize(s.times_.size());
  for (std::size_t l = 0; l < s.times_.size(); ++l) {
    if (l > 0 && !(s.times_[l] > s.times_[l - 1])) {
      throw Error(Errc::invalid_argument, "time grid is not strictly increasing");
    }
    s.alpha_bar_[l] = std::exp(-s.times_[l]);
  }
  return s;
}

double kappa_sigma(double terminal_time, std::span<const double> step_stds) {
  if (step_stds.empty()) {
    throw Error(Errc::invalid_argument, "kappa_sigma needs at least one step");
  }
  double sum = 0.0;
  for (double s : step_stds) {
    if (!(s > 0.0)) {
      throw Error(Errc::degenerate_kernel, "kappa_sigma undefined: a step has zero noise");
    }
    sum += 1.0 / (s * s);
  }
  return terminal_time / static_cast<double>(step_stds.size()) * sum;
}

double kappa_sigma(const NoiseSchedule& schedule, const KernelKind& kernel) {
  const int L = schedule.steps();
  if (L < 2) {
    throw Error(Errc::degenerate_kernel,
                "kappa_sigma undefined: a single-step schedule has no stochastic step");
  }
  double sum = 0.0;
  for (int l = 2; l <= L; ++l) {
    const double s = step_coefficients(kernel, schedule, l).std;
    if (!(s > 0.0)) {
      throw Error(Errc::degenerate_kernel,
                  "kappa_sigma undefined: step " + std::to_string(l) + " of kernel " +
                      kernel.name() + " has zero noise");
    }
    sum += 1.0 / (s * s);
  }
  return schedule.terminal_time() / L * sum;
}

const char* grid_kind_name(GridKind kind) noexcept {
  switch (kind) {
    case GridKind::uniform: return "uniform";
    case GridKind::log_snr: return "log_snr";
  }
  return "?";
}

}  // namespace doit
