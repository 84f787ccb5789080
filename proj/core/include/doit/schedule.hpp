#pragma once

#include <span>
#include <vector>

#include "doit/kernel_kind.hpp"

namespace doit {

enum class GridKind { uniform, log_snr };

/// Default first nonzero time of a log-SNR grid.
inline constexpr double kDefaultLogSnrTMin = 1e-3;

/// Time grid 0 = t_0 < ... < t_L = T with variance-preserving coefficients
/// alpha_bar_l = exp(-t_l). Immutable once built.
class NoiseSchedule {
 public:
  double terminal_time() const noexcept { return terminal_time_; }
  int steps() const noexcept { return static_cast<int>(times_.size()) - 1; }
  GridKind grid_kind() const noexcept { return grid_kind_; }

  double time(int l) const { return times_.at(static_cast<std::size_t>(l)); }
  double alpha_bar(int l) const { return alpha_bar_.at(static_cast<std::size_t>(l)); }

  std::span<const double> times() const noexcept { return times_; }
  std::span<const double> alpha_bars() const noexcept { return alpha_bar_; }

 private:
  friend NoiseSchedule make_schedule(double, int, GridKind, double);

  double terminal_time_ = 0.0;
  GridKind grid_kind_ = GridKind::uniform;
  std::vector<double> times_;
  std::vector<double> alpha_bar_;
};

/// Uniform grids set t_l = l T / L. Log-SNR grids space
/// log(alpha_bar / (1 - alpha_bar)) evenly between t_1 = t_min and t_L = T.
NoiseSchedule make_schedule(double terminal_time, int steps, GridKind kind = GridKind::uniform,
                            double t_min = kDefaultLogSnrTMin);

/// (T / L) * sum of step_stds^-2, with L = step_stds.size().
double kappa_sigma(double terminal_time, std::span<const double> step_stds);

/// Schedule diagnostic (T / L) * sum_{l=2}^{L} sigma_l^-2 over the steps that are
/// eligible for a Doob correction. Step l = 1 lands on t_0 = 0 where every
/// supported kernel is deterministic, so it is left out of the sum.
double kappa_sigma(const NoiseSchedule& schedule, const KernelKind& kernel);

const char* grid_kind_name(GridKind kind) noexcept;

}  // namespace doit
