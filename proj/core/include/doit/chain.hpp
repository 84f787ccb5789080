#pragma once

#include <vector>

#include "doit/kernels.hpp"
#include "doit/score.hpp"

namespace doit {

/// A score model, a schedule and a kernel bundled with the per-step coefficients
/// every sampler and estimator needs. Owns copies; immutable.
class DiffusionChain {
 public:
  DiffusionChain(ScoreModel model, NoiseSchedule schedule, KernelKind kernel);

  const ScoreModel& model() const noexcept { return model_; }
  const NoiseSchedule& schedule() const noexcept { return schedule_; }
  const KernelKind& kernel() const noexcept { return kernel_; }
  int steps() const noexcept { return schedule_.steps(); }
  int dim() const noexcept { return model_.dim(); }

  /// Transition coefficients for step l -> l-1, 1 <= l <= L.
  const StepCoefficients& step(int l) const { return steps_.at(static_cast<std::size_t>(l)); }
  /// x_vp = state_scale(l) * x_state.
  double state_scale(int l) const { return scales_.at(static_cast<std::size_t>(l)); }
  double time(int l) const { return schedule_.time(l); }

  /// VP score at the VP image of a sampler state.
  void score_at_state(const Eigen::Ref<const Eigen::VectorXd>& x_state, int l,
                      Eigen::Ref<Eigen::VectorXd> out) const;

 private:
  ScoreModel model_;
  NoiseSchedule schedule_;
  KernelKind kernel_;
  std::vector<StepCoefficients> steps_;
  std::vector<double> scales_;
};

}  // namespace doit
