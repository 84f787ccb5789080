#include "doit/chain.hpp"

namespace doit {

DiffusionChain::DiffusionChain(ScoreModel model, NoiseSchedule schedule, KernelKind kernel)
    : model_(std::move(model)), schedule_(std::move(schedule)), kernel_(kernel) {
  const int L = schedule_.steps();
  steps_.resize(static_cast<std::size_t>(L) + 1);
  scales_.resize(static_cast<std::size_t>(L) + 1);
  for (int l = 0; l <= L; ++l) {
    scales_[static_cast<std::size_t>(l)] = doit::state_scale(kernel_, schedule_, l);
    if (l >= 1) steps_[static_cast<std::size_t>(l)] = step_coefficients(kernel_, schedule_, l);
  }
}

void DiffusionChain::score_at_state(const Eigen::Ref<const Eigen::VectorXd>& x_state, int l,
                                    Eigen::Ref<Eigen::VectorXd> out) const {
  const double scale = scales_[static_cast<std::size_t>(l)];
  if (scale == 1.0) {
    model_.score_into(x_state, schedule_.time(l), out);
  } else {
    model_.score_into(scale * x_state, schedule_.time(l), out);
  }
}

}  // namespace doit
