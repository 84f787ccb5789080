#pragma once

#include <string>

namespace doit {

/// Which backward Gaussian transition the sampler uses.
///
/// DDIM carries its stochasticity knob eta in [0, 1]. Euler-ancestral works in
/// EDM coordinates: its sampler state at step l is x_vp / sqrt(alpha_bar_l),
/// which coincides with the VP state at t = 0.
struct KernelKind {
  enum class Variant { ddim, euler_ancestral };

  Variant variant = Variant::euler_ancestral;
  double eta = 1.0;

  static KernelKind ddim(double eta);
  static KernelKind euler_ancestral();

  bool is_ddim() const noexcept { return variant == Variant::ddim; }
  std::string name() const;
};

}  // namespace doit
