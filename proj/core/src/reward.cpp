#include "doit/reward.hpp"

#include <cmath>
#include <map>
#include <mutex>

#include "doit/error.hpp"

namespace doit {
namespace {

struct RegistryEntry {
  std::shared_ptr<const RewardFunction> fn;
  double r_max;
};

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}

std::map<std::string, RegistryEntry>& registry() {
  static std::map<std::string, RegistryEntry> r;
  return r;
}

void check_finite(double r) {
  if (!std::isfinite(r)) throw Error(Errc::evaluation, "reward is not finite");
}

}  // namespace

RewardSpec RewardSpec::linear(Eigen::VectorXd direction, double r_max) {
  if (direction.size() < 1 || !direction.allFinite()) {
    throw Error(Errc::invalid_argument, "linear reward needs a finite direction");
  }
  RewardSpec s;
  s.kind_ = RewardKind::linear;
  s.direction_ = std::move(direction);
  s.r_max_ = r_max;
  return s;
}

RewardSpec RewardSpec::quadratic(Eigen::VectorXd center, double scale) {
  if (center.size() < 1 || !center.allFinite() || !(scale >= 0.0)) {
    throw Error(Errc::invalid_argument, "quadratic reward needs a finite center and scale >= 0");
  }
  RewardSpec s;
  s.kind_ = RewardKind::quadratic;
  s.direction_ = std::move(center);
  s.scalar_ = scale;
  s.r_max_ = 0.0;
  return s;
}

RewardSpec RewardSpec::threshold_step(Eigen::VectorXd direction, double threshold) {
  if (direction.size() < 1 || !direction.allFinite() || !std::isfinite(threshold)) {
    throw Error(Errc::invalid_argument, "threshold reward needs a finite direction and threshold");
  }
  RewardSpec s;
  s.kind_ = RewardKind::threshold_step;
  s.direction_ = std::move(direction);
  s.scalar_ = threshold;
  s.r_max_ = 1.0;
  return s;
}

RewardSpec RewardSpec::named(const std::string& name) {
  std::lock_guard lock(registry_mutex());
  const auto it = registry().find(name);
  if (it == registry().end()) {
    throw Error(Errc::invalid_argument, "no reward registered under '" + name + "'");
  }
  RewardSpec s;
  s.kind_ = RewardKind::named_external;
  s.name_ = name;
  s.function_ = it->second.fn;
  s.r_max_ = it->second.r_max;
  return s;
}

RewardSpec RewardSpec::with_r_max(double r_max) const {
  if (std::isnan(r_max)) throw Error(Errc::invalid_argument, "r_max is NaN");
  RewardSpec s = *this;
  s.r_max_ = r_max;
  return s;
}

double RewardSpec::value(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  switch (kind_) {
    case RewardKind::linear: return direction_.dot(x);
    case RewardKind::quadratic: return -scalar_ * (x - direction_).squaredNorm();
    case RewardKind::threshold_step: return direction_.dot(x) >= scalar_ ? 1.0 : 0.0;
    case RewardKind::named_external: return (*function_)(x);
  }
  return 0.0;
}

void RewardSpec::values(const Eigen::Ref<const Eigen::MatrixXd>& points,
                        Eigen::Ref<Eigen::VectorXd> out) const {
  switch (kind_) {
    case RewardKind::linear:
      out.noalias() = points.transpose() * direction_;
      return;
    case RewardKind::threshold_step:
      out.noalias() = points.transpose() * direction_;
      for (Eigen::Index m = 0; m < out.size(); ++m) out[m] = out[m] >= scalar_ ? 1.0 : 0.0;
      return;
    default:
      for (Eigen::Index m = 0; m < points.cols(); ++m) out[m] = value(points.col(m));
  }
}

void register_reward(const std::string& name, RewardFunction fn, double r_max) {
  if (name.empty() || !fn) throw Error(Errc::invalid_argument, "reward registration is empty");
  std::lock_guard lock(registry_mutex());
  registry()[name] = {std::make_shared<const RewardFunction>(std::move(fn)), r_max};
}

bool reward_registered(const std::string& name) {
  std::lock_guard lock(registry_mutex());
  return registry().count(name) > 0;
}

double eval_reward(const RewardSpec& spec, const Eigen::VectorXd& x) {
  if (spec.dim() != 0 && spec.dim() != x.size()) {
    throw Error(Errc::invalid_argument, "reward dimension does not match the input");
  }
  const double r = spec.value(x);
  check_finite(r);
  if (r > spec.r_max() + 1e-9) {
    throw Error(Errc::reward_bound, "reward " + std::to_string(r) + " exceeds declared r_max " +
                                        std::to_string(spec.r_max()));
  }
  return r;
}

HSpec HSpec::exp_tilt(RewardSpec reward, double tau) {
  HSpec h;
  h.kind = HKind::exp_tilt;
  h.tau = tau;
  h.reward = std::move(reward);
  h.validate();
  return h;
}

HSpec HSpec::indicator(RewardSpec reward, double r0) {
  HSpec h;
  h.kind = HKind::indicator;
  h.r0 = r0;
  h.reward = std::move(reward);
  h.validate();
  return h;
}

HSpec HSpec::ratio_event(RewardSpec reward, DensityRatio ratio, double c_q) {
  HSpec h;
  h.kind = HKind::ratio_event;
  h.c_q = c_q;
  h.density_ratio = std::move(ratio);
  h.reward = std::move(reward);
  h.validate();
  return h;
}

void HSpec::validate() const {
  switch (kind) {
    case HKind::exp_tilt:
      if (!(tau > 0.0) || !std::isfinite(tau)) {
        throw Error(Errc::invalid_argument, "exp_tilt temperature must be positive");
      }
      break;
    case HKind::indicator:
      if (!std::isfinite(r0)) throw Error(Errc::invalid_argument, "indicator threshold not finite");
      break;
    case HKind::ratio_event:
      if (!(c_q >= 1.0)) throw Error(Errc::invalid_argument, "ratio_event needs C_q >= 1");
      if (!density_ratio) throw Error(Errc::invalid_argument, "ratio_event needs a density ratio");
      break;
  }
}

double terminal_h(const HSpec& spec, const Eigen::VectorXd& x) {
  switch (spec.kind) {
    case HKind::exp_tilt: {
      if (!std::isfinite(spec.reward.r_max())) {
        throw Error(Errc::evaluation, "exp_tilt terminal h needs a declared finite r_max");
      }
      const double r = eval_reward(spec.reward, x);
      return std::exp((r - spec.reward.r_max()) / spec.tau);
    }
    case HKind::indicator:
      return eval_reward(spec.reward, x) >= spec.r0 ? 1.0 : 0.0;
    case HKind::ratio_event: {
      const double ratio = spec.density_ratio(x);
      if (!std::isfinite(ratio) || ratio < 0.0) {
        throw Error(Errc::evaluation, "density ratio must be finite and non-negative");
      }
      return ratio / spec.c_q;
    }
  }
  return 0.0;
}

bool acceptance_event(const HSpec& spec, const Eigen::VectorXd& x, double u) {
  return u <= terminal_h(spec, x);
}

const char* h_kind_name(HKind kind) noexcept {
  switch (kind) {
    case HKind::exp_tilt: return "exp_tilt";
    case HKind::indicator: return "indicator";
    case HKind::ratio_event: return "ratio_event";
  }
  return "?";
}

const char* reward_kind_name(RewardKind kind) noexcept {
  switch (kind) {
    case RewardKind::linear: return "linear";
    case RewardKind::quadratic: return "quadratic";
    case RewardKind::threshold_step: return "threshold_step";
    case RewardKind::named_external: return "named";
  }
  return "?";
}

}  // namespace doit
