#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <string>

#include <Eigen/Core>

namespace doit {

enum class RewardKind { linear, quadratic, threshold_step, named_external };

using RewardFunction = std::function<double(const Eigen::Ref<const Eigen::VectorXd>& x)>;

/// Scalar reward r(x) together with a declared upper bound r_max.
///
/// Every evaluation checks r(x) <= r_max + 1e-9. Linear rewards are unbounded, so
/// their r_max defaults to +inf until one is declared.
class RewardSpec {
 public:
  static RewardSpec linear(Eigen::VectorXd direction,
                           double r_max = std::numeric_limits<double>::infinity());
  /// r(x) = -scale * ||x - center||^2, r_max = 0.
  static RewardSpec quadratic(Eigen::VectorXd center, double scale);
  /// r(x) = 1 if direction . x >= threshold else 0, r_max = 1.
  static RewardSpec threshold_step(Eigen::VectorXd direction, double threshold);
  /// Looks the name up in the process-wide registry.
  static RewardSpec named(const std::string& name);

  RewardKind kind() const noexcept { return kind_; }
  double r_max() const noexcept { return r_max_; }
  const Eigen::VectorXd& direction() const noexcept { return direction_; }
  const Eigen::VectorXd& center() const noexcept { return direction_; }
  double scale() const noexcept { return scalar_; }
  double threshold() const noexcept { return scalar_; }
  const std::string& name() const noexcept { return name_; }
  /// Input dimension, or 0 when the reward accepts any dimension (named rewards).
  int dim() const noexcept { return static_cast<int>(direction_.size()); }

  RewardSpec with_r_max(double r_max) const;

  /// r(x) without the bound check; used in tight loops.
  double value(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  /// Rewards of every column of `points` (d x M) into `out` (size M).
  void values(const Eigen::Ref<const Eigen::MatrixXd>& points, Eigen::Ref<Eigen::VectorXd> out) const;

 private:
  RewardKind kind_ = RewardKind::linear;
  Eigen::VectorXd direction_;
  double scalar_ = 0.0;
  double r_max_ = std::numeric_limits<double>::infinity();
  std::string name_;
  std::shared_ptr<const RewardFunction> function_;
};

/// Registers a pure reward under `name` for use from config files.
void register_reward(const std::string& name, RewardFunction fn,
                     double r_max = std::numeric_limits<double>::infinity());
bool reward_registered(const std::string& name);

double eval_reward(const RewardSpec& spec, const Eigen::VectorXd& x);

enum class HKind { exp_tilt, indicator, ratio_event };

using DensityRatio = std::function<double(const Eigen::Ref<const Eigen::VectorXd>& x)>;

/// Terminal h-function h(x, 0).
///   exp_tilt:    exp((r(x) - r_max) / tau)
///   indicator:   1{r(x) >= r0}   (ties accepted)
///   ratio_event: (q/p)(x) / C_q
struct HSpec {
  HKind kind = HKind::exp_tilt;
  double tau = 1.0;
  double r0 = 0.0;
  double c_q = 1.0;
  DensityRatio density_ratio;
  RewardSpec reward;

  static HSpec exp_tilt(RewardSpec reward, double tau);
  static HSpec indicator(RewardSpec reward, double r0);
  static HSpec ratio_event(RewardSpec reward, DensityRatio ratio, double c_q);

  void validate() const;
};

double terminal_h(const HSpec& spec, const Eigen::VectorXd& x);

/// u <= h(x, 0). For exp_tilt this is the event {U <= exp((r - r_max) / tau)}.
bool acceptance_event(const HSpec& spec, const Eigen::VectorXd& x, double u);

const char* h_kind_name(HKind kind) noexcept;
const char* reward_kind_name(RewardKind kind) noexcept;

}  // namespace doit
