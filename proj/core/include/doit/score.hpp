#pragma once

#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "doit/random.hpp"
#include "doit/schedule.hpp"

namespace doit {

enum class ScoreFamily { gaussian, gmm, external };

/// How d(mu)/dx treats the score inside the Doob gradient factor. `exact` uses the
/// score Jacobian; `frozen` treats the score as constant in x.
enum class JacobianMode { exact, frozen };

struct GaussianComponent {
  double weight = 1.0;
  Eigen::VectorXd mean;
  double variance = 1.0;  // isotropic: covariance = variance * I
};

/// Black-box score s(x, t). Must be safe for concurrent read-only calls.
using ScoreCallback = std::function<Eigen::VectorXd(const Eigen::VectorXd& x, double t)>;

/// Score oracle s(x, t) for data pushed through the VP forward process. The
/// analytic families have closed-form marginals: a component N(m, s^2 I) at time t
/// is N(exp(-t/2) m, (exp(-t) s^2 + 1 - exp(-t)) I).
class ScoreModel {
 public:
  static ScoreModel gaussian(Eigen::VectorXd mean, double variance);
  static ScoreModel mixture(std::vector<GaussianComponent> components);
  static ScoreModel external(int dim, ScoreCallback callback);

  ScoreFamily family() const noexcept { return family_; }
  int dim() const noexcept { return dim_; }
  bool analytic() const noexcept { return family_ != ScoreFamily::external; }
  const std::vector<GaussianComponent>& components() const noexcept { return components_; }

  /// Score at (x, t) without range checks. Hot-path entry used by the samplers.
  void score_into(const Eigen::Ref<const Eigen::VectorXd>& x, double t,
                  Eigen::Ref<Eigen::VectorXd> out) const;

  /// Exact Jacobian of the score. Analytic families only.
  Eigen::MatrixXd jacobian(const Eigen::Ref<const Eigen::VectorXd>& x, double t) const;

  /// Draw from the t = 0 law. Analytic families only.
  Eigen::VectorXd sample_data(RandomStream& stream) const;

 private:
  ScoreFamily family_ = ScoreFamily::gaussian;
  int dim_ = 0;
  std::vector<GaussianComponent> components_;
  std::vector<double> log_weights_;
  ScoreCallback callback_;
};

struct ScoreEval {
  Eigen::VectorXd value;
  JacobianMode jacobian_mode = JacobianMode::frozen;
  std::optional<Eigen::MatrixXd> jacobian;  // present iff jacobian_mode == exact
};

/// Exact for analytic families, frozen for external ones.
JacobianMode default_jacobian_mode(const ScoreModel& model) noexcept;

ScoreEval eval_score(const ScoreModel& model, const Eigen::VectorXd& x, double t,
                     const NoiseSchedule& schedule);
ScoreEval eval_score(const ScoreModel& model, const Eigen::VectorXd& x, double t,
                     const NoiseSchedule& schedule, JacobianMode mode);

Eigen::MatrixXd score_jacobian(const ScoreModel& model, const Eigen::VectorXd& x, double t,
                               const NoiseSchedule& schedule);

}  // namespace doit
