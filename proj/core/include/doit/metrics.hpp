#pragma once

#include <functional>
#include <vector>

#include <Eigen/Core>

#include "doit/reward.hpp"

namespace doit {

/// Reward statistics with quartiles by linear interpolation between closest
/// ranks: q_p = v[floor(h)] + (h - floor(h)) (v[floor(h)+1] - v[floor(h)]),
/// h = p (n - 1) on the sorted values.
struct RewardSummary {
  double min = 0.0;
  double q1 = 0.0;
  double mean = 0.0;
  double q3 = 0.0;
  double max = 0.0;
  double std = 0.0;  // sample standard deviation; 0 when n = 1
  long long n = 0;
};

RewardSummary summarize(std::vector<double> values);
/// Rewards of every row of `samples` (n x d).
std::vector<double> reward_values(const Eigen::MatrixXd& samples, const RewardSpec& reward);
RewardSummary summary_stats(const Eigen::MatrixXd& samples, const RewardSpec& reward);

/// Per-axis bins [lo, hi) split into `bins` equal cells; the last cell is closed.
struct Binning {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;
  int bins = 0;
};

/// Shared bins over the union of both batches, range padded 1% on each side.
Binning shared_binning(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, int bins);

/// Half the L1 distance between the two histograms. d <= 2; samples outside the
/// bins are counted as a separate overflow cell.
double tv_histogram(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Binning& bins);

/// Projection of every row onto `direction`.
Eigen::VectorXd project_rows(const Eigen::MatrixXd& samples, const Eigen::VectorXd& direction);

/// W1 between the two empirical laws, integral of |F_a - F_b|. Equals the mean
/// absolute difference of sorted samples when the lengths match.
double wasserstein_1d(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

using Cdf = std::function<double(double)>;

/// sup_x |F_n(x) - F(x)|, checked on both sides of every jump.
double ks_statistic(const Eigen::VectorXd& samples, const Cdf& cdf);

}  // namespace doit
