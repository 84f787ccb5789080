#include "doit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "doit/error.hpp"

namespace doit {

namespace {

double quantile_sorted(const std::vector<double>& v, double p) {
  const double h = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= v.size()) return v.back();
  return v[lo] + (h - static_cast<double>(lo)) * (v[lo + 1] - v[lo]);
}

std::vector<double> sorted_copy(const Eigen::VectorXd& x) {
  std::vector<double> v(x.data(), x.data() + x.size());
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

RewardSummary summarize(std::vector<double> values) {
  if (values.empty()) throw Error(Errc::invalid_argument, "summary of an empty batch");
  std::sort(values.begin(), values.end());
  RewardSummary s;
  s.n = static_cast<long long>(values.size());
  s.min = values.front();
  s.max = values.back();
  s.q1 = quantile_sorted(values, 0.25);
  s.q3 = quantile_sorted(values, 0.75);
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n > 1 && s.min != s.max) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
  }
  return s;
}

std::vector<double> reward_values(const Eigen::MatrixXd& samples, const RewardSpec& reward) {
  std::vector<double> r(static_cast<std::size_t>(samples.rows()));
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    r[static_cast<std::size_t>(i)] = eval_reward(reward, samples.row(i).transpose());
  }
  return r;
}

RewardSummary summary_stats(const Eigen::MatrixXd& samples, const RewardSpec& reward) {
  return summarize(reward_values(samples, reward));
}

Binning shared_binning(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, int bins) {
  if (bins < 1) throw Error(Errc::invalid_argument, "bins must be >= 1");
  if (a.cols() != b.cols()) throw Error(Errc::invalid_argument, "batches differ in dimension");
  if (a.rows() == 0 || b.rows() == 0) throw Error(Errc::invalid_argument, "empty batch");
  Binning out;
  out.bins = bins;
  out.lo = a.colwise().minCoeff().transpose().cwiseMin(b.colwise().minCoeff().transpose());
  out.hi = a.colwise().maxCoeff().transpose().cwiseMax(b.colwise().maxCoeff().transpose());
  for (Eigen::Index j = 0; j < out.lo.size(); ++j) {
    double pad = 0.01 * (out.hi[j] - out.lo[j]);
    if (pad == 0.0) pad = 0.5;
    out.lo[j] -= pad;
    out.hi[j] += pad;
  }
  return out;
}

double tv_histogram(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Binning& bins) {
  if (a.cols() != b.cols()) throw Error(Errc::invalid_argument, "batches differ in dimension");
  if (a.cols() > 2) {
    throw Error(Errc::unsupported, "histogram TV supports d <= 2; project onto a direction first");
  }
  if (bins.lo.size() != a.cols() || bins.bins < 1) {
    throw Error(Errc::invalid_argument, "binning does not match the batches");
  }
  if (a.rows() == 0 || b.rows() == 0) throw Error(Errc::invalid_argument, "empty batch");

  const long long overflow = -1;
  auto cell = [&](const Eigen::MatrixXd& m, Eigen::Index i) -> long long {
    long long index = 0;
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double width = (bins.hi[j] - bins.lo[j]) / bins.bins;
      const double v = m(i, j);
      if (!(v >= bins.lo[j] && v <= bins.hi[j])) return overflow;
      long long k = static_cast<long long>(std::floor((v - bins.lo[j]) / width));
      k = std::clamp<long long>(k, 0, bins.bins - 1);
      index = index * bins.bins + k;
    }
    return index;
  };

  // Integer counts, so identical histograms give exactly zero.
  std::map<long long, std::pair<long long, long long>> counts;
  for (Eigen::Index i = 0; i < a.rows(); ++i) ++counts[cell(a, i)].first;
  for (Eigen::Index i = 0; i < b.rows(); ++i) ++counts[cell(b, i)].second;
  const double na = static_cast<double>(a.rows());
  const double nb = static_cast<double>(b.rows());
  double total = 0.0;
  for (const auto& [key, c] : counts) {
    total += std::abs(static_cast<double>(c.first) / na - static_cast<double>(c.second) / nb);
  }
  return std::min(1.0, 0.5 * total);
}

Eigen::VectorXd project_rows(const Eigen::MatrixXd& samples, const Eigen::VectorXd& direction) {
  if (direction.size() != samples.cols()) {
    throw Error(Errc::invalid_argument, "projection direction dimension mismatch");
  }
  return samples * direction;
}

double wasserstein_1d(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() == 0 || b.size() == 0) throw Error(Errc::invalid_argument, "empty batch");
  const std::vector<double> sa = sorted_copy(a);
  const std::vector<double> sb = sorted_copy(b);
  const double na = static_cast<double>(sa.size());
  const double nb = static_cast<double>(sb.size());

  // Walk the merged jump points; F_a and F_b are step functions between them.
  std::size_t i = 0, j = 0;
  double total = 0.0;
  double prev = std::min(sa.front(), sb.front());
  while (i < sa.size() || j < sb.size()) {
    const double next = (j >= sb.size() || (i < sa.size() && sa[i] <= sb[j])) ? sa[i] : sb[j];
    total += std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb) * (next - prev);
    while (i < sa.size() && sa[i] == next) ++i;
    while (j < sb.size() && sb[j] == next) ++j;
    prev = next;
  }
  return total;
}

double ks_statistic(const Eigen::VectorXd& samples, const Cdf& cdf) {
  if (samples.size() == 0) throw Error(Errc::invalid_argument, "empty batch");
  const std::vector<double> s = sorted_copy(samples);
  const double n = static_cast<double>(s.size());
  double d = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double f = cdf(s[i]);
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
  }
  return d;
}

}  // namespace doit
