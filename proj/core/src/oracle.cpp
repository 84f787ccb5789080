#include "doit/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <limits>

#include "doit/error.hpp"

namespace doit {

namespace {

const GaussianComponent& gaussian_component(const ScoreModel& model) {
  if (model.family() != ScoreFamily::gaussian) {
    throw Error(Errc::unsupported, "closed-form oracles need a gaussian score model");
  }
  return model.components().front();
}

// Linear functional a.x under the law: mean and standard deviation.
struct Projection {
  double mean = 0.0;
  double sd = 0.0;
  Eigen::VectorXd dmean;  // d mean / dx = A^T a
};

Projection project(const AffineLaw& law, const Eigen::VectorXd& a, const Eigen::VectorXd& x) {
  if (a.size() != law.A.rows() || x.size() != law.A.cols()) {
    throw Error(Errc::invalid_argument, "dimension mismatch between law, reward and x");
  }
  Projection p;
  p.mean = a.dot(law.mean(x));
  p.sd = std::sqrt(std::max(0.0, a.dot(law.C * a)));
  p.dmean = law.A.transpose() * a;
  return p;
}

double finite_r_max(const HSpec& hspec) {
  const double r_max = hspec.reward.r_max();
  if (!std::isfinite(r_max)) {
    throw Error(Errc::evaluation, "exp_tilt oracle needs a declared finite r_max");
  }
  return r_max;
}

enum class Case { tilt_linear, indicator_linear, tilt_step };

Case classify(const HSpec& hspec) {
  const RewardKind rk = hspec.reward.kind();
  if (hspec.kind == HKind::exp_tilt && rk == RewardKind::linear) return Case::tilt_linear;
  if (hspec.kind == HKind::indicator && rk == RewardKind::linear) return Case::indicator_linear;
  if (hspec.kind == HKind::exp_tilt && rk == RewardKind::threshold_step) return Case::tilt_step;
  throw Error(Errc::unsupported, std::string("no closed form for h = ") + h_kind_name(hspec.kind) +
                                     " with a " + reward_kind_name(rk) + " reward");
}

// Standardized distance of the conditional mean above a threshold.
double z_score(const Projection& p, double threshold) { return (p.mean - threshold) / p.sd; }

}  // namespace

double normal_cdf(double z) noexcept { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_log_cdf(double z) noexcept {
  if (z > -30.0) return std::log(normal_cdf(z));
  // Asymptotic series of the Mills ratio.
  const double z2 = z * z;
  const double series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
  return -0.5 * z2 - std::log(-z) - 0.5 * std::log(2.0 * std::numbers::pi) + std::log(series);
}

double normal_hazard(double z) noexcept {
  if (z > -30.0) {
    const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
    return pdf / normal_cdf(z);
  }
  const double z2 = z * z;
  return -z / (1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2));
}

AffineLaw backward_affine_law(const DiffusionChain& chain, int from_l, int to_k) {
  const GaussianComponent& g = gaussian_component(chain.model());
  if (to_k < 0 || from_l < to_k || from_l > chain.steps()) {
    throw Error(Errc::invalid_argument, "need 0 <= to_k <= from_l <= L");
  }
  const Eigen::Index d = chain.dim();
  // Scalar composition: every step is x -> a x + b + std z with a scalar a.
  double A = 1.0, C = 0.0;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(d);
  for (int j = from_l; j > to_k; --j) {
    const StepCoefficients& c = chain.step(j);
    const double t = chain.time(j);
    const double vt = std::exp(-t) * g.variance - std::expm1(-t);
    const double scale = chain.state_scale(j);
    // score(scale x) = -(scale x - exp(-t/2) m) / vt
    const double a_j = c.lin - c.score * scale / vt;
    const double shift = c.score * std::exp(-0.5 * t) / vt;
    A = a_j * A;
    b = a_j * b + shift * g.mean;
    C = a_j * a_j * C + c.std * c.std;
  }
  AffineLaw law;
  law.A = A * Eigen::MatrixXd::Identity(d, d);
  law.b = std::move(b);
  law.C = C * Eigen::MatrixXd::Identity(d, d);
  return law;
}

AffineLaw compose(const AffineLaw& outer, const AffineLaw& inner) {
  AffineLaw law;
  law.A = outer.A * inner.A;
  law.b = outer.A * inner.b + outer.b;
  law.C = outer.A * inner.C * outer.A.transpose() + outer.C;
  return law;
}

double exact_log_h(const AffineLaw& law, const HSpec& hspec, const Eigen::VectorXd& x) {
  const Case kind = classify(hspec);
  const Projection p = project(law, hspec.reward.direction(), x);
  switch (kind) {
    case Case::tilt_linear:
      return (p.mean - finite_r_max(hspec)) / hspec.tau + p.sd * p.sd / (2.0 * hspec.tau * hspec.tau);
    case Case::indicator_linear:
      if (p.sd == 0.0) {
        return p.mean >= hspec.r0 ? 0.0 : -std::numeric_limits<double>::infinity();
      }
      return normal_log_cdf(z_score(p, hspec.r0));
    case Case::tilt_step: {
      // h = e^{-1/tau} + (1 - e^{-1/tau}) P(a.x >= thr), with r_max = 1.
      const double miss = std::exp((0.0 - finite_r_max(hspec)) / hspec.tau);
      const double hit = std::exp((1.0 - finite_r_max(hspec)) / hspec.tau);
      const double prob = p.sd == 0.0 ? (p.mean >= hspec.reward.threshold() ? 1.0 : 0.0)
                                      : normal_cdf(z_score(p, hspec.reward.threshold()));
      return std::log(miss + (hit - miss) * prob);
    }
  }
  return 0.0;
}

double exact_h(const AffineLaw& law, const HSpec& hspec, const Eigen::VectorXd& x) {
  return std::exp(exact_log_h(law, hspec, x));
}

Eigen::VectorXd exact_grad_log_h(const AffineLaw& law, const HSpec& hspec,
                                 const Eigen::VectorXd& x) {
  const Case kind = classify(hspec);
  const Projection p = project(law, hspec.reward.direction(), x);
  switch (kind) {
    case Case::tilt_linear:
      return p.dmean / hspec.tau;
    case Case::indicator_linear:
      if (p.sd == 0.0) return Eigen::VectorXd::Zero(x.size());
      return (normal_hazard(z_score(p, hspec.r0)) / p.sd) * p.dmean;
    case Case::tilt_step: {
      if (p.sd == 0.0) return Eigen::VectorXd::Zero(x.size());
      const double miss = std::exp(-finite_r_max(hspec) / hspec.tau);
      const double hit = std::exp((1.0 - finite_r_max(hspec)) / hspec.tau);
      const double z = z_score(p, hspec.reward.threshold());
      const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
      const double h = miss + (hit - miss) * normal_cdf(z);
      return ((hit - miss) * pdf / (p.sd * h)) * p.dmean;
    }
  }
  return Eigen::VectorXd::Zero(x.size());
}

Eigen::MatrixXd transition_mean_jacobian(const DiffusionChain& chain, const Eigen::VectorXd& x,
                                         int l) {
  if (!chain.model().analytic()) {
    throw Error(Errc::unsupported, "mean jacobian needs an analytic score model");
  }
  const StepCoefficients& c = chain.step(l);
  const double scale = chain.state_scale(l);
  Eigen::MatrixXd D = (c.score * scale) * chain.model().jacobian(scale * x, chain.time(l));
  D.diagonal().array() += c.lin;
  return D;
}

GaussianComponent tilted_gaussian_target(const ScoreModel& model, const Eigen::VectorXd& direction,
                                         double tau) {
  if (!(tau > 0.0)) throw Error(Errc::invalid_argument, "tau must be > 0");
  const GaussianComponent& g = gaussian_component(model);
  if (direction.size() != g.mean.size()) {
    throw Error(Errc::invalid_argument, "reward direction dimension mismatch");
  }
  GaussianComponent out = g;
  out.weight = 1.0;
  out.mean = g.mean + (g.variance / tau) * direction;
  return out;
}

ProposalSampler data_proposals(const ScoreModel& model) {
  if (!model.analytic()) throw Error(Errc::unsupported, "external models cannot sample data");
  return [model](std::uint64_t seed, std::uint64_t k) {
    RandomStream rs(seed, StreamFamily::proposal, static_cast<std::uint32_t>(k),
                    static_cast<std::uint32_t>(k >> 32));
    return model.sample_data(rs);
  };
}

RejectionResult rejection_sample_target(const ProposalSampler& base, const HSpec& hspec, int n,
                                        std::uint64_t seed, const RejectionOptions& options) {
  if (n < 1) throw Error(Errc::invalid_argument, "n must be >= 1");
  if (options.chunk < 1) throw Error(Errc::invalid_argument, "chunk must be >= 1");
  hspec.validate();

  RejectionResult result;
  result.batch.seed = seed;
  std::vector<Eigen::VectorXd> kept;
  kept.reserve(static_cast<std::size_t>(n));

  const int chunk = options.chunk;
  std::vector<Eigen::VectorXd> draws(static_cast<std::size_t>(chunk));
  std::vector<char> accept(static_cast<std::size_t>(chunk));
  std::exception_ptr failure;
  int threads = options.jobs > 0 ? options.jobs : 0;
  (void)threads;

  long long next = 0;
  while (static_cast<int>(kept.size()) < n) {
    if (next >= options.max_proposals) {
      throw Error(Errc::low_acceptance, "proposal budget exhausted");
    }
#pragma omp parallel for schedule(static) if (threads != 1)
    for (int i = 0; i < chunk; ++i) {
      if (failure) continue;
      try {
        const std::uint64_t k = static_cast<std::uint64_t>(next + i);
        draws[static_cast<std::size_t>(i)] = base(seed, k);
        RandomStream us(seed, StreamFamily::auxiliary, static_cast<std::uint32_t>(k),
                        static_cast<std::uint32_t>(k >> 32));
        accept[static_cast<std::size_t>(i)] =
            acceptance_event(hspec, draws[static_cast<std::size_t>(i)], us.uniform()) ? 1 : 0;
      } catch (...) {
#pragma omp critical(doit_rejection_error)
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);

    for (int i = 0; i < chunk; ++i) {
      ++result.proposals;
      if (accept[static_cast<std::size_t>(i)] != 0) {
        ++result.accepted;
        kept.push_back(std::move(draws[static_cast<std::size_t>(i)]));
        if (static_cast<int>(kept.size()) == n) break;
      }
      if (result.proposals == options.floor_window &&
          static_cast<double>(result.accepted) <
              options.min_acceptance * static_cast<double>(result.proposals)) {
        throw Error(Errc::low_acceptance,
                    "acceptance rate " +
                        std::to_string(static_cast<double>(result.accepted) /
                                       static_cast<double>(result.proposals)) +
                        " below floor over the first " + std::to_string(options.floor_window) +
                        " proposals");
      }
    }
    next += chunk;
  }

  const Eigen::Index d = kept.front().size();
  result.batch.data.resize(n, d);
  for (int i = 0; i < n; ++i) result.batch.data.row(i) = kept[static_cast<std::size_t>(i)].transpose();
  result.acceptance_rate =
      static_cast<double>(result.accepted) / static_cast<double>(result.proposals);
  return result;
}

Eigen::VectorXd finite_difference_grad(const ScalarField& f, const Eigen::VectorXd& x,
                                       double step) {
  if (!(step > 0.0)) throw Error(Errc::invalid_argument, "finite difference step must be > 0");
  Eigen::VectorXd grad(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double up = f(probe);
    probe[i] = x[i] - step;
    const double down = f(probe);
    probe[i] = x[i];
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

}  // namespace doit
