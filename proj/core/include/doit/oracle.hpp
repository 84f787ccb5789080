#pragma once

#include <cstdint>
#include <functional>

#include <Eigen/Core>

#include "doit/chain.hpp"
#include "doit/reward.hpp"
#include "doit/sampler.hpp"

namespace doit {

/// X_k | X_l = x ~ N(A x + b, C) for the exact-score backward chain, in the
/// kernel's sampler-state coordinates.
struct AffineLaw {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::MatrixXd C;

  Eigen::VectorXd mean(const Eigen::VectorXd& x) const { return A * x + b; }
};

/// Composes the affine-Gaussian steps from step `from_l` down to `to_k`.
/// Gaussian score models only; anything else raises Errc::unsupported.
AffineLaw backward_affine_law(const DiffusionChain& chain, int from_l, int to_k = 0);

/// Law of X_k | X_l followed by X_j | X_k, i.e. the law of X_j | X_l.
AffineLaw compose(const AffineLaw& outer, const AffineLaw& inner);

/// h(x, t_l) = E[h(X_0, 0) | X_l = x] for a linear reward under `law`.
/// Supported: exp_tilt and indicator with a linear reward, exp_tilt with a
/// threshold_step reward. exp_tilt needs a finite r_max.
double exact_h(const AffineLaw& law, const HSpec& hspec, const Eigen::VectorXd& x);
double exact_log_h(const AffineLaw& law, const HSpec& hspec, const Eigen::VectorXd& x);
Eigen::VectorXd exact_grad_log_h(const AffineLaw& law, const HSpec& hspec,
                                 const Eigen::VectorXd& x);

/// d mean / dx of the one-step transition at step l with the exact score Jacobian.
Eigen::MatrixXd transition_mean_jacobian(const DiffusionChain& chain, const Eigen::VectorXd& x,
                                         int l);

/// Exponential tilt of a Gaussian model by a linear reward: N(m + s^2 a / tau, s^2 I).
GaussianComponent tilted_gaussian_target(const ScoreModel& model, const Eigen::VectorXd& direction,
                                         double tau);

/// Proposal k of a rejection run; deterministic in (seed, k).
using ProposalSampler = std::function<Eigen::VectorXd(std::uint64_t seed, std::uint64_t k)>;

/// Exact draws from the model's t = 0 law; proposal k reads
/// stream (seed, proposal, low word of k, high word of k).
ProposalSampler data_proposals(const ScoreModel& model);

struct RejectionOptions {
  double min_acceptance = 1e-4;
  long long floor_window = 100000;  // proposals before the floor is enforced
  long long max_proposals = 2000000000LL;
  int chunk = 8192;
  int jobs = 0;
};

struct RejectionResult {
  SampleBatch batch;
  long long proposals = 0;
  long long accepted = 0;
  double acceptance_rate = 0.0;  // estimate of P(E) = rho
};

/// Keeps proposal x iff u <= h(x, 0), u from stream (seed, auxiliary, k_lo, k_hi).
/// Accepted samples keep proposal order, independent of the worker count.
RejectionResult rejection_sample_target(const ProposalSampler& base, const HSpec& hspec, int n,
                                        std::uint64_t seed, const RejectionOptions& options = {});

using ScalarField = std::function<double(const Eigen::VectorXd& x)>;

/// Central differences with the same step in every coordinate.
Eigen::VectorXd finite_difference_grad(const ScalarField& f, const Eigen::VectorXd& x,
                                       double step);

/// Standard normal cdf and log cdf, accurate in the far lower tail.
double normal_cdf(double z) noexcept;
double normal_log_cdf(double z) noexcept;
/// phi(z) / Phi(z).
double normal_hazard(double z) noexcept;

}  // namespace doit
