#include "doit/sampler.hpp"

#include <memory>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "doit/error.hpp"

namespace doit {

Sampler::Sampler(const DiffusionChain& chain) : chain_(chain) {}

Sampler::Sampler(const DiffusionChain& chain, HSpec hspec, DoobConfig config, SamplerMode mode)
    : chain_(chain), mode_(mode), hspec_(std::move(hspec)), config_(config) {
  if (mode_ == SamplerMode::prototypical) {
    config_.gamma = 1.0;
    config_.l_star = chain.steps();
    config_.estimator = EstimatorKind::rollout;
  }
  if (mode_ == SamplerMode::vanilla) {
    l_star_ = 0;
    return;
  }
  config_.validate(chain.steps());
  hspec_->validate();
  l_star_ = config_.effective_l_star(chain.steps());
  for (int l = 2; l <= l_star_; ++l) {
    if (!(chain.step(l).std > 0.0)) {
      throw Error(Errc::config, "corrected step " + std::to_string(l) + " has zero noise under " +
                                    std::string(chain.kernel().name()) +
                                    "; use a stochastic kernel or lower doob.l_star");
    }
  }
  if (config_.jacobian == JacobianMode::exact && !chain.model().analytic()) {
    throw Error(Errc::config, "doob.jacobian = exact needs an analytic score model");
  }
}

void Sampler::trajectory(std::uint64_t seed, std::uint32_t index, DoobEstimator* estimator,
                         Eigen::Ref<Eigen::VectorXd> out, TrajectoryStats& stats) const {
  const int L = chain_.steps();
  const Eigen::Index d = chain_.dim();
  Eigen::VectorXd x(d), score(d), noise(d);

  RandomStream init(seed, StreamFamily::initial, index);
  init.fill_normal(x);
  if (chain_.state_scale(L) != 1.0) x /= chain_.state_scale(L);

  const TrajectoryKey key{seed, index};
  for (int l = L; l >= 1; --l) {
    const StepCoefficients& c = chain_.step(l);
    if (estimator != nullptr && l > 1 && l <= l_star_) {
      ScoreEval ev = score_for_estimate(chain_, x, l, config_.jacobian);
      const DoobEstimate est = estimator->estimate(x, l, ev, key);
      score = ev.value + (config_.gamma / chain_.state_scale(l)) * est.grad_log_h_hat;
      stats.nfe += 1 + est.nfe_added;
      stats.estimator_calls += 1;
      if (est.truncation_active) stats.truncation_events += 1;
    } else {
      chain_.score_at_state(x, l, score);
      stats.nfe += 1;
    }
    x = c.lin * x + c.score * score;
    if (c.std > 0.0) {
      RandomStream rs(seed, StreamFamily::step, index, static_cast<std::uint32_t>(l));
      rs.fill_normal(noise);
      x += c.std * noise;
    }
  }
  out = chain_.state_scale(0) * x;
}

Eigen::VectorXd Sampler::draw(std::uint64_t seed, std::uint32_t index, TrajectoryStats* stats) const {
  std::unique_ptr<DoobEstimator> estimator;
  if (mode_ != SamplerMode::vanilla) {
    estimator = std::make_unique<DoobEstimator>(chain_, *hspec_, config_);
  }
  Eigen::VectorXd out(chain_.dim());
  TrajectoryStats local;
  trajectory(seed, index, estimator.get(), out, local);
  if (stats != nullptr) *stats = local;
  return out;
}

SampleBatch Sampler::run(int n, std::uint64_t seed, int jobs) const {
  if (n < 1) throw Error(Errc::invalid_argument, "sample count n must be >= 1");
  SampleBatch batch;
  batch.seed = seed;
  batch.data.resize(n, chain_.dim());
  std::vector<TrajectoryStats> stats(static_cast<std::size_t>(n));

  // Exceptions cannot cross an OpenMP region, so the first one is carried out.
  std::exception_ptr failure;
  int threads = jobs > 0 ? jobs : 1;
#ifdef _OPENMP
  if (jobs <= 0) threads = omp_get_max_threads();
#endif
  (void)threads;
#pragma omp parallel num_threads(threads)
  {
    std::unique_ptr<DoobEstimator> estimator;
    Eigen::VectorXd out(chain_.dim());
    try {
      if (mode_ != SamplerMode::vanilla) {
        estimator = std::make_unique<DoobEstimator>(chain_, *hspec_, config_);
      }
    } catch (...) {
#pragma omp critical(doit_sampler_error)
      if (!failure) failure = std::current_exception();
    }
#pragma omp for schedule(dynamic, 16)
    for (int i = 0; i < n; ++i) {
      if (failure) continue;
      try {
        trajectory(seed, static_cast<std::uint32_t>(i), estimator.get(), out,
                   stats[static_cast<std::size_t>(i)]);
        batch.data.row(i) = out.transpose();
      } catch (...) {
#pragma omp critical(doit_sampler_error)
        if (!failure) failure = std::current_exception();
      }
    }
  }
  if (failure) std::rethrow_exception(failure);

  for (const TrajectoryStats& s : stats) {
    batch.nfe_total += s.nfe;
    batch.estimator_calls += s.estimator_calls;
    batch.truncation_events += s.truncation_events;
  }
  batch.truncation_rate =
      batch.estimator_calls > 0
          ? static_cast<double>(batch.truncation_events) / static_cast<double>(batch.estimator_calls)
          : 0.0;
  if (!batch.data.allFinite()) {
    throw Error(Errc::evaluation, "sampler produced non-finite output");
  }
  return batch;
}

SampleBatch sample_vanilla(const DiffusionChain& chain, int n, std::uint64_t seed, int jobs) {
  return Sampler(chain).run(n, seed, jobs);
}

SampleBatch sample_doit(const DiffusionChain& chain, const HSpec& hspec, const DoobConfig& config,
                        int n, std::uint64_t seed, int jobs) {
  return Sampler(chain, hspec, config, SamplerMode::doit).run(n, seed, jobs);
}

SampleBatch sample_doit_prototypical(const DiffusionChain& chain, const HSpec& hspec,
                                     const DoobConfig& config, int n, std::uint64_t seed,
                                     int jobs) {
  return Sampler(chain, hspec, config, SamplerMode::prototypical).run(n, seed, jobs);
}

long long prototypical_nfe(int steps, int num_samples) noexcept {
  const long long L = steps;
  // sum_{l=2}^{L} (l - 1) = L (L - 1) / 2
  return L + static_cast<long long>(num_samples) * (L * (L - 1) / 2);
}

BestOfK best_of_k(const InnerSampler& inner, int K, const RewardSpec& reward, std::uint64_t seed,
                  std::uint32_t first_index) {
  if (K < 1) throw Error(Errc::invalid_argument, "best_of_k needs K >= 1");
  BestOfK best;
  for (int k = 0; k < K; ++k) {
    Eigen::VectorXd x = inner(seed, first_index + static_cast<std::uint32_t>(k));
    const double r = eval_reward(reward, x);
    if (k == 0 || r > best.reward) {
      best.sample = std::move(x);
      best.reward = r;
      best.index = k;
    }
  }
  return best;
}

const char* sampler_mode_name(SamplerMode mode) noexcept {
  switch (mode) {
    case SamplerMode::vanilla: return "vanilla";
    case SamplerMode::doit: return "doit";
    case SamplerMode::prototypical: return "prototypical";
  }
  return "unknown";
}

}  // namespace doit
