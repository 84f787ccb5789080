#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include <Eigen/Core>

#include "doit/chain.hpp"
#include "doit/doob.hpp"
#include "doit/reward.hpp"

namespace doit {

/// Terminal samples of one run plus its accounting.
struct SampleBatch {
  Eigen::MatrixXd data;  // n x d
  std::uint64_t seed = 0;
  std::string config_digest;
  long long nfe_total = 0;
  long long estimator_calls = 0;
  long long truncation_events = 0;
  double truncation_rate = 0.0;
};

enum class SamplerMode { vanilla, doit, prototypical };

/// Per-trajectory accounting returned by Sampler::draw.
struct TrajectoryStats {
  long long nfe = 0;
  long long estimator_calls = 0;
  long long truncation_events = 0;
};

/// Backward generation loop shared by the vanilla, practical and prototypical
/// samplers.
///
/// Trajectory i starts from stream (seed, initial, i) and step l draws its noise
/// from (seed, step, i, l). Estimators read their own families, so a steered run
/// with gamma = 0 reproduces the vanilla run bit for bit. Outputs do not depend on
/// the number of worker threads.
class Sampler {
 public:
  /// Vanilla sampler.
  explicit Sampler(const DiffusionChain& chain);
  /// Steered sampler. `prototypical` forces gamma = 1, l* = L and the rollout
  /// estimator. Throws Errc::config when a corrected step has zero noise.
  Sampler(const DiffusionChain& chain, HSpec hspec, DoobConfig config, SamplerMode mode);

  SamplerMode mode() const noexcept { return mode_; }
  const DoobConfig& config() const noexcept { return config_; }

  /// One terminal sample; deterministic in (seed, index).
  Eigen::VectorXd draw(std::uint64_t seed, std::uint32_t index,
                       TrajectoryStats* stats = nullptr) const;

  /// n trajectories with indices 0..n-1. `jobs` <= 0 uses the OpenMP default.
  SampleBatch run(int n, std::uint64_t seed, int jobs = 0) const;

 private:
  void trajectory(std::uint64_t seed, std::uint32_t index, DoobEstimator* estimator,
                  Eigen::Ref<Eigen::VectorXd> out, TrajectoryStats& stats) const;

  const DiffusionChain& chain_;
  SamplerMode mode_ = SamplerMode::vanilla;
  std::optional<HSpec> hspec_;
  DoobConfig config_;
  int l_star_ = 0;
};

SampleBatch sample_vanilla(const DiffusionChain& chain, int n, std::uint64_t seed, int jobs = 0);

SampleBatch sample_doit(const DiffusionChain& chain, const HSpec& hspec, const DoobConfig& config,
                        int n, std::uint64_t seed, int jobs = 0);

/// Rollout corrections at every step l = L..2 with gamma = 1. `config.gamma`,
/// `config.l_star` and `config.estimator` are ignored.
SampleBatch sample_doit_prototypical(const DiffusionChain& chain, const HSpec& hspec,
                                     const DoobConfig& config, int n, std::uint64_t seed,
                                     int jobs = 0);

/// Score evaluations a prototypical run of one trajectory costs:
/// L + sum_{l=2}^{L} M (l - 1).
long long prototypical_nfe(int steps, int num_samples) noexcept;

using InnerSampler = std::function<Eigen::VectorXd(std::uint64_t seed, std::uint32_t index)>;

struct BestOfK {
  Eigen::VectorXd sample;
  double reward = 0.0;
  int index = 0;  // position among the K draws
};

/// Draws inner(seed, first_index + k) for k < K and keeps the highest reward.
/// Ties go to the lowest k.
BestOfK best_of_k(const InnerSampler& inner, int K, const RewardSpec& reward, std::uint64_t seed,
                  std::uint32_t first_index = 0);

const char* sampler_mode_name(SamplerMode mode) noexcept;

}  // namespace doit
