#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "doit/chain.hpp"
#include "doit/doob.hpp"
#include "doit/reward.hpp"

namespace doit {

/// Flat experiment description read from `key = value` files.
///
///   # comment
///   kernel = euler_ancestral
///   [schedule]
///   T = 1.0             # read as schedule.T
///   [reward]
///   kind = linear
///   params = {"a": [1.0]}
///
/// Values are JSON (numbers, strings, arrays, true/false) or a bare word.
/// Unknown or repeated keys are errors.
struct ExperimentConfig {
  double T = 1.0;
  int L = 20;
  GridKind grid = GridKind::uniform;
  double t_min = kDefaultLogSnrTMin;

  std::string family = "gaussian";  // gaussian | gmm
  int dim = 1;
  std::vector<double> mean;         // gaussian; empty means the origin
  double var = 1.0;
  std::vector<double> weights;      // gmm
  std::vector<std::vector<double>> means;
  std::vector<double> vars;

  KernelKind kernel = KernelKind::euler_ancestral();

  RewardKind reward_kind = RewardKind::linear;
  // reward.params fields
  std::vector<double> direction;    // "a": linear, threshold_step; empty means all ones
  std::vector<double> center;       // "center": quadratic; empty means the origin
  double reward_scale = 1.0;        // "scale"
  double threshold = 0.0;           // "r0" of threshold_step
  std::string reward_name;          // "name"
  std::optional<double> r_max;      // h.rmax

  HKind h_kind = HKind::exp_tilt;
  double tau = 1.0;
  double r0 = 0.0;

  DoobConfig doob;

  int n = 1000;
  std::uint64_t seed = 0;
  std::string out = "out";
  int jobs = 0;
  std::string oracle_dir;

  std::string eval_a;
  std::string eval_b;
  int bins = 50;
  std::vector<double> eval_direction;

  std::vector<double> sweep_tau;
  std::vector<double> sweep_gamma;

  int oracle_points = 41;
  double oracle_span = 4.0;
};

/// `origin` prefixes error messages ("<origin>:<line>: ...").
ExperimentConfig parse_config(std::string_view text, const std::string& origin = "config");
ExperimentConfig load_config(const std::string& path);

/// Checks cross-field constraints (dimensions, enum combinations).
void validate(const ExperimentConfig& cfg);

/// Every semantically meaningful field, one `key = value` per line in key order.
/// run.seed, run.out and run.jobs are left out: the seed is reported on its own
/// and the other two do not change any output bit.
std::string canonical_form(const ExperimentConfig& cfg);
/// FNV-1a 64 of canonical_form, as 16 hex digits.
std::string config_digest(const ExperimentConfig& cfg);

ScoreModel build_model(const ExperimentConfig& cfg);
NoiseSchedule build_schedule(const ExperimentConfig& cfg);
RewardSpec build_reward(const ExperimentConfig& cfg);
HSpec build_hspec(const ExperimentConfig& cfg);
Eigen::VectorXd reward_direction(const ExperimentConfig& cfg);

}  // namespace doit
