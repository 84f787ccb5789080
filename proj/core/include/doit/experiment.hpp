#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "doit/config.hpp"
#include "doit/metrics.hpp"
#include "doit/sampler.hpp"

namespace doit {

enum class Command { sample, steer, prototype, oracle, eval, sweep };

std::optional<Command> parse_command(std::string_view name);
const char* command_name(Command command) noexcept;

/// Command-line overrides. The seed precedence is --seed, then DOIT_SEED, then
/// run.seed from the file.
struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::string> out;
  std::vector<double> tau;
  std::vector<double> gamma;
};

/// Applies the overrides. `env_seed` is the raw DOIT_SEED value, if set.
void apply_overrides(ExperimentConfig& cfg, const RunOverrides& overrides,
                     const char* env_seed);

/// Runs one subcommand and writes its files under cfg.out. Throws doit::Error.
void run_experiment(Command command, const ExperimentConfig& cfg, std::ostream& log);

/// 0 success, 2 configuration error, 3 anything else.
int exit_code_for(const std::exception& e) noexcept;

/// Seed of sweep cell (tau_index, gamma_index); cell (0, 0) keeps the master seed.
std::uint64_t sweep_cell_seed(std::uint64_t master, int tau_index, int gamma_index,
                              int gamma_count) noexcept;

/// `dim_0,...,dim_{d-1},reward` with 17 significant digits, LF line endings.
std::string samples_csv(const Eigen::MatrixXd& data, const RewardSpec& reward);
/// Reads the dim_* columns of a samples CSV; other columns are ignored.
Eigen::MatrixXd read_samples_csv(const std::string& path);

/// Writes to a temporary file next to `path`, then renames it into place.
void write_file_atomic(const std::string& path, const std::string& contents);

/// Formats a double with 17 significant digits.
std::string format_double(double v);

}  // namespace doit
