#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doit/config.hpp"
#include "doit/error.hpp"
#include "doit/experiment.hpp"

using namespace doit;

namespace {

const char* kBase = R"(# steering run
kernel = euler_ancestral
[schedule]
T = 1.0
L = 12
grid = log_snr
[model]
family = gaussian
dim = 2
mean = [0.5, -0.5]
[reward]
kind = linear
params = {"a": [1.0, 2.0]}
[h]
kind = exp_tilt
tau = 0.5
rmax = 10
[doob]
M = 32
gamma = 0.75
eta = decaying
[run]
n = 100
seed = 7
out = "some/dir"
)";

Errc code_of(const std::string& text) {
  try {
    parse_config(text, "cfg");
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected a configuration error");
  return Errc::io;
}

std::string message_of(const std::string& text) {
  try {
    parse_config(text, "cfg");
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("parse a full config") {
  const auto cfg = parse_config(kBase);
  CHECK(cfg.L == 12);
  CHECK(cfg.grid == GridKind::log_snr);
  CHECK(cfg.dim == 2);
  CHECK(cfg.mean == std::vector<double>{0.5, -0.5});
  CHECK(cfg.direction == std::vector<double>{1.0, 2.0});
  CHECK(cfg.tau == 0.5);
  CHECK(cfg.r_max.value() == 10.0);
  CHECK(cfg.doob.num_samples == 32);
  CHECK(cfg.doob.gamma == 0.75);
  CHECK(cfg.doob.eta.kind == TruncationRule::Kind::decaying);
  CHECK(cfg.seed == 7);
  CHECK(cfg.out == "some/dir");
  CHECK(cfg.kernel.is_ddim() == false);

  const auto hspec = build_hspec(cfg);
  CHECK(hspec.reward.r_max() == 10.0);
  CHECK(build_schedule(cfg).steps() == 12);
  CHECK(build_model(cfg).dim() == 2);
}

TEST_CASE("dotted keys and defaults") {
  const auto cfg = parse_config("kernel = ddim\nddim_eta = 0.5\ndoob.eta = none\nschedule.L = 3\n");
  CHECK(cfg.kernel.is_ddim());
  CHECK(cfg.kernel.eta == 0.5);
  CHECK(cfg.doob.eta.kind == TruncationRule::Kind::none);
  CHECK(cfg.L == 3);
  CHECK(cfg.T == 1.0);
  CHECK(parse_config("doob.eta = 0.25\n").doob.eta.value == 0.25);
  // A key already carrying its section is not prefixed twice.
  CHECK(parse_config("[doob]\ndoob.M = 5\n").doob.num_samples == 5);
}

TEST_CASE("errors carry the line number") {
  CHECK(code_of("schedule.L = 3\nbogus.key = 1\n") == Errc::config);
  CHECK(message_of("schedule.L = 3\nbogus.key = 1\n").find("cfg:2:") != std::string::npos);
  CHECK(message_of("[doob]\nM = 4\nM = 5\n").find("cfg:3:") != std::string::npos);
  CHECK(code_of("schedule.L = \"many\"\n") == Errc::config);
  CHECK(code_of("kernel = langevin\n") == Errc::config);
  CHECK(code_of("this line has no equals sign\n") == Errc::config);
  CHECK(code_of("reward.kind = linear\nreward.params = {\"center\": [0]}\n") == Errc::config);
  CHECK(code_of("doob.eta = sometimes\n") == Errc::config);
  CHECK(code_of("run.seed = -4\n") == Errc::config);
  CHECK_THROWS_AS(load_config("/nonexistent/doit.cfg"), Error);
}

TEST_CASE("cross-field validation") {
  CHECK_THROWS_AS(validate(parse_config("model.dim = 2\nmodel.mean = [1.0]\n")), Error);
  CHECK_THROWS_AS(validate(parse_config("schedule.L = 0\n")), Error);
  CHECK_NOTHROW(validate(parse_config(kBase)));
}

TEST_CASE("digest tracks semantic fields only") {
  const auto base = parse_config(kBase);
  const std::string d0 = config_digest(base);
  CHECK(d0.size() == 16);
  CHECK(config_digest(parse_config(kBase)) == d0);

  auto other = base;
  other.seed = 99;
  other.out = "elsewhere";
  other.jobs = 4;
  CHECK(config_digest(other) == d0);

  // Defaults written out explicitly change nothing, nor does a field the run ignores.
  CHECK(config_digest(parse_config("h.r0 = 0.5\n" + std::string(kBase))) == d0);
  CHECK(config_digest(parse_config("schedule.t_min = 0.001\n" + std::string(kBase))) == d0);

  for (const char* extra : {"doob.l_star = 4\n", "doob.estimator = rollout\n", "model.var = 2.0\n",
                            "schedule.t_min = 0.01\n", "doob.weights = absolute\n"}) {
    CHECK(config_digest(parse_config(extra + std::string(kBase))) != d0);
  }
  other = base;
  other.tau = 0.6;
  CHECK(config_digest(other) != d0);
  other = base;
  other.doob.gamma = 0.5;
  CHECK(config_digest(other) != d0);
  other = base;
  other.n = 101;
  CHECK(config_digest(other) != d0);
}

TEST_CASE("overrides") {
  auto cfg = parse_config(kBase);
  RunOverrides none;
  apply_overrides(cfg, none, nullptr);
  CHECK(cfg.seed == 7);
  apply_overrides(cfg, none, "123");
  CHECK(cfg.seed == 123);
  RunOverrides flag;
  flag.seed = 5;
  flag.jobs = 2;
  flag.out = "x";
  apply_overrides(cfg, flag, "123");
  CHECK(cfg.seed == 5);
  CHECK(cfg.jobs == 2);
  CHECK(cfg.out == "x");
  auto bad = parse_config(kBase);
  CHECK_THROWS_AS(apply_overrides(bad, none, "12abc"), Error);
}

TEST_CASE("commands and exit codes") {
  CHECK(parse_command("steer") == Command::steer);
  CHECK(parse_command("prototype") == Command::prototype);
  CHECK_FALSE(parse_command("train").has_value());
  CHECK(exit_code_for(Error(Errc::config, "x")) == 2);
  CHECK(exit_code_for(Error(Errc::low_acceptance, "x")) == 3);
  CHECK(exit_code_for(std::runtime_error("x")) == 3);
  CHECK(sweep_cell_seed(42, 0, 0, 3) == 42);
  CHECK(sweep_cell_seed(42, 1, 0, 3) != sweep_cell_seed(42, 0, 1, 3));
}

TEST_CASE("sample files round trip") {
  Eigen::MatrixXd data(2, 2);
  data << 0.1, 1.0 / 3.0, -2.5e-17, 7.0;
  const std::string csv = samples_csv(data, RewardSpec::linear(Eigen::Vector2d(1, 1)));
  CHECK(csv.rfind("dim_0,dim_1,reward\n", 0) == 0);
  CHECK(csv.find('\r') == std::string::npos);
  CHECK(format_double(0.1) == "0.10000000000000001");

  const auto dir = std::filesystem::temp_directory_path() / "doit_test_config";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "samples.csv").string();
  write_file_atomic(path, csv);
  CHECK(read_samples_csv(path) == data);
  std::filesystem::remove_all(dir);
}
