#include "doit/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <unistd.h>

#include <json.hpp>

#include "doit/error.hpp"
#include "doit/oracle.hpp"

namespace doit {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

void dump(const json& j, std::string& out) {
  switch (j.type()) {
    case json::value_t::object: {
      out += '{';
      bool first = true;
      for (const auto& [k, v] : j.items()) {
        if (!first) out += ',';
        first = false;
        out += json(k).dump();
        out += ':';
        dump(v, out);
      }
      out += '}';
      break;
    }
    case json::value_t::array: {
      out += '[';
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i > 0) out += ',';
        dump(j[i], out);
      }
      out += ']';
      break;
    }
    case json::value_t::number_float: {
      const double v = j.get<double>();
      out += std::isfinite(v) ? format_double(v) : "null";
      break;
    }
    default:
      out += j.dump();
  }
}

std::string dump_report(const json& j) {
  std::string out;
  dump(j, out);
  out += '\n';
  return out;
}

json summary_json(const RewardSummary& s) {
  return json{{"min", s.min}, {"q1", s.q1}, {"mean", s.mean}, {"q3", s.q3},
              {"max", s.max}, {"std", s.std}, {"n", s.n}};
}

std::string out_path(const ExperimentConfig& cfg, const std::string& name) {
  return (fs::path(cfg.out) / name).string();
}

void ensure_out_dir(const ExperimentConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.out, ec);
  if (ec) throw Error(Errc::io, "cannot create output directory " + cfg.out + ": " + ec.message());
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

json kappa_json(const NoiseSchedule& schedule, const KernelKind& kernel) {
  try {
    return kappa_sigma(schedule, kernel);
  } catch (const Error&) {
    return nullptr;  // deterministic kernel: sigma = 0 somewhere
  }
}

std::optional<double> oracle_rho(const ExperimentConfig& cfg) {
  if (cfg.oracle_dir.empty()) return std::nullopt;
  const std::string path = (fs::path(cfg.oracle_dir) / "report.json").string();
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "run.oracle_dir has no report.json: " + path);
  const json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.contains("acceptance_rate")) {
    throw Error(Errc::io, path + " has no acceptance_rate");
  }
  return j.at("acceptance_rate").get<double>();
}

// r_max of a linear reward over the box mean +- 8 sd of a gaussian model.
std::optional<double> box_r_max(const ExperimentConfig& cfg) {
  if (cfg.family != "gaussian" || cfg.reward_kind != RewardKind::linear) return std::nullopt;
  const ScoreModel model = build_model(cfg);
  const GaussianComponent& g = model.components().front();
  const Eigen::VectorXd a = reward_direction(cfg);
  return a.dot(g.mean) + 8.0 * std::sqrt(g.variance) * a.lpNorm<1>();
}

struct RunResult {
  SampleBatch batch;
  RewardSummary summary;
  double wall = 0.0;
};

RunResult run_sampler(Command command, const ExperimentConfig& cfg, int jobs) {
  const auto start = std::chrono::steady_clock::now();
  const DiffusionChain chain(build_model(cfg), build_schedule(cfg), cfg.kernel);
  const RewardSpec reward = build_reward(cfg);
  RunResult r;
  switch (command) {
    case Command::sample:
      r.batch = sample_vanilla(chain, cfg.n, cfg.seed, jobs);
      break;
    case Command::steer: {
      const Sampler sampler(chain, build_hspec(cfg), cfg.doob, SamplerMode::doit);
      r.batch = sampler.run(cfg.n, cfg.seed, jobs);
      break;
    }
    case Command::prototype: {
      const Sampler sampler(chain, build_hspec(cfg), cfg.doob, SamplerMode::prototypical);
      r.batch = sampler.run(cfg.n, cfg.seed, jobs);
      break;
    }
    default:
      throw Error(Errc::invalid_argument, "not a sampling command");
  }
  r.batch.config_digest = config_digest(cfg);
  r.summary = summary_stats(r.batch.data, reward);
  r.wall = seconds_since(start);
  return r;
}

void run_sampling(Command command, const ExperimentConfig& cfg, std::ostream& log) {
  const RunResult r = run_sampler(command, cfg, cfg.jobs);
  const NoiseSchedule schedule = build_schedule(cfg);
  json report{
      {"command", command_name(command)},
      {"config_digest", r.batch.config_digest},
      {"seed", cfg.seed},
      {"n", cfg.n},
      {"dim", cfg.dim},
      {"summary", summary_json(r.summary)},
      {"nfe_total", r.batch.nfe_total},
      {"estimator_calls", r.batch.estimator_calls},
      {"truncation_rate", r.batch.truncation_rate},
      {"wall_seconds", r.wall},
      {"kappa_sigma", kappa_json(schedule, cfg.kernel)},
  };
  if (const auto rho = oracle_rho(cfg)) report["rho"] = *rho;

  const std::string csv = samples_csv(r.batch.data, build_reward(cfg));
  ensure_out_dir(cfg);
  write_file_atomic(out_path(cfg, "samples.csv"), csv);
  write_file_atomic(out_path(cfg, "report.json"), dump_report(report));
  log << command_name(command) << ": n=" << cfg.n << " mean reward " << r.summary.mean
      << " nfe " << r.batch.nfe_total << " (" << r.wall << " s)\n";
}

void run_oracle(const ExperimentConfig& cfg_in, std::ostream& log) {
  const auto start = std::chrono::steady_clock::now();
  ExperimentConfig cfg = cfg_in;
  std::string r_max_source = cfg.r_max ? "config" : "none";
  if (!cfg.r_max && cfg.h_kind == HKind::exp_tilt) {
    cfg.r_max = box_r_max(cfg);
    if (!cfg.r_max) throw Error(Errc::config, "oracle with exp_tilt needs h.rmax");
    r_max_source = "box";
  }
  const ScoreModel model = build_model(cfg);
  const HSpec hspec = build_hspec(cfg);
  RejectionOptions opts;
  opts.jobs = cfg.jobs;
  const RejectionResult rej = rejection_sample_target(data_proposals(model), hspec, cfg.n, cfg.seed, opts);
  const RewardSpec reward = build_reward(cfg);
  const RewardSummary summary = summary_stats(rej.batch.data, reward);

  json report{
      {"command", "oracle"},
      {"config_digest", config_digest(cfg_in)},
      {"seed", cfg.seed},
      {"n", cfg.n},
      {"dim", cfg.dim},
      {"summary", summary_json(summary)},
      {"proposals", rej.proposals},
      {"accepted", rej.accepted},
      {"acceptance_rate", rej.acceptance_rate},
      {"r_max_source", r_max_source},
  };
  if (cfg.r_max) report["r_max"] = *cfg.r_max;

  std::string table;
  if (model.family() == ScoreFamily::gaussian) {
    const DiffusionChain chain(model, build_schedule(cfg), cfg.kernel);
    try {
      const AffineLaw data_law{Eigen::MatrixXd::Zero(cfg.dim, cfg.dim), model.components()[0].mean,
                               model.components()[0].variance *
                                   Eigen::MatrixXd::Identity(cfg.dim, cfg.dim)};
      report["rho_exact"] = exact_h(data_law, hspec, Eigen::VectorXd::Zero(cfg.dim));

      std::ostringstream t;
      t << "l,t";
      for (int j = 0; j < cfg.dim; ++j) t << ",x_" << j;
      t << ",h,log_h";
      for (int j = 0; j < cfg.dim; ++j) t << ",grad_log_h_" << j;
      t << '\n';
      const Eigen::VectorXd dir = reward_direction(cfg).normalized();
      for (int l = 1; l <= cfg.L; ++l) {
        const AffineLaw law = backward_affine_law(chain, l, 0);
        // Centre of the state-coordinate marginal at step l.
        const double scale = chain.state_scale(l);
        const Eigen::VectorXd centre = std::exp(-0.5 * chain.time(l)) / scale * model.components()[0].mean;
        for (int p = 0; p < cfg.oracle_points; ++p) {
          const double s = cfg.oracle_points == 1
                               ? 0.0
                               : -cfg.oracle_span + 2.0 * cfg.oracle_span * p / (cfg.oracle_points - 1);
          const Eigen::VectorXd x = centre + (s / scale) * dir;
          const double log_h = exact_log_h(law, hspec, x);
          const Eigen::VectorXd g = exact_grad_log_h(law, hspec, x);
          t << l << ',' << format_double(chain.time(l));
          for (int j = 0; j < cfg.dim; ++j) t << ',' << format_double(x[j]);
          t << ',' << format_double(std::exp(log_h)) << ',' << format_double(log_h);
          for (int j = 0; j < cfg.dim; ++j) t << ',' << format_double(g[j]);
          t << '\n';
        }
      }
      table = t.str();
    } catch (const Error& e) {
      if (e.code() != Errc::unsupported) throw;
      log << "oracle: no closed-form h table (" << e.what() << ")\n";
    }
  }
  report["wall_seconds"] = seconds_since(start);

  const std::string csv = samples_csv(rej.batch.data, reward);
  ensure_out_dir(cfg);
  write_file_atomic(out_path(cfg, "samples.csv"), csv);
  if (!table.empty()) write_file_atomic(out_path(cfg, "h_table.csv"), table);
  write_file_atomic(out_path(cfg, "report.json"), dump_report(report));
  log << "oracle: " << rej.accepted << " of " << rej.proposals << " proposals accepted (rate "
      << rej.acceptance_rate << ")\n";
}

void run_eval(const ExperimentConfig& cfg, std::ostream& log) {
  if (cfg.eval_a.empty() || cfg.eval_b.empty()) {
    throw Error(Errc::config, "eval needs eval.a and eval.b");
  }
  const Eigen::MatrixXd a = read_samples_csv(cfg.eval_a);
  const Eigen::MatrixXd b = read_samples_csv(cfg.eval_b);
  if (a.cols() != b.cols()) throw Error(Errc::evaluation, "sample files differ in dimension");
  const Eigen::Index d = a.cols();

  Eigen::VectorXd dir = Eigen::VectorXd::Zero(d);
  dir[0] = 1.0;
  if (!cfg.eval_direction.empty()) {
    if (static_cast<Eigen::Index>(cfg.eval_direction.size()) != d) {
      throw Error(Errc::config, "eval.direction must match the sample dimension");
    }
    dir = Eigen::Map<const Eigen::VectorXd>(cfg.eval_direction.data(), d);
  }
  const Eigen::VectorXd pa = project_rows(a, dir);
  const Eigen::VectorXd pb = project_rows(b, dir);

  json report{
      {"command", "eval"},
      {"config_digest", config_digest(cfg)},
      {"a", cfg.eval_a},
      {"b", cfg.eval_b},
      {"n_a", a.rows()},
      {"n_b", b.rows()},
      {"dim", d},
      {"bins", cfg.bins},
      {"direction", std::vector<double>(dir.data(), dir.data() + d)},
      {"mean_a", pa.mean()},
      {"mean_b", pb.mean()},
      {"w1_projected", wasserstein_1d(pa, pb)},
  };
  if (d <= 2) {
    report["tv"] = tv_histogram(a, b, shared_binning(a, b, cfg.bins));
    report["tv_scope"] = "full";
  } else {
    const Eigen::MatrixXd ma = pa, mb = pb;
    report["tv"] = tv_histogram(ma, mb, shared_binning(ma, mb, cfg.bins));
    report["tv_scope"] = "projected";
  }
  ensure_out_dir(cfg);
  write_file_atomic(out_path(cfg, "report.json"), dump_report(report));
  log << "eval: tv " << report["tv"].get<double>() << " w1 "
      << report["w1_projected"].get<double>() << '\n';
}

void run_sweep(const ExperimentConfig& cfg, std::ostream& log) {
  const std::vector<double>& taus = cfg.sweep_tau;
  const std::vector<double>& gammas = cfg.sweep_gamma;
  if (taus.empty() || gammas.empty()) {
    throw Error(Errc::config, "sweep needs non-empty tau and gamma lists (--tau/--gamma or sweep.*)");
  }
  const int n_tau = static_cast<int>(taus.size());
  const int n_gamma = static_cast<int>(gammas.size());
  const int cells = n_tau * n_gamma;
  std::vector<std::string> rows(static_cast<std::size_t>(cells));

  auto run_cell = [&](int c, int sampler_jobs) {
    const int ti = c / n_gamma;
    const int gi = c % n_gamma;
    ExperimentConfig cell = cfg;
    cell.tau = taus[static_cast<std::size_t>(ti)];
    cell.doob.gamma = gammas[static_cast<std::size_t>(gi)];
    cell.seed = sweep_cell_seed(cfg.seed, ti, gi, n_gamma);
    std::ostringstream row;
    row << format_double(cell.tau) << ',' << format_double(cell.doob.gamma) << ',' << cell.seed
        << ',' << cell.n << ',';
    try {
      validate(cell);
      const RunResult r = run_sampler(Command::steer, cell, sampler_jobs);
      const RewardSummary& s = r.summary;
      row << format_double(s.min) << ',' << format_double(s.q1) << ',' << format_double(s.mean)
          << ',' << format_double(s.q3) << ',' << format_double(s.max) << ','
          << format_double(s.std) << ',' << r.batch.nfe_total << ','
          << format_double(r.batch.truncation_rate) << ',';
    } catch (const std::exception& e) {
      std::string msg = e.what();
      for (char& ch : msg) {
        if (ch == ',' || ch == '\n' || ch == '"') ch = ';';
      }
      row << ",,,,,,," << ',' << msg;
    }
    rows[static_cast<std::size_t>(c)] = row.str();
  };

  const int workers = std::min(cells, cfg.jobs > 1 ? cfg.jobs : 1);
  if (workers <= 1) {
    for (int c = 0; c < cells; ++c) run_cell(c, cfg.jobs);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int c = next++; c < cells; c = next++) run_cell(c, 1);
      });
    }
    for (std::thread& t : pool) t.join();
  }

  std::string csv = "tau,gamma,seed,n,min,q1,mean,q3,max,std,nfe_total,truncation_rate,error\n";
  for (const std::string& row : rows) csv += row + '\n';
  ensure_out_dir(cfg);
  write_file_atomic(out_path(cfg, "sweep.csv"), csv);
  log << "sweep: " << cells << " cells written to " << out_path(cfg, "sweep.csv") << '\n';
}

}  // namespace

std::optional<Command> parse_command(std::string_view name) {
  static const std::map<std::string_view, Command> names = {
      {"sample", Command::sample}, {"steer", Command::steer}, {"prototype", Command::prototype},
      {"oracle", Command::oracle}, {"eval", Command::eval},   {"sweep", Command::sweep}};
  const auto it = names.find(name);
  if (it == names.end()) return std::nullopt;
  return it->second;
}

const char* command_name(Command command) noexcept {
  switch (command) {
    case Command::sample: return "sample";
    case Command::steer: return "steer";
    case Command::prototype: return "prototype";
    case Command::oracle: return "oracle";
    case Command::eval: return "eval";
    case Command::sweep: return "sweep";
  }
  return "unknown";
}

void apply_overrides(ExperimentConfig& cfg, const RunOverrides& o, const char* env_seed) {
  if (o.seed) {
    cfg.seed = *o.seed;
  } else if (env_seed != nullptr && *env_seed != '\0') {
    const std::string s = env_seed;
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(s, &used, 10);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || s.front() == '-') {
      throw Error(Errc::config, "DOIT_SEED must be an unsigned integer, got \"" + s + "\"");
    }
    cfg.seed = v;
  }
  if (o.jobs) cfg.jobs = *o.jobs;
  if (o.out) cfg.out = *o.out;
  if (!o.tau.empty()) cfg.sweep_tau = o.tau;
  if (!o.gamma.empty()) cfg.sweep_gamma = o.gamma;
  validate(cfg);
}

void run_experiment(Command command, const ExperimentConfig& cfg, std::ostream& log) {
  switch (command) {
    case Command::sample:
    case Command::steer:
    case Command::prototype:
      run_sampling(command, cfg, log);
      return;
    case Command::oracle:
      run_oracle(cfg, log);
      return;
    case Command::eval:
      run_eval(cfg, log);
      return;
    case Command::sweep:
      run_sweep(cfg, log);
      return;
  }
}

int exit_code_for(const std::exception& e) noexcept {
  if (const auto* err = dynamic_cast<const Error*>(&e); err != nullptr && err->code() == Errc::config) {
    return 2;
  }
  return 3;
}

std::uint64_t sweep_cell_seed(std::uint64_t master, int tau_index, int gamma_index,
                              int gamma_count) noexcept {
  const auto cell = static_cast<std::uint64_t>(tau_index) * static_cast<std::uint64_t>(gamma_count) +
                    static_cast<std::uint64_t>(gamma_index);
  return master + 0x9e3779b97f4a7c15ULL * cell;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string samples_csv(const Eigen::MatrixXd& data, const RewardSpec& reward) {
  std::string out;
  for (Eigen::Index j = 0; j < data.cols(); ++j) out += "dim_" + std::to_string(j) + ",";
  out += "reward\n";
  Eigen::VectorXd row(data.cols());
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    row = data.row(i).transpose();
    for (Eigen::Index j = 0; j < data.cols(); ++j) {
      out += format_double(row[j]);
      out += ',';
    }
    out += format_double(eval_reward(reward, row));
    out += '\n';
  }
  return out;
}

Eigen::MatrixXd read_samples_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::io, path + " is empty");
  std::vector<int> dims;
  {
    std::stringstream header(line);
    std::string col;
    int index = 0;
    while (std::getline(header, col, ',')) {
      if (col.rfind("dim_", 0) == 0) dims.push_back(index);
      ++index;
    }
  }
  if (dims.empty()) throw Error(Errc::io, path + " has no dim_* columns");
  std::vector<double> values;
  long long rows = 0;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    int index = 0;
    std::size_t d = 0;
    while (std::getline(ss, cell, ',')) {
      if (d < dims.size() && index == dims[d]) {
        try {
          values.push_back(std::stod(cell));
        } catch (const std::exception&) {
          throw Error(Errc::io, path + ":" + std::to_string(line_no) + ": bad number \"" + cell + "\"");
        }
        ++d;
      }
      ++index;
    }
    if (d != dims.size()) throw Error(Errc::io, path + ":" + std::to_string(line_no) + ": short row");
    ++rows;
  }
  if (rows == 0) throw Error(Errc::io, path + " has no rows");
  Eigen::MatrixXd out(rows, static_cast<Eigen::Index>(dims.size()));
  for (long long i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < dims.size(); ++j) {
      out(i, static_cast<Eigen::Index>(j)) = values[static_cast<std::size_t>(i) * dims.size() + j];
    }
  }
  return out;
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp." + std::to_string(::getpid()) + "." +
                          std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io, "cannot write " + tmp);
    out << contents;
    out.flush();
    if (!out) throw Error(Errc::io, "short write to " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error(Errc::io, "cannot move " + tmp + " to " + path + ": " + ec.message());
  }
}

}  // namespace doit
