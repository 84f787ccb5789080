#include "doit/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "doit/error.hpp"

namespace doit {

namespace {

using nlohmann::json;

struct Entry {
  json value;
  int line = 0;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "schedule.T", "schedule.L", "schedule.grid", "schedule.t_min",
      "model.family", "model.dim", "model.mean", "model.var", "model.weights", "model.means",
      "model.vars",
      "kernel", "ddim_eta",
      "reward.kind", "reward.params",
      "h.kind", "h.tau", "h.r0", "h.rmax",
      "doob.M", "doob.gamma", "doob.l_star", "doob.eta", "doob.estimator", "doob.jacobian",
      "doob.weights",
      "run.n", "run.seed", "run.out", "run.jobs", "run.oracle_dir",
      "eval.a", "eval.b", "eval.bins", "eval.direction",
      "sweep.tau", "sweep.gamma",
      "oracle.points", "oracle.span",
  };
  return keys;
}

class Reader {
 public:
  Reader(std::map<std::string, Entry> entries, std::string origin)
      : entries_(std::move(entries)), origin_(std::move(origin)) {}

  template <class T>
  void get(const std::string& key, T& out) {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return;
    try {
      out = it->second.value.get<T>();
    } catch (const json::exception&) {
      fail(it->second.line, key, "has the wrong type (got " + it->second.value.dump() + ")");
    }
  }

  template <class T>
  void get_optional(const std::string& key, std::optional<T>& out) {
    if (!entries_.contains(key)) return;
    T v{};
    get(key, v);
    out = v;
  }

  template <class T>
  void get_enum(const std::string& key, T& out, const std::map<std::string, T>& names) {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return;
    std::string s;
    get(key, s);
    const auto found = names.find(s);
    if (found == names.end()) {
      std::string options;
      for (const auto& [name, v] : names) options += (options.empty() ? "" : " | ") + name;
      fail(it->second.line, key, "must be one of " + options + ", got \"" + s + "\"");
    }
    out = found->second;
  }

  bool has(const std::string& key) const { return entries_.contains(key); }
  const json& raw(const std::string& key) const { return entries_.at(key).value; }
  int line(const std::string& key) const { return entries_.at(key).line; }

  [[noreturn]] void fail(int line, const std::string& key, const std::string& what) const {
    throw Error(Errc::config, origin_ + ":" + std::to_string(line) + ": " + key + " " + what);
  }

 private:
  std::map<std::string, Entry> entries_;
  std::string origin_;
};

json vec_json(const std::vector<double>& v) { return json(v); }

}  // namespace

ExperimentConfig parse_config(std::string_view text, const std::string& origin) {
  std::map<std::string, Entry> entries;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw_line;
  int line_no = 0;
  auto fail = [&](const std::string& what) {
    throw Error(Errc::config, origin + ":" + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, raw_line)) {
    ++line_no;
    const std::string line = trim(strip_comment(raw_line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail("unterminated section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (section.empty()) fail("empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected `key = value`");
    std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) fail("missing key");
    if (value.empty()) fail("missing value for " + key);
    if (!section.empty() && key.rfind(section + ".", 0) != 0) key = section + "." + key;
    if (!known_keys().contains(key)) fail("unknown key " + key);
    if (entries.contains(key)) {
      fail("duplicate key " + key + " (first set on line " +
           std::to_string(entries.at(key).line) + ")");
    }
    json parsed = json::parse(value, nullptr, false);
    if (parsed.is_discarded()) {
      if (value.find_first_of(" \t\"[]{},") != std::string::npos) {
        fail("cannot parse value for " + key + ": " + value);
      }
      parsed = value;
    }
    entries.emplace(key, Entry{std::move(parsed), line_no});
  }

  Reader r(std::move(entries), origin);
  ExperimentConfig cfg;

  r.get("schedule.T", cfg.T);
  r.get("schedule.L", cfg.L);
  r.get_enum("schedule.grid", cfg.grid,
             {{"uniform", GridKind::uniform}, {"log_snr", GridKind::log_snr}});
  r.get("schedule.t_min", cfg.t_min);

  r.get("model.family", cfg.family);
  if (cfg.family != "gaussian" && cfg.family != "gmm") {
    r.fail(r.line("model.family"), "model.family", "must be gaussian | gmm");
  }
  r.get("model.dim", cfg.dim);
  r.get("model.mean", cfg.mean);
  r.get("model.var", cfg.var);
  r.get("model.weights", cfg.weights);
  r.get("model.means", cfg.means);
  r.get("model.vars", cfg.vars);

  std::string kernel = "euler_ancestral";
  r.get("kernel", kernel);
  double kernel_eta = 1.0;
  r.get("ddim_eta", kernel_eta);
  if (kernel == "ddim") {
    if (!(kernel_eta >= 0.0 && kernel_eta <= 1.0)) {
      r.fail(r.line("ddim_eta"), "ddim_eta", "must lie in [0, 1]");
    }
    cfg.kernel = KernelKind::ddim(kernel_eta);
  } else if (kernel == "euler_ancestral") {
    cfg.kernel = KernelKind::euler_ancestral();
  } else {
    r.fail(r.line("kernel"), "kernel", "must be ddim | euler_ancestral");
  }

  r.get_enum("reward.kind", cfg.reward_kind,
             {{"linear", RewardKind::linear},
              {"quadratic", RewardKind::quadratic},
              {"threshold_step", RewardKind::threshold_step},
              {"named", RewardKind::named_external}});
  if (r.has("reward.params")) {
    const json& params = r.raw("reward.params");
    const int line = r.line("reward.params");
    if (!params.is_object()) r.fail(line, "reward.params", "must be a JSON object");
    std::set<std::string> allowed;
    switch (cfg.reward_kind) {
      case RewardKind::linear: allowed = {"a"}; break;
      case RewardKind::quadratic: allowed = {"center", "scale"}; break;
      case RewardKind::threshold_step: allowed = {"a", "r0"}; break;
      case RewardKind::named_external: allowed = {"name"}; break;
    }
    for (const auto& [k, v] : params.items()) {
      if (!allowed.contains(k)) {
        r.fail(line, "reward.params", "has no field \"" + k + "\" for reward.kind = " +
                                          reward_kind_name(cfg.reward_kind));
      }
      try {
        if (k == "a") cfg.direction = v.get<std::vector<double>>();
        if (k == "center") cfg.center = v.get<std::vector<double>>();
        if (k == "scale") cfg.reward_scale = v.get<double>();
        if (k == "r0") cfg.threshold = v.get<double>();
        if (k == "name") cfg.reward_name = v.get<std::string>();
      } catch (const json::exception&) {
        r.fail(line, "reward.params", "field \"" + k + "\" has the wrong type");
      }
    }
  }

  r.get_enum("h.kind", cfg.h_kind, {{"exp_tilt", HKind::exp_tilt}, {"indicator", HKind::indicator}});
  r.get("h.tau", cfg.tau);
  r.get("h.r0", cfg.r0);
  r.get_optional("h.rmax", cfg.r_max);

  r.get("doob.M", cfg.doob.num_samples);
  r.get("doob.gamma", cfg.doob.gamma);
  r.get("doob.l_star", cfg.doob.l_star);
  if (r.has("doob.eta")) {
    const json& eta = r.raw("doob.eta");
    if (eta.is_number()) {
      cfg.doob.eta = TruncationRule::fixed(eta.get<double>());
    } else if (eta == "decaying") {
      cfg.doob.eta = TruncationRule::decaying();
    } else if (eta == "none") {
      cfg.doob.eta = TruncationRule::none();
    } else {
      r.fail(r.line("doob.eta"), "doob.eta", "must be decaying | none | <number>");
    }
  }
  r.get_enum("doob.estimator", cfg.doob.estimator,
             {{"surrogate", EstimatorKind::surrogate}, {"rollout", EstimatorKind::rollout}});
  r.get_enum("doob.jacobian", cfg.doob.jacobian,
             {{"exact", JacobianMode::exact}, {"frozen", JacobianMode::frozen}});
  r.get_enum("doob.weights", cfg.doob.weights,
             {{"shifted", WeightScale::shifted}, {"absolute", WeightScale::absolute}});

  r.get("run.n", cfg.n);
  if (r.has("run.seed")) {
    const json& s = r.raw("run.seed");
    if (!s.is_number_unsigned()) r.fail(r.line("run.seed"), "run.seed", "must be an unsigned integer");
    cfg.seed = s.get<std::uint64_t>();
  }
  r.get("run.out", cfg.out);
  r.get("run.jobs", cfg.jobs);
  r.get("run.oracle_dir", cfg.oracle_dir);

  r.get("eval.a", cfg.eval_a);
  r.get("eval.b", cfg.eval_b);
  r.get("eval.bins", cfg.bins);
  r.get("eval.direction", cfg.eval_direction);

  r.get("sweep.tau", cfg.sweep_tau);
  r.get("sweep.gamma", cfg.sweep_gamma);

  r.get("oracle.points", cfg.oracle_points);
  r.get("oracle.span", cfg.oracle_span);

  validate(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::config, path + ": cannot read config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

void validate(const ExperimentConfig& cfg) {
  auto fail = [](const std::string& what) { throw Error(Errc::config, what); };
  if (!(cfg.T > 0.0) || !std::isfinite(cfg.T)) fail("schedule.T must be > 0");
  if (cfg.L < 1) fail("schedule.L must be >= 1");
  if (!(cfg.t_min > 0.0 && cfg.t_min < cfg.T)) fail("schedule.t_min must lie in (0, T)");
  if (cfg.dim < 1) fail("model.dim must be >= 1");
  if (cfg.family == "gaussian") {
    if (!cfg.mean.empty() && static_cast<int>(cfg.mean.size()) != cfg.dim) {
      fail("model.mean must have model.dim entries");
    }
    if (!(cfg.var > 0.0)) fail("model.var must be > 0");
  } else {
    const std::size_t k = cfg.weights.size();
    if (k == 0) fail("model.weights must be non-empty for a gmm");
    if (cfg.means.size() != k || cfg.vars.size() != k) {
      fail("model.weights, model.means and model.vars must have the same length");
    }
    for (const auto& m : cfg.means) {
      if (static_cast<int>(m.size()) != cfg.dim) fail("every model.means entry needs model.dim values");
    }
  }
  auto check_vec = [&](const std::vector<double>& v, const char* key) {
    if (!v.empty() && static_cast<int>(v.size()) != cfg.dim) {
      fail(std::string(key) + " must have model.dim entries");
    }
  };
  check_vec(cfg.direction, "reward.params.a");
  check_vec(cfg.center, "reward.params.center");
  if (cfg.reward_kind == RewardKind::named_external && cfg.reward_name.empty()) {
    fail("reward.kind = named needs reward.params.name");
  }
  if (!(cfg.tau > 0.0)) fail("h.tau must be > 0");
  if (cfg.h_kind == HKind::exp_tilt && cfg.reward_kind == RewardKind::linear && !cfg.r_max) {
    // Shifted weights never need r_max; absolute weights and oracles do.
    if (cfg.doob.weights == WeightScale::absolute) {
      fail("doob.weights = absolute with a linear reward needs h.rmax");
    }
  }
  if (cfg.n < 1) fail("run.n must be >= 1");
  if (cfg.bins < 1) fail("eval.bins must be >= 1");
  if (cfg.oracle_points < 1) fail("oracle.points must be >= 1");
  try {
    cfg.doob.validate(cfg.L);
  } catch (const Error& e) {
    fail(e.what());
  }
}

std::string canonical_form(const ExperimentConfig& cfg) {
  std::map<std::string, json> kv;
  kv["schedule.T"] = cfg.T;
  kv["schedule.L"] = cfg.L;
  kv["schedule.grid"] = grid_kind_name(cfg.grid);
  // t_min only shapes log-SNR grids.
  if (cfg.grid == GridKind::log_snr) kv["schedule.t_min"] = cfg.t_min;

  kv["model.family"] = cfg.family;
  kv["model.dim"] = cfg.dim;
  if (cfg.family == "gaussian") {
    std::vector<double> mean = cfg.mean;
    if (mean.empty()) mean.assign(static_cast<std::size_t>(cfg.dim), 0.0);
    kv["model.mean"] = vec_json(mean);
    kv["model.var"] = cfg.var;
  } else {
    kv["model.weights"] = vec_json(cfg.weights);
    kv["model.means"] = cfg.means;
    kv["model.vars"] = vec_json(cfg.vars);
  }

  kv["kernel"] = cfg.kernel.is_ddim() ? "ddim" : "euler_ancestral";
  if (cfg.kernel.is_ddim()) kv["ddim_eta"] = cfg.kernel.eta;

  kv["reward.kind"] = reward_kind_name(cfg.reward_kind);
  const Eigen::VectorXd dir = reward_direction(cfg);
  const std::vector<double> a(dir.data(), dir.data() + dir.size());
  switch (cfg.reward_kind) {
    case RewardKind::linear:
      kv["reward.params"] = json{{"a", a}};
      break;
    case RewardKind::threshold_step:
      kv["reward.params"] = json{{"a", a}, {"r0", cfg.threshold}};
      break;
    case RewardKind::quadratic: {
      std::vector<double> c = cfg.center;
      if (c.empty()) c.assign(static_cast<std::size_t>(cfg.dim), 0.0);
      kv["reward.params"] = json{{"center", c}, {"scale", cfg.reward_scale}};
      break;
    }
    case RewardKind::named_external:
      kv["reward.params"] = json{{"name", cfg.reward_name}};
      break;
  }
  if (cfg.r_max) kv["h.rmax"] = *cfg.r_max;

  kv["h.kind"] = h_kind_name(cfg.h_kind);
  if (cfg.h_kind == HKind::exp_tilt) kv["h.tau"] = cfg.tau;
  if (cfg.h_kind == HKind::indicator) kv["h.r0"] = cfg.r0;

  kv["doob.M"] = cfg.doob.num_samples;
  kv["doob.gamma"] = cfg.doob.gamma;
  kv["doob.l_star"] = cfg.doob.effective_l_star(cfg.L);
  switch (cfg.doob.eta.kind) {
    case TruncationRule::Kind::decaying: kv["doob.eta"] = "decaying"; break;
    case TruncationRule::Kind::none: kv["doob.eta"] = "none"; break;
    case TruncationRule::Kind::fixed: kv["doob.eta"] = cfg.doob.eta.value; break;
  }
  kv["doob.estimator"] = estimator_kind_name(cfg.doob.estimator);
  kv["doob.jacobian"] = cfg.doob.jacobian == JacobianMode::exact ? "exact" : "frozen";
  kv["doob.weights"] = cfg.doob.weights == WeightScale::absolute ? "absolute" : "shifted";

  kv["run.n"] = cfg.n;
  if (!cfg.oracle_dir.empty()) kv["run.oracle_dir"] = cfg.oracle_dir;
  if (!cfg.eval_a.empty()) kv["eval.a"] = cfg.eval_a;
  if (!cfg.eval_b.empty()) kv["eval.b"] = cfg.eval_b;
  kv["eval.bins"] = cfg.bins;
  if (!cfg.eval_direction.empty()) kv["eval.direction"] = vec_json(cfg.eval_direction);
  if (!cfg.sweep_tau.empty()) kv["sweep.tau"] = vec_json(cfg.sweep_tau);
  if (!cfg.sweep_gamma.empty()) kv["sweep.gamma"] = vec_json(cfg.sweep_gamma);
  kv["oracle.points"] = cfg.oracle_points;
  kv["oracle.span"] = cfg.oracle_span;

  std::string out;
  for (const auto& [key, value] : kv) out += key + " = " + value.dump() + "\n";
  return out;
}

std::string config_digest(const ExperimentConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical_form(cfg)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ScoreModel build_model(const ExperimentConfig& cfg) {
  if (cfg.family == "gaussian") {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(cfg.dim);
    if (!cfg.mean.empty()) mean = Eigen::Map<const Eigen::VectorXd>(cfg.mean.data(), cfg.dim);
    return ScoreModel::gaussian(std::move(mean), cfg.var);
  }
  std::vector<GaussianComponent> comps;
  for (std::size_t k = 0; k < cfg.weights.size(); ++k) {
    GaussianComponent c;
    c.weight = cfg.weights[k];
    c.mean = Eigen::Map<const Eigen::VectorXd>(cfg.means[k].data(), cfg.dim);
    c.variance = cfg.vars[k];
    comps.push_back(std::move(c));
  }
  return ScoreModel::mixture(std::move(comps));
}

NoiseSchedule build_schedule(const ExperimentConfig& cfg) {
  return make_schedule(cfg.T, cfg.L, cfg.grid, cfg.t_min);
}

Eigen::VectorXd reward_direction(const ExperimentConfig& cfg) {
  if (cfg.direction.empty()) return Eigen::VectorXd::Ones(cfg.dim);
  return Eigen::Map<const Eigen::VectorXd>(cfg.direction.data(), cfg.dim);
}

RewardSpec build_reward(const ExperimentConfig& cfg) {
  RewardSpec spec;
  switch (cfg.reward_kind) {
    case RewardKind::linear:
      spec = RewardSpec::linear(reward_direction(cfg));
      break;
    case RewardKind::quadratic: {
      Eigen::VectorXd c = Eigen::VectorXd::Zero(cfg.dim);
      if (!cfg.center.empty()) c = Eigen::Map<const Eigen::VectorXd>(cfg.center.data(), cfg.dim);
      spec = RewardSpec::quadratic(std::move(c), cfg.reward_scale);
      break;
    }
    case RewardKind::threshold_step:
      spec = RewardSpec::threshold_step(reward_direction(cfg), cfg.threshold);
      break;
    case RewardKind::named_external:
      if (!reward_registered(cfg.reward_name)) {
        throw Error(Errc::config, "reward \"" + cfg.reward_name + "\" is not registered");
      }
      spec = RewardSpec::named(cfg.reward_name);
      break;
  }
  if (cfg.r_max) spec = spec.with_r_max(*cfg.r_max);
  return spec;
}

HSpec build_hspec(const ExperimentConfig& cfg) {
  try {
    if (cfg.h_kind == HKind::indicator) return HSpec::indicator(build_reward(cfg), cfg.r0);
    return HSpec::exp_tilt(build_reward(cfg), cfg.tau);
  } catch (const Error& e) {
    if (e.code() == Errc::config) throw;
    throw Error(Errc::config, e.what());
  }
}

}  // namespace doit
