#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "esgrad/estimators.hpp"
#include "esgrad/metaopt.hpp"
#include "esgrad/optimizers.hpp"

namespace esgrad {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Task id plus its parameters, kept as the text given in the config; the
// registry interprets and validates them.
struct TaskSpec {
  std::string id;
  std::map<std::string, std::string> params;
  bool operator==(const TaskSpec&) const = default;
};

struct ExperimentSpec {
  TaskSpec task;
  EstimatorConfig estimator;
  OptimizerKind optimizer = OptimizerKind::adam;
  double lr = 1e-3;
  Schedule schedule = Schedule::lockstep;
  long outer_steps = 1000;
  long eval_every = 100;
  Step eval_horizon = 1000;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  std::optional<std::vector<double>> theta;  // initial outer parameters
  std::size_t replicates = 1000;             // variance harness
  std::vector<Step> variance_k;              // K sweep for the variance harness

  [[nodiscard]] MetaOptSettings settings() const {
    MetaOptSettings s;
    s.estimator = estimator;
    s.optimizer = optimizer;
    s.lr = lr;
    s.schedule = schedule;
    s.outer_steps = outer_steps;
    s.eval_every = eval_every;
    s.eval_horizon = eval_horizon;
    s.seed = seed;
    if (theta) s.theta0 = Eigen::Map<const Vector>(theta->data(), static_cast<Eigen::Index>(theta->size()));
    return s;
  }
};

inline bool operator==(const EstimatorConfig& a, const EstimatorConfig& b) {
  return a.kind == b.kind && a.n_pairs == b.n_pairs && a.sigma == b.sigma && a.trunc_len == b.trunc_len &&
         a.resample_interval == b.resample_interval && a.mix_alpha == b.mix_alpha && a.mix_beta == b.mix_beta;
}

inline bool operator==(const ExperimentSpec& a, const ExperimentSpec& b) {
  return a.task == b.task && a.estimator == b.estimator && a.optimizer == b.optimizer && a.lr == b.lr &&
         a.schedule == b.schedule && a.outer_steps == b.outer_steps && a.eval_every == b.eval_every &&
         a.eval_horizon == b.eval_horizon && a.seed == b.seed && a.out_dir == b.out_dir && a.theta == b.theta &&
         a.replicates == b.replicates && a.variance_k == b.variance_k;
}

// Shortest text that reads back as the same double.
inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace config_detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) throw ConfigError("config key '" + key + "': cannot parse '" + text + "' as a number");
  return value;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + text + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<T>(key, trim(item)));
  if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
  return out;
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>)
      out += format_double(xs[i]);
    else
      out += std::to_string(xs[i]);
  }
  return out;
}

inline void flatten(const boost::property_tree::ptree& tree, const std::string& prefix,
                    std::map<std::string, std::string>& out) {
  for (const auto& [name, child] : tree) {
    const std::string key = prefix.empty() ? name : prefix + "." + name;
    if (child.empty()) {
      if (!out.emplace(key, trim(child.data())).second) throw ConfigError("config key '" + key + "' given twice");
    } else {
      flatten(child, key, out);
    }
  }
}

}  // namespace config_detail

/// Parameters each task id accepts; every task also accepts `telescope`.
inline const std::map<std::string, std::set<std::string>>& task_parameter_schema() {
  static const std::map<std::string, std::set<std::string>> schema{
      {"quadratic", {"dim", "reps", "quad_seed", "a", "b"}},
      {"influence", {"n", "p"}},
      {"toy2d", {"horizon"}},
      {"seq:iid", {"seq_len", "vocab", "hidden", "stream_seed"}},
      {"seq:identical", {"seq_len", "vocab", "hidden", "stream_seed"}},
      {"seq:correlated", {"seq_len", "vocab", "hidden", "stream_seed"}},
      {"mlp_lr", {"layers", "dataset_seed", "horizon", "decay_steps", "train_points", "batch_size", "eval_points",
                  "fixed_eval_batch"}},
  };
  return schema;
}

/// Builds a spec from flattened "section.key" entries. Unknown keys, missing
/// required keys (seed, task, estimator kind, sigma, K) and invalid values
/// are errors naming the key.
[[nodiscard]] inline ExperimentSpec spec_from_entries(std::map<std::string, std::string> kv) {
  using namespace config_detail;
  // Top-level shorthands.
  for (const auto& [alias, target] : {std::pair{"task", "task.id"}, std::pair{"estimator", "estimator.kind"}}) {
    if (auto it = kv.find(alias); it != kv.end()) {
      if (kv.count(target)) throw ConfigError(std::string("config keys '") + alias + "' and '" + target + "' conflict");
      kv[target] = it->second;
      kv.erase(it);
    }
  }
  // Typos are reported before anything else so the message names them.
  static const std::set<std::string> known{
      "seed",          "estimator.kind", "estimator.n_pairs", "estimator.sigma", "estimator.K",
      "estimator.M",   "estimator.alpha", "estimator.beta",   "optimizer.kind",  "optimizer.lr",
      "run.schedule",  "run.outer_steps", "run.eval_every",   "run.eval_horizon", "run.out",
      "run.theta",     "variance.replicates", "variance.K"};
  std::string unknown;
  int n_unknown = 0;
  for (const auto& [key, value] : kv) {
    if (known.count(key) || key.rfind("task.", 0) == 0) continue;
    unknown += (n_unknown++ ? ", '" : "'") + key + "'";
  }
  if (n_unknown) throw ConfigError(std::string(n_unknown == 1 ? "unknown config key " : "unknown config keys ") + unknown);

  auto take = [&](const std::string& key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    return it->second;
  };
  auto require = [&](const std::string& key) {
    auto v = take(key);
    if (!v) throw ConfigError("config key '" + key + "' is required");
    return *v;
  };

  ExperimentSpec spec;
  spec.seed = parse_number<std::uint64_t>("seed", require("seed"));

  spec.task.id = require("task.id");
  const auto& schema = task_parameter_schema();
  const auto task_it = schema.find(spec.task.id);
  if (task_it == schema.end()) throw ConfigError("config key 'task.id': unknown task '" + spec.task.id + "'");

  EstimatorConfig& est = spec.estimator;
  try {
    est.kind = parse_estimator_kind(require("estimator.kind"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config key 'estimator.kind': ") + e.what());
  }
  est.sigma = parse_number<double>("estimator.sigma", require("estimator.sigma"));
  est.trunc_len = parse_number<Step>("estimator.K", require("estimator.K"));
  if (auto v = take("estimator.n_pairs")) est.n_pairs = parse_number<Eigen::Index>("estimator.n_pairs", *v);
  if (auto v = take("estimator.M")) est.resample_interval = parse_number<Step>("estimator.M", *v);
  if (auto v = take("estimator.alpha")) est.mix_alpha = parse_number<double>("estimator.alpha", *v);
  if (auto v = take("estimator.beta")) est.mix_beta = parse_number<double>("estimator.beta", *v);
  if (!(est.sigma > 0.0)) throw ConfigError("config key 'estimator.sigma': sigma must be > 0, got " + format_double(est.sigma));
  if (est.trunc_len < 1) throw ConfigError("config key 'estimator.K': K must be >= 1");
  if (est.n_pairs < 1) throw ConfigError("config key 'estimator.n_pairs': n_pairs must be >= 1");
  if (est.resample_interval < 1) throw ConfigError("config key 'estimator.M': M must be >= 1");
  if (est.mix_alpha * est.mix_alpha + est.mix_beta * est.mix_beta <= 0.0)
    throw ConfigError("config keys 'estimator.alpha'/'estimator.beta': must not both be zero");

  if (auto v = take("optimizer.kind")) {
    try {
      spec.optimizer = parse_optimizer_kind(*v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config key 'optimizer.kind': ") + e.what());
    }
  }
  if (auto v = take("optimizer.lr")) spec.lr = parse_number<double>("optimizer.lr", *v);
  if (!(spec.lr >= 0.0)) throw ConfigError("config key 'optimizer.lr': must be >= 0");

  if (auto v = take("run.schedule")) {
    try {
      spec.schedule = parse_schedule(*v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config key 'run.schedule': ") + e.what());
    }
  }
  if (auto v = take("run.outer_steps")) spec.outer_steps = parse_number<long>("run.outer_steps", *v);
  if (auto v = take("run.eval_every")) spec.eval_every = parse_number<long>("run.eval_every", *v);
  if (auto v = take("run.eval_horizon")) spec.eval_horizon = parse_number<Step>("run.eval_horizon", *v);
  if (auto v = take("run.out")) spec.out_dir = *v;
  if (auto v = take("run.theta")) spec.theta = parse_list<double>("run.theta", *v);
  if (spec.outer_steps < 0) throw ConfigError("config key 'run.outer_steps': must be >= 0");
  if (spec.eval_every < 0) throw ConfigError("config key 'run.eval_every': must be >= 0");
  if (spec.eval_horizon < 1) throw ConfigError("config key 'run.eval_horizon': must be >= 1");
  if (spec.schedule == Schedule::breakstep && !est.persistent())
    throw ConfigError("config key 'run.schedule': breakstep needs pes, es-single, es-gen or es-mix");

  if (auto v = take("variance.replicates")) spec.replicates = parse_number<std::size_t>("variance.replicates", *v);
  if (auto v = take("variance.K")) spec.variance_k = parse_list<Step>("variance.K", *v);
  if (spec.replicates < 2) throw ConfigError("config key 'variance.replicates': must be >= 2");
  for (Step k : spec.variance_k)
    if (k < 1) throw ConfigError("config key 'variance.K': every K must be >= 1");

  for (const auto& [key, value] : kv) {
    if (key.rfind("task.", 0) != 0 || key == "task.id") continue;
    const std::string name = key.substr(5);
    if (name != "telescope" && !task_it->second.count(name))
      throw ConfigError("config key '" + key + "' is not a parameter of task '" + spec.task.id + "'");
    spec.task.params[name] = value;
  }
  return spec;
}

[[nodiscard]] inline ExperimentSpec parse_spec_text(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  std::map<std::string, std::string> kv;
  config_detail::flatten(tree, "", kv);
  return spec_from_entries(std::move(kv));
}

[[nodiscard]] inline ExperimentSpec parse_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_spec_text(buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

/// Fully resolved config text; parse_spec_text(serialize_spec(s)) == s.
[[nodiscard]] inline std::string serialize_spec(const ExperimentSpec& s) {
  using config_detail::join;
  std::ostringstream out;
  out << "seed = " << s.seed << "\n\n[task]\nid = " << s.task.id << "\n";
  for (const auto& [k, v] : s.task.params) out << k << " = " << v << "\n";
  const EstimatorConfig& e = s.estimator;
  out << "\n[estimator]\nkind = " << to_string(e.kind) << "\nn_pairs = " << e.n_pairs
      << "\nsigma = " << format_double(e.sigma) << "\nK = " << e.trunc_len << "\nM = " << e.resample_interval
      << "\nalpha = " << format_double(e.mix_alpha) << "\nbeta = " << format_double(e.mix_beta) << "\n";
  out << "\n[optimizer]\nkind = " << to_string(s.optimizer) << "\nlr = " << format_double(s.lr) << "\n";
  out << "\n[run]\nschedule = " << to_string(s.schedule) << "\nouter_steps = " << s.outer_steps
      << "\neval_every = " << s.eval_every << "\neval_horizon = " << s.eval_horizon << "\nout = " << s.out_dir << "\n";
  if (s.theta) out << "theta = " << join(*s.theta) << "\n";
  out << "\n[variance]\nreplicates = " << s.replicates << "\n";
  if (!s.variance_k.empty()) out << "K = " << join(s.variance_k) << "\n";
  return out.str();
}

}  // namespace esgrad
