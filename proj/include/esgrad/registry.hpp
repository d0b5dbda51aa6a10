#pragma once

#include <string>
#include <vector>

#include "esgrad/config.hpp"
#include "esgrad/tasks/influence.hpp"
#include "esgrad/tasks/mlp_lr.hpp"
#include "esgrad/tasks/quadratic.hpp"
#include "esgrad/tasks/sequence.hpp"
#include "esgrad/tasks/telescope.hpp"
#include "esgrad/tasks/toy2d.hpp"

namespace esgrad {

struct TaskInfo {
  std::string id;
  std::string description;
  std::string parameters;  // with defaults
};

inline std::vector<TaskInfo> task_catalog() {
  return {
      {"quadratic", "0.5 theta^T A theta + b^T theta spread over reps steps", "dim=3 reps=1 quad_seed=0 a=<row-major list> b=<list>"},
      {"influence", "influence balancing, linear dynamics, infinite horizon", "n=23 p=10"},
      {"toy2d", "learning-rate schedule of gradient descent on a 2D non-convex loss", "horizon=100"},
      {"seq:iid", "tanh RNN next-token loss on i.i.d. tokens", "seq_len=100 vocab=4 hidden=8 stream_seed=7"},
      {"seq:identical", "tanh RNN next-token loss on one repeated token", "seq_len=100 vocab=4 hidden=8 stream_seed=7"},
      {"seq:correlated", "tanh RNN next-token loss on a sticky Markov chain", "seq_len=100 vocab=4 hidden=8 stream_seed=7"},
      {"mlp_lr", "inverse-power LR schedule of SGD+momentum training an MLP on blobs",
       "layers=10,16,2 dataset_seed=0 horizon=200 decay_steps=5000 train_points=1000 batch_size=100 eval_points=1000 "
       "fixed_eval_batch=false"},
  };
}

/// Instantiates a task from its id and parameters. Any task accepts
/// `telescope=true`, which rewrites per-step losses as differences.
[[nodiscard]] inline UnrolledSystem build_task(const TaskSpec& spec) {
  using namespace config_detail;
  const auto& schema = task_parameter_schema();
  const auto it = schema.find(spec.id);
  if (it == schema.end()) throw ConfigError("unknown task '" + spec.id + "'");
  for (const auto& [k, v] : spec.params)
    if (k != "telescope" && !it->second.count(k))
      throw ConfigError("config key 'task." + k + "' is not a parameter of task '" + spec.id + "'");

  auto get = [&](const std::string& name, const std::string& fallback) {
    auto p = spec.params.find(name);
    return p == spec.params.end() ? fallback : p->second;
  };
  auto integer = [&](const std::string& name, long fallback) {
    return parse_number<long>("task." + name, get(name, std::to_string(fallback)));
  };

  UnrolledSystem sys;
  try {
    if (spec.id == "quadratic") {
      QuadraticForm form;
      if (spec.params.count("a") || spec.params.count("b")) {
        if (!spec.params.count("a") || !spec.params.count("b"))
          throw ConfigError("task 'quadratic': give both 'a' and 'b' or neither");
        const auto b = parse_list<double>("task.b", get("b", ""));
        const auto a = parse_list<double>("task.a", get("a", ""));
        const auto p = static_cast<Eigen::Index>(b.size());
        if (static_cast<Eigen::Index>(a.size()) != p * p)
          throw ConfigError("config key 'task.a': expected " + std::to_string(p * p) + " entries");
        form.a = Eigen::Map<const RowMatrix>(a.data(), p, p);
        form.b = Eigen::Map<const Vector>(b.data(), p);
      } else {
        form = random_quadratic(integer("dim", 3), RngKey(static_cast<std::uint64_t>(integer("quad_seed", 0))));
      }
      sys = make_quadratic(form, integer("reps", 1));
    } else if (spec.id == "influence") {
      sys = make_influence_balancing(integer("n", 23), integer("p", 10));
    } else if (spec.id == "toy2d") {
      sys = make_toy2d(integer("horizon", 100));
    } else if (spec.id.rfind("seq:", 0) == 0) {
      sys = make_sequence_task(parse_scenario(spec.id.substr(4)), integer("seq_len", 100),
                               static_cast<int>(integer("vocab", 4)), static_cast<int>(integer("hidden", 8)),
                               static_cast<std::uint64_t>(integer("stream_seed", 7)));
    } else {
      std::vector<Eigen::Index> layers;
      for (long w : parse_list<long>("task.layers", get("layers", "10,16,2"))) layers.push_back(w);
      MlpLrOptions opts;
      opts.horizon = integer("horizon", opts.horizon);
      opts.decay_steps = parse_number<double>("task.decay_steps", get("decay_steps", "5000"));
      opts.train_points = integer("train_points", opts.train_points);
      opts.batch_size = integer("batch_size", opts.batch_size);
      opts.eval_points = integer("eval_points", opts.eval_points);
      opts.fixed_eval_batch = parse_bool("task.fixed_eval_batch", get("fixed_eval_batch", "false"));
      sys = make_lr_schedule_mlp(layers, RngKey(static_cast<std::uint64_t>(integer("dataset_seed", 0))), opts);
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError("task '" + spec.id + "': " + e.what());
  }
  if (parse_bool("task.telescope", get("telescope", "false"))) sys = telescope_wrap(sys);
  return sys;
}

}  // namespace esgrad
