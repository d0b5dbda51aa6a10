#pragma once

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "esgrad/config.hpp"
#include "esgrad/metaopt.hpp"
#include "esgrad/oracles.hpp"

namespace esgrad {

struct VarianceRow {
  EstimatorConfig estimator;
  VarianceReport report;
};

namespace io_detail {
inline std::ofstream open_for_write(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}
}  // namespace io_detail

inline void write_variance_csv(const std::filesystem::path& path, const std::vector<VarianceRow>& rows) {
  auto out = io_detail::open_for_write(path);
  out << "estimator,K,M,alpha,beta,n_pairs,sigma,replicates,total_variance,mean_grad_norm\n";
  for (const auto& r : rows) {
    const EstimatorConfig& e = r.estimator;
    out << to_string(e.kind) << ',' << e.trunc_len << ',' << e.resample_interval << ',' << format_double(e.mix_alpha)
        << ',' << format_double(e.mix_beta) << ',' << e.n_pairs << ',' << format_double(e.sigma) << ','
        << r.report.replicates << ',' << format_double(r.report.total_variance) << ','
        << format_double(r.report.mean_grad.norm()) << '\n';
  }
}

inline void write_trace_csv(const std::filesystem::path& path, const MetaTrace& trace) {
  auto out = io_detail::open_for_write(path);
  const Eigen::Index p = trace.final_theta.size();
  out << "outer_step,inner_step";
  for (Eigen::Index j = 0; j < p; ++j) out << ",theta_" << j;
  out << ",grad_norm,eval_loss\n";
  for (const auto& r : trace.records) {
    out << r.outer_step << ',' << r.inner_step;
    for (Eigen::Index j = 0; j < p; ++j) out << ',' << format_double(r.theta[j]);
    out << ',' << format_double(r.grad_norm) << ',' << format_double(r.eval_loss) << '\n';
  }
}

inline nlohmann::json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

// Provenance block carried by every output: seed plus the resolved config.
inline nlohmann::json provenance(const ExperimentSpec& spec) {
  return {{"seed", spec.seed}, {"config", serialize_spec(spec)}};
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  auto out = io_detail::open_for_write(path);
  out << doc.dump(2) << '\n';
}

[[nodiscard]] inline nlohmann::json trace_summary(const ExperimentSpec& spec, const MetaTrace& trace,
                                                  double wall_seconds) {
  nlohmann::json doc = provenance(spec);
  doc["final_theta"] = to_json(trace.final_theta);
  doc["best_eval_loss"] = trace.records.empty() ? nlohmann::json(nullptr) : nlohmann::json(trace.best_eval_loss);
  doc["final_eval_loss"] = trace.records.empty() ? nlohmann::json(nullptr) : nlohmann::json(trace.records.back().eval_loss);
  doc["wall_time_seconds"] = wall_seconds;
  doc["failed"] = trace.failed;
  if (trace.failed) doc["failure"] = trace.failure;
  return doc;
}

}  // namespace esgrad
