#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedbac/config.hpp"
#include "fedbac/errors.hpp"
#include "fedbac/metrics.hpp"

namespace fedbac {

// Shortest exact round-trip formatting so identical runs emit identical bytes.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// One header row, one data row per round; per-server fields expand to one
// column per server (acc_s0, ..., loss_s0, ..., cluster_s0, ..., selected_s0, ...).
inline std::string metrics_csv(std::span<const RoundMetrics> trace) {
  if (trace.empty()) throw InputError("metrics_csv: empty trace");
  const std::size_t num_servers = trace.front().per_server_accuracy.size();
  std::ostringstream out;
  out << "round,distributed_accuracy,global_objective,comm_bytes_client_edge,"
         "active_clusters,cumulative_reassignments";
  for (const char* prefix : {"acc_s", "loss_s", "cluster_s", "selected_s"}) {
    for (std::size_t m = 0; m < num_servers; ++m) out << ',' << prefix << m;
  }
  out << '\n';
  for (const RoundMetrics& rm : trace) {
    out << rm.round << ',' << format_double(rm.distributed_accuracy) << ','
        << format_double(rm.global_objective) << ',' << rm.comm_bytes_client_edge << ','
        << rm.active_clusters << ',' << rm.cumulative_reassignments;
    for (std::size_t m = 0; m < num_servers; ++m) {
      out << ',' << format_double(rm.per_server_accuracy[m]);
    }
    for (std::size_t m = 0; m < num_servers; ++m) {
      out << ',' << format_double(rm.per_server_loss[m]);
    }
    for (std::size_t m = 0; m < num_servers; ++m) out << ',' << rm.assignment[m];
    for (std::size_t m = 0; m < num_servers; ++m) out << ',' << rm.selected_counts[m];
    out << '\n';
  }
  return out.str();
}

// Write-temp-then-rename so readers never observe a partial file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write '" + tmp.string() + "'");
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

// Final accuracy, fairness over the configured window, convergence rounds per
// target, total bytes, and the config embedded verbatim.
inline nlohmann::json run_summary(const ExperimentConfig& cfg,
                                  std::span<const RoundMetrics> trace) {
  if (trace.empty()) throw InputError("run_summary: empty trace");
  std::vector<std::vector<double>> acc_history;
  acc_history.reserve(trace.size());
  std::uint64_t total_bytes = 0;
  for (const RoundMetrics& rm : trace) {
    acc_history.push_back(rm.per_server_accuracy);
    total_bytes += rm.comm_bytes_client_edge;
  }
  const FairnessStats fs = fairness_stats(acc_history, cfg.report.fairness_window);

  nlohmann::json convergence = nlohmann::json::object();
  for (double target : cfg.report.accuracy_targets) {
    nlohmann::json round = nullptr;
    for (std::size_t t = 0; t < trace.size(); ++t) {
      if (trace[t].distributed_accuracy >= target) {
        round = t + 1;
        break;
      }
    }
    convergence[format_double(target)] = round;
  }

  return {{"method", cfg.method_name},
          {"seed", cfg.seed},
          {"rounds", trace.size()},
          {"final_distributed_accuracy", trace.back().distributed_accuracy},
          {"final_active_clusters", trace.back().active_clusters},
          {"cumulative_reassignments", trace.back().cumulative_reassignments},
          {"fairness", {{"mean", fs.mean}, {"min", fs.min}, {"max", fs.max}, {"sigma", fs.sigma}}},
          {"convergence_rounds", convergence},
          {"total_comm_bytes", total_bytes},
          {"config", cfg}};
}

}  // namespace fedbac
