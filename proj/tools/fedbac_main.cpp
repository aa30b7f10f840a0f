#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedbac/config.hpp"
#include "fedbac/datagen.hpp"
#include "fedbac/orchestrator.hpp"
#include "fedbac/report.hpp"

namespace {

using nlohmann::json;

struct CommonOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::size_t num_seeds = 1;
  std::optional<std::string> method;
  std::string out_dir = "out";
  bool deterministic = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "Path to the JSON experiment config")
      ->required();
  cmd->add_option("--seed", opts.seed, "Override the config seed");
  cmd->add_option("--seeds", opts.num_seeds, "Number of consecutive seeds to run")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--method", opts.method, "Override the method (fedbac|hierfavg|ifca)");
  cmd->add_option("--out", opts.out_dir, "Output directory");
  cmd->add_flag("--deterministic", opts.deterministic,
                "Suppress timestamps so outputs are byte-reproducible");
}

fedbac::ExperimentConfig load_with_overrides(const CommonOpts& opts) {
  fedbac::ExperimentConfig cfg = fedbac::load_config(opts.config_path);
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.method) cfg.method_name = *opts.method;
  cfg.validate();
  return cfg;
}

fedbac::Partition build_partition(const fedbac::ExperimentConfig& cfg, std::uint64_t seed) {
  fedbac::RngStream root = fedbac::RngStream::root(seed);
  fedbac::RngStream task_rng = root.child("task");
  const fedbac::Dataset pool =
      fedbac::synth_mixture(cfg.task.num_classes, cfg.task.input_dim,
                            cfg.task.samples_per_class, cfg.task.class_separation, task_rng);
  fedbac::RngStream part_rng = root.child("partition");
  return fedbac::partition_two_level(pool, cfg.partition, part_rng);
}

void maybe_timestamp(json& j, bool deterministic) {
  if (deterministic) return;
  const auto now = std::chrono::system_clock::now();
  j["timestamp"] =
      std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count();
}

double sample_std(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double sq = 0.0;
  for (double x : v) sq += (x - mean) * (x - mean);
  return std::sqrt(sq / static_cast<double>(v.size() - 1));
}

json aggregate_finals(const std::vector<double>& finals) {
  double mean = 0.0;
  for (double f : finals) mean += f;
  mean /= static_cast<double>(finals.size());
  return {{"mean_final_distributed_accuracy", mean},
          {"std_final_distributed_accuracy", sample_std(finals, mean)},
          {"num_seeds", finals.size()}};
}

int cmd_run(const CommonOpts& opts) {
  fedbac::ExperimentConfig cfg = load_with_overrides(opts);
  std::filesystem::create_directories(opts.out_dir);
  const std::filesystem::path out(opts.out_dir);

  json runs = json::array();
  std::vector<double> finals;
  for (std::size_t s = 0; s < opts.num_seeds; ++s) {
    fedbac::ExperimentConfig run_cfg = cfg;
    run_cfg.seed = cfg.seed + s;
    const fedbac::Partition partition = build_partition(run_cfg, run_cfg.seed);
    fedbac::write_file_atomic(
        out / ("partition_seed" + std::to_string(run_cfg.seed) + ".json"),
        fedbac::partition_manifest(partition).dump(2) + "\n");

    const fedbac::Experiment exp = run_cfg.experiment();
    fedbac::RoundState final_state;
    const auto trace = fedbac::run_experiment(exp, partition, &final_state);
    fedbac::write_file_atomic(out / ("rounds_seed" + std::to_string(run_cfg.seed) + ".csv"),
                              fedbac::metrics_csv(trace));
    if (exp.method.method == fedbac::Method::FedBac) {
      const json snapshot = {{"linucb", final_state.bank}, {"ts", final_state.ts_states}};
      fedbac::write_file_atomic(
          out / ("bandit_state_seed" + std::to_string(run_cfg.seed) + ".json"),
          snapshot.dump(2) + "\n");
    }
    runs.push_back(fedbac::run_summary(run_cfg, trace));
    finals.push_back(trace.back().distributed_accuracy);
    std::cout << "seed " << run_cfg.seed << ": final distributed accuracy "
              << trace.back().distributed_accuracy << "\n";
  }

  json summary = {{"runs", runs}, {"aggregate", aggregate_finals(finals)}};
  maybe_timestamp(summary, opts.deterministic);
  fedbac::write_file_atomic(out / "summary.json", summary.dump(2) + "\n");
  return 0;
}

int cmd_sweep(const CommonOpts& opts, const std::string& axis,
              const std::vector<double>& values) {
  if (values.empty()) throw fedbac::ConfigError("sweep: empty value list");
  fedbac::ExperimentConfig cfg = load_with_overrides(opts);
  std::filesystem::create_directories(opts.out_dir);
  const std::filesystem::path out(opts.out_dir);

  std::string pointer = "/" + axis;
  for (char& c : pointer) {
    if (c == '.') c = '/';
  }
  const json::json_pointer ptr(pointer);
  {
    // The axis must name a field inside an existing config section.
    const json base = cfg;
    if (!ptr.parent_pointer().empty() && !base.contains(ptr.parent_pointer())) {
      throw fedbac::ConfigError("sweep: unknown axis '" + axis + "'");
    }
  }

  json rows = json::array();
  for (double value : values) {
    json patched = cfg;
    if (value == std::floor(value)) {
      patched[ptr] = static_cast<std::int64_t>(value);
    } else {
      patched[ptr] = value;
    }
    fedbac::ExperimentConfig point_cfg;
    try {
      patched.get_to(point_cfg);
    } catch (const json::exception& e) {
      throw fedbac::ConfigError("sweep: axis '" + axis + "': " + e.what());
    }
    point_cfg.seed = cfg.seed;
    point_cfg.validate();

    std::vector<double> finals;
    for (std::size_t s = 0; s < opts.num_seeds; ++s) {
      fedbac::ExperimentConfig run_cfg = point_cfg;
      run_cfg.seed = point_cfg.seed + s;
      const fedbac::Partition partition = build_partition(run_cfg, run_cfg.seed);
      const auto trace = fedbac::run_experiment(run_cfg.experiment(), partition);
      const std::string tag = axis + "=" + fedbac::format_double(value) + "_seed" +
                              std::to_string(run_cfg.seed);
      fedbac::write_file_atomic(out / ("rounds_" + tag + ".csv"),
                                fedbac::metrics_csv(trace));
      finals.push_back(trace.back().distributed_accuracy);
    }
    json row = aggregate_finals(finals);
    row["value"] = value;
    rows.push_back(row);
    std::cout << axis << " = " << value << ": mean final accuracy "
              << row["mean_final_distributed_accuracy"].get<double>() << " +/- "
              << row["std_final_distributed_accuracy"].get<double>() << "\n";
  }

  json summary = {{"axis", axis}, {"rows", rows}, {"config", cfg}};
  maybe_timestamp(summary, opts.deterministic);
  fedbac::write_file_atomic(out / "sweep_summary.json", summary.dump(2) + "\n");
  return 0;
}

int cmd_compare(const CommonOpts& opts) {
  fedbac::ExperimentConfig cfg = load_with_overrides(opts);
  std::filesystem::create_directories(opts.out_dir);
  const std::filesystem::path out(opts.out_dir);

  const std::vector<std::string> methods = {"fedbac", "ifca", "hierfavg"};
  json per_method = json::object();
  std::vector<double> means(methods.size(), 0.0);

  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    fedbac::ExperimentConfig method_cfg = cfg;
    method_cfg.method_name = methods[mi];
    if (methods[mi] == "hierfavg") {
      method_cfg.k_max = 1;
      method_cfg.participation = 1.0;
    } else if (methods[mi] == "ifca") {
      method_cfg.k_max = cfg.compare_ifca_k;
      method_cfg.participation = 1.0;
    }
    method_cfg.validate();

    std::vector<double> finals;
    json runs = json::array();
    for (std::size_t s = 0; s < opts.num_seeds; ++s) {
      fedbac::ExperimentConfig run_cfg = method_cfg;
      run_cfg.seed = cfg.seed + s;
      const fedbac::Partition partition = build_partition(run_cfg, run_cfg.seed);
      const auto trace = fedbac::run_experiment(run_cfg.experiment(), partition);
      fedbac::write_file_atomic(
          out / (methods[mi] + "_seed" + std::to_string(run_cfg.seed) + ".csv"),
          fedbac::metrics_csv(trace));
      runs.push_back(fedbac::run_summary(run_cfg, trace));
      finals.push_back(trace.back().distributed_accuracy);
    }
    json agg = aggregate_finals(finals);
    means[mi] = agg["mean_final_distributed_accuracy"].get<double>();
    per_method[methods[mi]] = {{"aggregate", agg}, {"runs", runs}};
    std::cout << methods[mi] << ": mean final distributed accuracy " << means[mi] << "\n";
  }

  // Table-II-style footer deltas, in percentage points.
  const double delta_h = (means[0] - means[2]) * 100.0;
  const double delta_i = (means[0] - means[1]) * 100.0;
  json summary = {{"methods", per_method},
                  {"delta_hierfavg_pp", delta_h},
                  {"delta_ifca_pp", delta_i},
                  {"config", cfg}};
  maybe_timestamp(summary, opts.deterministic);
  fedbac::write_file_atomic(out / "compare_summary.json", summary.dump(2) + "\n");
  std::cout << "delta_H (fedbac - hierfavg): " << delta_h << "pp\n"
            << "delta_I (fedbac - ifca):     " << delta_i << "pp\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fed-BAC hierarchical federated learning simulator"};
  app.require_subcommand(1);

  CommonOpts run_opts;
  CLI::App* run = app.add_subcommand("run", "Run one experiment per seed");
  add_common(run, run_opts);

  CommonOpts sweep_opts;
  std::string axis;
  std::vector<double> values;
  CLI::App* sweep = app.add_subcommand("sweep", "Run a sweep over one numeric config field");
  add_common(sweep, sweep_opts);
  sweep->add_option("--axis", axis, "Dotted config field, e.g. partition.alpha_server")
      ->required();
  sweep->add_option("--values", values, "Comma-separated axis values")
      ->required()
      ->delimiter(',');

  CommonOpts compare_opts;
  CLI::App* compare =
      app.add_subcommand("compare", "Run fedbac, ifca and hierfavg on the same data");
  add_common(compare, compare_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Usage problems count as config errors (exit 2); --help stays 0.
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (run->parsed()) return cmd_run(run_opts);
    if (sweep->parsed()) return cmd_sweep(sweep_opts, axis, values);
    if (compare->parsed()) return cmd_compare(compare_opts);
  } catch (const fedbac::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
