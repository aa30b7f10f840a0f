#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedbac/datagen.hpp"
#include "fedbac/errors.hpp"
#include "fedbac/orchestrator.hpp"

namespace fedbac {

inline constexpr int kConfigVersion = 1;

struct TaskConfig {
  std::size_t num_classes = 8;
  std::size_t input_dim = 16;
  std::size_t samples_per_class = 200;
  double class_separation = 2.5;
};

struct ReportConfig {
  std::uint64_t bytes_per_param = 4;
  std::size_t fairness_window = 10;
  std::vector<double> accuracy_targets = {0.5};
};

// Everything needed to reproduce a run; embedded verbatim in run outputs.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::size_t rounds = 60;
  TaskConfig task;
  PartitionConfig partition;
  std::vector<std::size_t> hidden_dims = {32};
  std::optional<std::vector<std::size_t>> cluster_hidden_dims;  // default: same as hidden
  SgdHyperparams sgd;

  std::string method_name = "fedbac";
  std::optional<std::size_t> k_max;          // default: M (fedbac), 5 (ifca), 1 (hierfavg)
  std::optional<double> participation;       // default: 0.8 (fedbac), 1.0 (baselines)
  std::size_t reassign_period = 20;
  std::size_t ts_warmup = 10;
  double ifca_threshold = 0.95;
  std::size_t compare_ifca_k = 5;            // K used for IFCA by `compare`
  std::string init_assignment = "round_robin";
  double alpha_ucb = 0.3;
  double epsilon = 1e-8;

  ReportConfig report;

  Method method() const {
    if (method_name == "fedbac") return Method::FedBac;
    if (method_name == "hierfavg") return Method::HierFavg;
    if (method_name == "ifca") return Method::Ifca;
    throw ConfigError("config: unknown method '" + method_name + "'");
  }

  // Per-method defaulting and conflict checks (e.g. hierfavg pins K=1, p=1).
  MethodConfig method_config() const {
    MethodConfig mc;
    mc.method = method();
    mc.reassign_period = reassign_period;
    mc.ts_warmup = ts_warmup;
    mc.ifca_threshold = ifca_threshold;
    mc.alpha_ucb = alpha_ucb;
    mc.epsilon = epsilon;
    if (init_assignment == "round_robin") {
      mc.init_assignment = InitAssignment::RoundRobin;
    } else if (init_assignment == "uniform") {
      mc.init_assignment = InitAssignment::Uniform;
    } else {
      throw ConfigError("config: unknown init_assignment '" + init_assignment + "'");
    }
    switch (mc.method) {
      case Method::FedBac:
        mc.k_max = k_max.value_or(partition.num_servers);
        mc.participation = participation.value_or(0.8);
        break;
      case Method::HierFavg:
        if (k_max && *k_max != 1) {
          throw ConfigError("config: hierfavg forces k_max = 1");
        }
        if (participation && *participation != 1.0) {
          throw ConfigError("config: hierfavg forces participation = 1.0");
        }
        mc.k_max = 1;
        mc.participation = 1.0;
        break;
      case Method::Ifca:
        if (participation && *participation != 1.0) {
          throw ConfigError("config: ifca forces participation = 1.0");
        }
        mc.k_max = k_max.value_or(5);
        mc.participation = 1.0;
        break;
    }
    return mc;
  }

  LearnerConfig learner_config() const {
    LearnerConfig lc;
    lc.input_dim = task.input_dim;
    lc.hidden_dims = hidden_dims;
    lc.num_classes = task.num_classes;
    lc.validate();
    return lc;
  }

  LearnerConfig cluster_learner_config() const {
    LearnerConfig lc = learner_config();
    if (cluster_hidden_dims) lc.hidden_dims = *cluster_hidden_dims;
    lc.validate();
    return lc;
  }

  Experiment experiment() const {
    Experiment exp;
    exp.method = method_config();
    exp.learner = learner_config();
    exp.cluster_learner = cluster_learner_config();
    exp.hp = sgd;
    exp.horizon = rounds;
    exp.seed = seed;
    exp.bytes_per_param = report.bytes_per_param;
    return exp;
  }

  void validate() const {
    if (rounds < 1) throw ConfigError("config: rounds must be >= 1");
    if (task.num_classes < 2) throw ConfigError("config: task.num_classes must be >= 2");
    if (task.input_dim < 2) throw ConfigError("config: task.input_dim must be >= 2");
    if (task.samples_per_class < 1) throw ConfigError("config: task.samples_per_class must be >= 1");
    partition.validate();
    sgd.validate();
    learner_config();
    cluster_learner_config();
    method_config().validate(partition.num_servers);
    if (report.bytes_per_param < 1) throw ConfigError("config: bytes_per_param must be >= 1");
    if (report.fairness_window < 1) throw ConfigError("config: fairness_window must be >= 1");
  }
};

inline void to_json(nlohmann::json& j, const TaskConfig& t) {
  j = {{"num_classes", t.num_classes},
       {"input_dim", t.input_dim},
       {"samples_per_class", t.samples_per_class},
       {"class_separation", t.class_separation}};
}

inline void from_json(const nlohmann::json& j, TaskConfig& t) {
  t.num_classes = j.value("num_classes", t.num_classes);
  t.input_dim = j.value("input_dim", t.input_dim);
  t.samples_per_class = j.value("samples_per_class", t.samples_per_class);
  t.class_separation = j.value("class_separation", t.class_separation);
}

inline void to_json(nlohmann::json& j, const PartitionConfig& p) {
  j = {{"num_servers", p.num_servers},
       {"clients_per_server", p.clients_per_server},
       {"alpha_server", p.alpha_server},
       {"alpha_client", p.alpha_client},
       {"test_fraction", p.test_fraction}};
}

inline void from_json(const nlohmann::json& j, PartitionConfig& p) {
  p.num_servers = j.value("num_servers", p.num_servers);
  p.clients_per_server = j.value("clients_per_server", p.clients_per_server);
  p.alpha_server = j.value("alpha_server", p.alpha_server);
  p.alpha_client = j.value("alpha_client", p.alpha_client);
  p.test_fraction = j.value("test_fraction", p.test_fraction);
}

inline void to_json(nlohmann::json& j, const SgdHyperparams& s) {
  j = {{"lr_init", s.lr_init},
       {"lr_decay", s.lr_decay},
       {"momentum", s.momentum},
       {"weight_decay", s.weight_decay},
       {"clip_norm", s.clip_norm},
       {"local_epochs", s.local_epochs},
       {"cluster_l2", s.cluster_l2},
       {"batch_size", s.batch_size}};
}

inline void from_json(const nlohmann::json& j, SgdHyperparams& s) {
  s.lr_init = j.value("lr_init", s.lr_init);
  s.lr_decay = j.value("lr_decay", s.lr_decay);
  s.momentum = j.value("momentum", s.momentum);
  s.weight_decay = j.value("weight_decay", s.weight_decay);
  s.clip_norm = j.value("clip_norm", s.clip_norm);
  s.local_epochs = j.value("local_epochs", s.local_epochs);
  s.cluster_l2 = j.value("cluster_l2", s.cluster_l2);
  s.batch_size = j.value("batch_size", s.batch_size);
}

inline void to_json(nlohmann::json& j, const ReportConfig& r) {
  j = {{"bytes_per_param", r.bytes_per_param},
       {"fairness_window", r.fairness_window},
       {"accuracy_targets", r.accuracy_targets}};
}

inline void from_json(const nlohmann::json& j, ReportConfig& r) {
  r.bytes_per_param = j.value("bytes_per_param", r.bytes_per_param);
  r.fairness_window = j.value("fairness_window", r.fairness_window);
  r.accuracy_targets = j.value("accuracy_targets", r.accuracy_targets);
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  nlohmann::json method = {{"name", c.method_name},
                           {"reassign_period", c.reassign_period},
                           {"ts_warmup", c.ts_warmup},
                           {"ifca_threshold", c.ifca_threshold},
                           {"compare_ifca_k", c.compare_ifca_k},
                           {"init_assignment", c.init_assignment},
                           {"alpha_ucb", c.alpha_ucb},
                           {"epsilon", c.epsilon}};
  if (c.k_max) method["k_max"] = *c.k_max;
  if (c.participation) method["participation"] = *c.participation;
  nlohmann::json learner = {{"hidden_dims", c.hidden_dims}};
  if (c.cluster_hidden_dims) learner["cluster_hidden_dims"] = *c.cluster_hidden_dims;
  j = {{"config_version", kConfigVersion},
       {"seed", c.seed},
       {"rounds", c.rounds},
       {"task", c.task},
       {"partition", c.partition},
       {"learner", learner},
       {"sgd", c.sgd},
       {"method", method},
       {"report", c.report}};
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  if (j.contains("config_version") && j.at("config_version").get<int>() != kConfigVersion) {
    throw ConfigError("config: unsupported config_version");
  }
  c.seed = j.value("seed", c.seed);
  c.rounds = j.value("rounds", c.rounds);
  if (j.contains("task")) j.at("task").get_to(c.task);
  if (j.contains("partition")) j.at("partition").get_to(c.partition);
  if (j.contains("learner")) {
    const auto& l = j.at("learner");
    c.hidden_dims = l.value("hidden_dims", c.hidden_dims);
    if (l.contains("cluster_hidden_dims")) {
      c.cluster_hidden_dims = l.at("cluster_hidden_dims").get<std::vector<std::size_t>>();
    }
  }
  if (j.contains("sgd")) j.at("sgd").get_to(c.sgd);
  if (j.contains("method")) {
    const auto& m = j.at("method");
    c.method_name = m.value("name", c.method_name);
    if (m.contains("k_max")) c.k_max = m.at("k_max").get<std::size_t>();
    if (m.contains("participation")) c.participation = m.at("participation").get<double>();
    c.reassign_period = m.value("reassign_period", c.reassign_period);
    c.ts_warmup = m.value("ts_warmup", c.ts_warmup);
    c.ifca_threshold = m.value("ifca_threshold", c.ifca_threshold);
    c.compare_ifca_k = m.value("compare_ifca_k", c.compare_ifca_k);
    c.init_assignment = m.value("init_assignment", c.init_assignment);
    c.alpha_ucb = m.value("alpha_ucb", c.alpha_ucb);
    c.epsilon = m.value("epsilon", c.epsilon);
  }
  if (j.contains("report")) j.at("report").get_to(c.report);
}

// Parses a config file; malformed JSON is reported with a 1-based line number.
inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < std::min(e.byte, text.size()); ++i) {
      if (text[i] == '\n') ++line;
    }
    throw ConfigError(path + ":" + std::to_string(line) + ": " + e.what());
  }
  ExperimentConfig cfg;
  try {
    j.get_to(cfg);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  cfg.validate();
  return cfg;
}

}  // namespace fedbac
