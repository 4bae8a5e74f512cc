#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedapa/experiment.hpp"

namespace fedapa {

// Configuration problem attributable to a specific key; the CLI maps this to
// exit code 2.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& message)
      : std::runtime_error("config key '" + key + "': " + message),
        key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

namespace detail {

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "strategy", "sign_convention", "pms", "eta", "mu", "ablate_clip",
      "ablate_self_weight", "ablate_normalize", "clients", "rounds",
      "local_epochs", "batch_size", "lr", "momentum", "participation_fraction",
      "seed", "dataset.kind", "dataset.path", "dataset.clusters",
      "dataset.samples_per_client", "dataset.input_dim", "dataset.classes",
      "dataset.cluster_shift", "partition.kind", "partition.alpha",
      "partition.classes_per_client", "split.train_fraction", "output.dir",
      "output.weight_snapshots"};
  return keys;
}

inline double as_number(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError(key, "expected a number");
  return v.get<double>();
}

inline std::size_t as_count(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number_integer() || v.get<double>() < 0) {
    throw ConfigError(key, "expected a nonnegative integer");
  }
  return v.get<std::size_t>();
}

inline bool as_bool(const nlohmann::json& v, const std::string& key) {
  if (!v.is_boolean()) throw ConfigError(key, "expected true or false");
  return v.get<bool>();
}

inline std::string as_string(const nlohmann::json& v, const std::string& key) {
  if (!v.is_string()) throw ConfigError(key, "expected a string");
  return v.get<std::string>();
}

}  // namespace detail

// Flat JSON object with exactly the documented keys; unknown keys are
// rejected, missing keys fall back to the defaults in ExperimentConfig.
inline ExperimentConfig config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) {
    throw ConfigError("<root>", "config must be a JSON object");
  }
  const auto& keys = detail::config_keys();
  for (const auto& [key, value] : doc.items()) {
    (void)value;
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw ConfigError(key, "unknown key");
    }
  }

  ExperimentConfig cfg;
  auto has = [&doc](const char* k) { return doc.contains(k); };

  if (has("strategy")) {
    const auto s = detail::as_string(doc["strategy"], "strategy");
    if (s == "fedapa") cfg.strategy.strategy = Strategy::kFedApa;
    else if (s == "fedavg") cfg.strategy.strategy = Strategy::kFedAvg;
    else if (s == "local_only") cfg.strategy.strategy = Strategy::kLocalOnly;
    else throw ConfigError("strategy", "must be fedapa, fedavg or local_only");
  }
  if (has("sign_convention")) {
    const auto s = detail::as_string(doc["sign_convention"], "sign_convention");
    if (s == "surrogate_descent") {
      cfg.strategy.sign_convention = SignConvention::kSurrogateDescent;
    } else if (s == "literal_paper") {
      cfg.strategy.sign_convention = SignConvention::kLiteralPaper;
    } else {
      throw ConfigError("sign_convention",
                        "must be surrogate_descent or literal_paper");
    }
  }
  if (has("pms")) cfg.strategy.pms = detail::as_bool(doc["pms"], "pms");
  if (has("eta")) cfg.strategy.eta = detail::as_number(doc["eta"], "eta");
  if (has("mu")) cfg.strategy.mu = detail::as_number(doc["mu"], "mu");
  if (has("ablate_clip")) {
    cfg.strategy.ablate_clip = detail::as_bool(doc["ablate_clip"], "ablate_clip");
  }
  if (has("ablate_self_weight")) {
    cfg.strategy.ablate_self_weight =
        detail::as_bool(doc["ablate_self_weight"], "ablate_self_weight");
  }
  if (has("ablate_normalize")) {
    cfg.strategy.ablate_normalize =
        detail::as_bool(doc["ablate_normalize"], "ablate_normalize");
  }
  if (has("clients")) cfg.clients = detail::as_count(doc["clients"], "clients");
  if (has("rounds")) cfg.rounds = detail::as_count(doc["rounds"], "rounds");
  if (has("local_epochs")) {
    cfg.local_epochs = detail::as_count(doc["local_epochs"], "local_epochs");
  }
  if (has("batch_size")) {
    cfg.batch_size = detail::as_count(doc["batch_size"], "batch_size");
  }
  if (has("lr")) cfg.lr = detail::as_number(doc["lr"], "lr");
  if (has("momentum")) cfg.momentum = detail::as_number(doc["momentum"], "momentum");
  if (has("participation_fraction")) {
    cfg.participation_fraction =
        detail::as_number(doc["participation_fraction"], "participation_fraction");
  }
  if (has("seed")) {
    if (!doc["seed"].is_number_integer()) {
      throw ConfigError("seed", "expected an integer");
    }
    cfg.seed = doc["seed"].get<std::uint64_t>();
  }
  if (has("dataset.kind")) {
    const auto s = detail::as_string(doc["dataset.kind"], "dataset.kind");
    if (s == "synthetic") cfg.dataset.kind = DatasetKind::kSynthetic;
    else if (s == "csv") cfg.dataset.kind = DatasetKind::kCsv;
    else throw ConfigError("dataset.kind", "must be synthetic or csv");
  }
  if (has("dataset.path")) {
    cfg.dataset.path = detail::as_string(doc["dataset.path"], "dataset.path");
  }
  if (has("dataset.clusters")) {
    cfg.dataset.clusters = detail::as_count(doc["dataset.clusters"], "dataset.clusters");
  }
  if (has("dataset.samples_per_client")) {
    cfg.dataset.samples_per_client = detail::as_count(
        doc["dataset.samples_per_client"], "dataset.samples_per_client");
  }
  if (has("dataset.input_dim")) {
    cfg.dataset.input_dim =
        detail::as_count(doc["dataset.input_dim"], "dataset.input_dim");
  }
  if (has("dataset.classes")) {
    cfg.dataset.classes = detail::as_count(doc["dataset.classes"], "dataset.classes");
  }
  if (has("dataset.cluster_shift")) {
    cfg.dataset.cluster_shift =
        detail::as_number(doc["dataset.cluster_shift"], "dataset.cluster_shift");
  }
  if (has("partition.kind")) {
    const auto s = detail::as_string(doc["partition.kind"], "partition.kind");
    if (s == "none") cfg.partition.kind = PartitionKind::kNone;
    else if (s == "dirichlet") cfg.partition.kind = PartitionKind::kDirichlet;
    else if (s == "pathological") cfg.partition.kind = PartitionKind::kPathological;
    else throw ConfigError("partition.kind", "must be none, dirichlet or pathological");
  }
  if (has("partition.alpha")) {
    cfg.partition.alpha = detail::as_number(doc["partition.alpha"], "partition.alpha");
  }
  if (has("partition.classes_per_client")) {
    cfg.partition.classes_per_client = detail::as_count(
        doc["partition.classes_per_client"], "partition.classes_per_client");
  }
  if (has("split.train_fraction")) {
    cfg.train_fraction =
        detail::as_number(doc["split.train_fraction"], "split.train_fraction");
  }
  if (has("output.dir")) {
    cfg.output.dir = detail::as_string(doc["output.dir"], "output.dir");
  }
  if (has("output.weight_snapshots")) {
    cfg.output.weight_snapshots =
        detail::as_bool(doc["output.weight_snapshots"], "output.weight_snapshots");
  }

  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    const std::string what = e.what();
    const auto colon = what.find(':');
    throw ConfigError(colon == std::string::npos ? what : what.substr(0, colon),
                      colon == std::string::npos ? "invalid value"
                                                 : what.substr(colon + 2));
  }
  return cfg;
}

inline nlohmann::json load_config_document(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open config file");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path, std::string("not valid JSON: ") + e.what());
  }
  return doc;
}

// key=value override; the value is parsed as JSON when possible, else kept
// as a string ("--set strategy=fedavg" works without inner quotes).
inline void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError(assignment, "override must look like key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  doc[key] = value;
}

inline ExperimentConfig load_config(const std::string& path,
                                    const std::vector<std::string>& overrides) {
  auto doc = load_config_document(path);
  for (const auto& o : overrides) apply_override(doc, o);
  return config_from_json(doc);
}

}  // namespace fedapa
