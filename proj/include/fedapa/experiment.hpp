#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedapa/data.hpp"
#include "fedapa/federation.hpp"
#include "fedapa/model.hpp"
#include "fedapa/numerics.hpp"
#include "fedapa/partition.hpp"
#include "fedapa/rng.hpp"
#include "fedapa/strategy.hpp"

namespace fedapa {

enum class DatasetKind { kSynthetic, kCsv };
enum class PartitionKind { kNone, kDirichlet, kPathological };

struct DatasetConfig {
  DatasetKind kind = DatasetKind::kSynthetic;
  std::string path;
  std::size_t clusters = 3;
  std::size_t samples_per_client = 60;
  std::size_t input_dim = 8;
  std::size_t classes = 5;
  double cluster_shift = 1.0;
};

struct PartitionConfig {
  PartitionKind kind = PartitionKind::kNone;
  double alpha = 0.1;
  std::size_t classes_per_client = 2;
};

struct OutputConfig {
  std::string dir = "out";
  bool weight_snapshots = false;
};

struct ExperimentConfig {
  StrategyConfig strategy;
  std::size_t clients = 12;
  std::size_t rounds = 50;
  std::size_t local_epochs = 2;
  std::size_t batch_size = 64;
  double lr = 0.01;
  double momentum = 0.9;
  double participation_fraction = 0.6;
  std::uint64_t seed = 1;
  std::vector<std::size_t> hidden_dims{32, 16};
  DatasetConfig dataset;
  PartitionConfig partition;
  double train_fraction = 5.0 / 6.0;
  OutputConfig output;
  std::size_t threads = 1;

  void validate() const {
    strategy.validate();
    if (clients == 0) throw std::invalid_argument("clients: must be >= 1");
    if (rounds == 0) throw std::invalid_argument("rounds: must be >= 1");
    if (batch_size == 0) throw std::invalid_argument("batch_size: must be >= 1");
    if (lr < 0.0) throw std::invalid_argument("lr: must be >= 0");
    if (momentum < 0.0 || momentum >= 1.0) {
      throw std::invalid_argument("momentum: must be in [0,1)");
    }
    if (!(participation_fraction > 0.0 && participation_fraction <= 1.0)) {
      throw std::invalid_argument("participation_fraction: must be in (0,1]");
    }
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
      throw std::invalid_argument("split.train_fraction: must be in (0,1)");
    }
    if (hidden_dims.empty()) {
      throw std::invalid_argument("hidden_dims: must be nonempty");
    }
    if (threads == 0) throw std::invalid_argument("threads: must be >= 1");
    if (dataset.kind == DatasetKind::kSynthetic) {
      if (partition.kind != PartitionKind::kNone) {
        throw std::invalid_argument(
            "partition.kind: synthetic datasets are partitioned by "
            "construction; use \"none\"");
      }
      if (dataset.clusters == 0 || clients % dataset.clusters != 0) {
        throw std::invalid_argument(
            "dataset.clusters: clients must be divisible by clusters");
      }
      if (dataset.samples_per_client < 2) {
        throw std::invalid_argument("dataset.samples_per_client: must be >= 2");
      }
      if (dataset.input_dim == 0) {
        throw std::invalid_argument("dataset.input_dim: must be >= 1");
      }
      if (dataset.classes == 0) {
        throw std::invalid_argument("dataset.classes: must be >= 1");
      }
    } else {
      if (dataset.path.empty()) {
        throw std::invalid_argument("dataset.path: required for csv datasets");
      }
      if (partition.kind == PartitionKind::kNone) {
        throw std::invalid_argument(
            "partition.kind: csv datasets need \"dirichlet\" or "
            "\"pathological\"");
      }
      if (partition.kind == PartitionKind::kDirichlet && partition.alpha <= 0.0) {
        throw std::invalid_argument("partition.alpha: must be > 0");
      }
      if (partition.kind == PartitionKind::kPathological &&
          partition.classes_per_client == 0) {
        throw std::invalid_argument("partition.classes_per_client: must be >= 1");
      }
    }
  }
};

// Per-round metrics; one JSONL line each. Wall-clock duration stays in
// memory only, so that identical runs produce byte-identical output.
struct RoundRecord {
  std::size_t round = 0;
  std::vector<std::size_t> sampled;
  std::vector<double> client_acc;
  std::vector<double> client_loss;
  double mean_acc = 0.0;
  double weighted_acc = 0.0;
  std::size_t transmitted_params = 0;
  double duration_ms = 0.0;
  bool drift_checked = false;
  bool drift_step_ok = false;
  bool drift_cumulative_checked = false;
  bool drift_cumulative_ok = false;
  std::string weight_snapshot;
};

struct ExperimentResult {
  ModelSpec model_spec;
  std::vector<RoundRecord> records;
  std::vector<std::vector<double>> final_weights;  // M x M, FedAPA only
  std::vector<ModelParams> final_models;           // evaluated personalized models
  std::vector<std::size_t> cluster_of_client;      // synthetic datasets only
  PartitionResult partition;
  std::uint64_t partition_digest = 0;
  std::size_t transmitted_total = 0;
};

// ceil(fraction*M) distinct ids, uniform without replacement, ascending
inline std::vector<std::size_t> sample_clients(std::size_t num_clients,
                                               double fraction, Rng& rng) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("sample_clients: fraction must be in (0,1]");
  }
  const double exact = fraction * static_cast<double>(num_clients);
  auto k = static_cast<std::size_t>(std::ceil(exact - 1e-9));
  k = std::clamp<std::size_t>(k, 1, num_clients);

  std::vector<std::size_t> ids(num_clients);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j =
        i + static_cast<std::size_t>(rng.uniform_int(num_clients - i));
    std::swap(ids[i], ids[j]);
  }
  ids.resize(k);
  std::sort(ids.begin(), ids.end());
  return ids;
}

// Eq. 1 weighting applied to accuracies: sum_i (|D_i|/N) * acc_i
inline double weighted_accuracy(std::span<const double> accuracies,
                                std::span<const std::size_t> shard_sizes) {
  if (accuracies.size() != shard_sizes.size()) {
    throw std::invalid_argument("weighted_accuracy: length mismatch");
  }
  std::size_t total = 0;
  for (std::size_t s : shard_sizes) {
    if (s == 0) throw std::invalid_argument("weighted_accuracy: zero shard size");
    total += s;
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < accuracies.size(); ++i) {
    acc += static_cast<double>(shard_sizes[i]) / static_cast<double>(total) *
           accuracies[i];
  }
  return acc;
}

// parameters transmitted per client per round, upload + download
inline std::size_t comm_count(const ModelSpec& spec, bool pms) {
  return 2 * (pms ? spec.extractor_params() : spec.total_params());
}

// the model a client is judged by: last downloaded block + private block
inline EvalResult evaluate_client(const ModelSpec& spec,
                                  const ClientState& state, const Dataset& ds) {
  if (state.shard.test.empty()) {
    throw std::invalid_argument("evaluate_client: empty test split");
  }
  const ParamVector omega = concat(state.last_shared, state.private_block);
  return evaluate_model(spec, model_from_omega(spec, omega), ds,
                        state.shard.test);
}

// Resolved configuration as the flat key set of the config-file format.
inline nlohmann::ordered_json resolved_config_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["strategy"] = strategy_name(c.strategy.strategy);
  j["sign_convention"] =
      c.strategy.sign_convention == SignConvention::kSurrogateDescent
          ? "surrogate_descent"
          : "literal_paper";
  j["pms"] = c.strategy.pms;
  j["eta"] = c.strategy.eta;
  j["mu"] = c.strategy.mu;
  j["ablate_clip"] = c.strategy.ablate_clip;
  j["ablate_self_weight"] = c.strategy.ablate_self_weight;
  j["ablate_normalize"] = c.strategy.ablate_normalize;
  j["clients"] = c.clients;
  j["rounds"] = c.rounds;
  j["local_epochs"] = c.local_epochs;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.lr;
  j["momentum"] = c.momentum;
  j["participation_fraction"] = c.participation_fraction;
  j["seed"] = c.seed;
  j["dataset.kind"] = c.dataset.kind == DatasetKind::kSynthetic ? "synthetic" : "csv";
  j["dataset.path"] = c.dataset.path;
  j["dataset.clusters"] = c.dataset.clusters;
  j["dataset.samples_per_client"] = c.dataset.samples_per_client;
  j["dataset.input_dim"] = c.dataset.input_dim;
  j["dataset.classes"] = c.dataset.classes;
  j["dataset.cluster_shift"] = c.dataset.cluster_shift;
  switch (c.partition.kind) {
    case PartitionKind::kNone: j["partition.kind"] = "none"; break;
    case PartitionKind::kDirichlet: j["partition.kind"] = "dirichlet"; break;
    case PartitionKind::kPathological: j["partition.kind"] = "pathological"; break;
  }
  j["partition.alpha"] = c.partition.alpha;
  j["partition.classes_per_client"] = c.partition.classes_per_client;
  j["split.train_fraction"] = c.train_fraction;
  j["output.dir"] = c.output.dir;
  j["output.weight_snapshots"] = c.output.weight_snapshots;
  return j;
}

inline nlohmann::ordered_json round_record_json(const RoundRecord& r) {
  nlohmann::ordered_json j;
  j["round"] = r.round;
  j["sampled"] = r.sampled;
  j["client_acc"] = r.client_acc;
  j["client_loss"] = r.client_loss;
  j["mean_acc"] = r.mean_acc;
  j["weighted_acc"] = r.weighted_acc;
  j["transmitted_params"] = r.transmitted_params;
  j["drift_step_ok"] =
      r.drift_checked ? nlohmann::ordered_json(r.drift_step_ok)
                      : nlohmann::ordered_json(nullptr);
  j["drift_cumulative_ok"] =
      r.drift_cumulative_checked ? nlohmann::ordered_json(r.drift_cumulative_ok)
                                 : nlohmann::ordered_json(nullptr);
  j["weight_snapshot"] = r.weight_snapshot.empty()
                             ? nlohmann::ordered_json(nullptr)
                             : nlohmann::ordered_json(r.weight_snapshot);
  return j;
}

inline void write_metrics_jsonl(const std::string& path,
                                const std::vector<RoundRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  for (const auto& r : records) out << round_record_json(r).dump() << "\n";
}

inline void write_weight_snapshot_csv(const std::string& path,
                                      const std::vector<WeightVector>& weights,
                                      const std::string& config_line) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "# config: " << config_line << "\n";
  for (const auto& w : weights) {
    for (std::size_t j = 0; j < w.a.size(); ++j) {
      if (j) out << ",";
      out << detail::format_double(w.a[j]);
    }
    out << "\n";
  }
}

inline void write_models_json(const std::string& path,
                              const ExperimentResult& result,
                              const nlohmann::ordered_json& config) {
  nlohmann::ordered_json j;
  j["config"] = config;
  nlohmann::ordered_json layout;
  auto shapes_json = [](const Layout& l) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& s : l) {
      if (s.is_matrix()) {
        arr.push_back({s.rows, s.cols});
      } else {
        arr.push_back({s.rows});
      }
    }
    return arr;
  };
  layout["extractor"] = shapes_json(result.model_spec.extractor_layout());
  layout["head"] = shapes_json(result.model_spec.head_layout());
  j["layout"] = layout;
  nlohmann::ordered_json clients = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < result.final_models.size(); ++i) {
    nlohmann::ordered_json c;
    c["id"] = i;
    c["extractor"] = result.final_models[i].theta.values();
    c["head"] = result.final_models[i].phi.values();
    clients.push_back(std::move(c));
  }
  j["clients"] = std::move(clients);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << j.dump(2) << "\n";
}

namespace detail {

// Client updates of one round; embarrassingly parallel, results land in
// per-client slots so the merge order (and therefore every downstream
// number) is independent of the thread count.
inline std::vector<ClientUpdateResult> run_client_updates(
    const std::vector<std::size_t>& sampled,
    const std::vector<ParamVector>& theta_bar,
    std::vector<ClientState>& states, const ModelSpec& spec, const Dataset& ds,
    const LocalTrainParams& params, std::size_t round, std::size_t threads) {
  std::vector<ClientUpdateResult> results(sampled.size());
  const std::size_t n = sampled.size();
  const std::size_t workers = std::min(threads, n);
  if (workers <= 1) {
    for (std::size_t k = 0; k < n; ++k) {
      results[k] = client_update(theta_bar[k], states[sampled[k]], spec, ds,
                                 params, round);
    }
    return results;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      try {
        for (std::size_t k = w; k < n; k += workers) {
          results[k] = client_update(theta_bar[k], states[sampled[k]], spec,
                                     ds, params, round);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

}  // namespace detail

// Full experiment: build data, partition, initialize clients, run T rounds
// of the configured strategy, evaluate every client every round. Fully
// deterministic given the config.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();

  ExperimentResult result;
  Dataset ds;
  if (cfg.dataset.kind == DatasetKind::kSynthetic) {
    auto syn = make_clustered_synthetic(
        cfg.dataset.clusters, cfg.clients / cfg.dataset.clusters,
        cfg.dataset.classes, cfg.dataset.samples_per_client,
        cfg.dataset.input_dim, cfg.dataset.cluster_shift,
        mix_seed(cfg.seed, kSeedDataset));
    ds = std::move(syn.data);
    result.partition.shards = std::move(syn.client_shards);
    result.cluster_of_client = std::move(syn.cluster_of_client);
  } else {
    ds = load_csv(cfg.dataset.path);
    const std::uint64_t pseed = mix_seed(cfg.seed, kSeedPartition);
    if (cfg.partition.kind == PartitionKind::kDirichlet) {
      result.partition =
          partition_dirichlet(ds, cfg.clients, cfg.partition.alpha, pseed);
    } else {
      result.partition = partition_pathological(
          ds, cfg.clients, cfg.partition.classes_per_client, pseed);
    }
  }
  for (std::size_t i = 0; i < cfg.clients; ++i) {
    result.partition.splits.push_back(
        split_train_test(ds, result.partition.shards[i], cfg.train_fraction,
                         mix_seed(cfg.seed, kSeedSplit + i)));
  }
  result.partition_digest = partition_hash(result.partition);

  const ModelSpec spec{ds.input_dim, cfg.hidden_dims, ds.num_classes};
  spec.validate();
  result.model_spec = spec;
  const auto scheme =
      SharingScheme::make(spec, cfg.strategy.strategy, cfg.strategy.pms);
  const std::size_t per_client_comm = 2 * layout_count(scheme.shared_layout);

  std::vector<ClientState> states;
  std::vector<ParamVector> initial_blocks;
  std::vector<std::size_t> shard_sizes;
  // Every client starts from one broadcast initialization (heads included,
  // they diverge through local training). A common starting basin is what
  // makes parameter-space inner products between clients meaningful for the
  // weight updates.
  const ModelParams base = init_params(spec, mix_seed(cfg.seed, kSeedInit));
  for (std::size_t i = 0; i < cfg.clients; ++i) {
    const ParamVector omega = omega_of(base);
    auto [shared0, private0] = split_at(omega, scheme.shared_shapes);
    ClientState st;
    st.private_block = std::move(private0);
    st.last_shared = shared0;
    st.momentum.velocity = ParamVector::zeros(spec.full_layout());
    st.shard = result.partition.splits[i];
    st.shard_size = result.partition.shards[i].size();
    st.seed = mix_seed(cfg.seed, kSeedClient + i);
    states.push_back(std::move(st));
    initial_blocks.push_back(std::move(shared0));
    shard_sizes.push_back(result.partition.shards[i].size());
  }

  ServerState server;
  ParamVector fedavg_global;
  if (cfg.strategy.strategy == Strategy::kFedApa) {
    server = ServerState::init(std::move(initial_blocks));
  } else if (cfg.strategy.strategy == Strategy::kFedAvg) {
    fedavg_global =
        fedavg_aggregate(ParamMatrix(std::move(initial_blocks)), shard_sizes);
  }

  const LocalTrainParams local_params{cfg.local_epochs, cfg.batch_size, cfg.lr,
                                      cfg.momentum};
  const std::string config_line = resolved_config_json(cfg).dump();
  if (cfg.output.weight_snapshots) {
    std::filesystem::create_directories(cfg.output.dir);
  }

  for (std::size_t t = 1; t <= cfg.rounds; ++t) {
    const auto started = std::chrono::steady_clock::now();
    RoundRecord rec;
    rec.round = t;
    try {
      Rng round_rng(mix_seed(cfg.seed, kSeedRound + t));
      rec.sampled =
          sample_clients(cfg.clients, cfg.participation_fraction, round_rng);

      std::vector<ParamVector> theta_bar;
      theta_bar.reserve(rec.sampled.size());
      for (std::size_t i : rec.sampled) {
        switch (cfg.strategy.strategy) {
          case Strategy::kFedApa: theta_bar.push_back(fedapa_aggregate(server, i)); break;
          case Strategy::kFedAvg: theta_bar.push_back(fedavg_global); break;
          case Strategy::kLocalOnly: theta_bar.push_back(states[i].last_shared); break;
        }
      }
      for (std::size_t k = 0; k < rec.sampled.size(); ++k) {
        states[rec.sampled[k]].last_shared = theta_bar[k];
        if (cfg.strategy.reset_momentum_each_round) {
          states[rec.sampled[k]].momentum.velocity =
              ParamVector::zeros(spec.full_layout());
        }
      }

      auto returns =
          detail::run_client_updates(rec.sampled, theta_bar, states, spec, ds,
                                     local_params, t, cfg.threads);

      if (cfg.strategy.strategy == Strategy::kFedApa) {
        std::vector<ParamVector> returned;
        returned.reserve(returns.size());
        for (auto& r : returns) returned.push_back(std::move(r.shared));
        const DriftRecord drift = server_round_fedapa(
            server, rec.sampled, theta_bar, returned, cfg.strategy);
        rec.drift_checked = true;
        rec.drift_step_ok = drift.step_ok;
        rec.drift_cumulative_checked = drift.cumulative_checked;
        rec.drift_cumulative_ok = drift.cumulative_ok;
        // participants are judged by the personalized aggregate the server
        // holds after the round (Alg. 1's output set), computed from the
        // updated weights and freshly stored uploads
        for (std::size_t i : rec.sampled) {
          states[i].last_shared = fedapa_aggregate(server, i);
        }
      } else if (cfg.strategy.strategy == Strategy::kFedAvg) {
        std::vector<ParamVector> returned;
        std::vector<std::size_t> sizes;
        for (std::size_t k = 0; k < rec.sampled.size(); ++k) {
          returned.push_back(std::move(returns[k].shared));
          sizes.push_back(states[rec.sampled[k]].shard_size);
        }
        fedavg_global = fedavg_aggregate(ParamMatrix(std::move(returned)), sizes);
        // participants are judged by the round's aggregated global (with one
        // client this degenerates to plain local training)
        for (std::size_t i : rec.sampled) states[i].last_shared = fedavg_global;
      }

      for (std::size_t i = 0; i < cfg.clients; ++i) {
        const auto eval = evaluate_client(spec, states[i], ds);
        rec.client_acc.push_back(eval.accuracy);
        rec.client_loss.push_back(eval.mean_loss);
      }
      double acc_sum = 0.0;
      for (double a : rec.client_acc) acc_sum += a;
      rec.mean_acc = acc_sum / static_cast<double>(cfg.clients);
      rec.weighted_acc = weighted_accuracy(rec.client_acc, shard_sizes);
      rec.transmitted_params = rec.sampled.size() * per_client_comm;
      result.transmitted_total += rec.transmitted_params;

      if (cfg.output.weight_snapshots &&
          cfg.strategy.strategy == Strategy::kFedApa) {
        char name[48];
        std::snprintf(name, sizeof(name), "weights_round_%04zu.csv", t);
        rec.weight_snapshot = name;
        write_weight_snapshot_csv(
            (std::filesystem::path(cfg.output.dir) / name).string(),
            server.weights, config_line);
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("round " + std::to_string(t) + ": " + e.what());
    }
    rec.duration_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - started)
                          .count();
    result.records.push_back(std::move(rec));
  }

  if (cfg.strategy.strategy == Strategy::kFedApa) {
    for (const auto& w : server.weights) result.final_weights.push_back(w.a);
  }
  for (const auto& st : states) {
    const ParamVector omega = concat(st.last_shared, st.private_block);
    result.final_models.push_back(model_from_omega(spec, omega));
  }
  return result;
}

}  // namespace fedapa
