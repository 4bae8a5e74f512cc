#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "fedapa/data.hpp"
#include "fedapa/model.hpp"
#include "fedapa/numerics.hpp"
#include "fedapa/partition.hpp"
#include "fedapa/rng.hpp"
#include "fedapa/strategy.hpp"

namespace fedapa {

// Which slice of [theta; phi] travels to the server. The shared block is
// always a prefix of the full parameter vector: the extractor under partial
// model sharing, everything under full sharing, nothing for local-only.
struct SharingScheme {
  Layout shared_layout;
  Layout private_layout;
  std::size_t shared_shapes = 0;  // shape count of the shared prefix

  static SharingScheme make(const ModelSpec& spec, Strategy strategy,
                            bool pms) {
    SharingScheme s;
    const Layout full = spec.full_layout();
    if (strategy == Strategy::kLocalOnly) {
      s.shared_shapes = 0;
    } else if (pms) {
      s.shared_shapes = spec.extractor_layout().size();
    } else {
      s.shared_shapes = full.size();
    }
    s.shared_layout.assign(full.begin(), full.begin() + s.shared_shapes);
    s.private_layout.assign(full.begin() + s.shared_shapes, full.end());
    return s;
  }
};

// Everything a client owns across rounds. `private_block` is the part of the
// model that never leaves the client; `last_shared` is the most recent block
// received from the server (the client's own initial block before any
// participation). The evaluated personalized model is always
// [last_shared; private_block].
struct ClientState {
  ParamVector private_block;
  ParamVector last_shared;
  MomentumState momentum;
  TrainTestSplit shard;
  std::size_t shard_size = 0;
  std::uint64_t seed = 0;
};

struct LocalTrainParams {
  std::size_t epochs = 2;
  std::size_t batch_size = 64;
  double lr = 0.01;
  double momentum = 0.9;
};

struct ClientUpdateResult {
  ParamVector shared;
  double train_loss = 0.0;
};

// Alg. 1 ClientUpdate: adopt the downloaded block, run E epochs of
// mini-batch SGD with momentum over the train split (seed-deterministic
// shuffles), give back the updated shared block. The private block and the
// momentum buffer stay in the ClientState.
inline ClientUpdateResult client_update(const ParamVector& shared_in,
                                        ClientState& state,
                                        const ModelSpec& spec,
                                        const Dataset& ds,
                                        const LocalTrainParams& p,
                                        std::uint64_t round) {
  if (state.shard.train.empty()) {
    throw std::invalid_argument("client_update: empty train split");
  }
  if (p.batch_size == 0) {
    throw std::invalid_argument("client_update: batch_size must be positive");
  }
  const std::size_t shared_shapes = shared_in.layout().size();
  ParamVector omega = concat(shared_in, state.private_block);
  if (omega.layout() != spec.full_layout()) {
    throw std::invalid_argument("client_update: shared block layout mismatch");
  }

  Rng rng(mix_seed(state.seed, round));
  std::vector<std::size_t> order = state.shard.train;
  for (std::size_t e = 0; e < p.epochs; ++e) {
    rng.shuffle(order);
    for (std::size_t pos = 0; pos < order.size(); pos += p.batch_size) {
      const std::size_t len = std::min(p.batch_size, order.size() - pos);
      const auto model = model_from_omega(spec, omega);
      const ParamVector grad =
          backward(spec, model, ds, {order.data() + pos, len});
      sgd_momentum_step(omega, grad, state.momentum, p.lr, p.momentum);
    }
  }

  auto [shared_new, private_new] = split_at(omega, shared_shapes);
  state.private_block = std::move(private_new);

  const auto train_eval = evaluate_model(spec, model_from_omega(spec, omega),
                                         ds, state.shard.train);
  return {std::move(shared_new), train_eval.mean_loss};
}

// Server view: the last uploaded shared block per client, one aggregation
// weight vector per client, and the running max parameter norm (the `Max`
// constant of the drift bound).
struct ServerState {
  ParamMatrix theta_store;
  std::vector<WeightVector> weights;
  std::size_t round = 0;
  double max_param_norm = 0.0;
  std::vector<double> drift_budget;  // cumulative 2*eta*Max*||Theta||_F per client

  static ServerState init(std::vector<ParamVector> initial_blocks) {
    ServerState s;
    const std::size_t m = initial_blocks.size();
    s.theta_store = ParamMatrix(std::move(initial_blocks));
    for (std::size_t i = 0; i < m; ++i) {
      s.weights.push_back(WeightVector::identity(m, i));
      s.max_param_norm =
          std::max(s.max_param_norm, norm2(s.theta_store.column(i)));
    }
    s.drift_budget.assign(m, 0.0);
    return s;
  }

  std::size_t num_clients() const { return weights.size(); }
};

// weighted aggregation for one client: theta_bar_i = sum_j a_ij theta_j
inline ParamVector fedapa_aggregate(const ServerState& server,
                                    std::size_t client) {
  return weighted_sum(server.theta_store, server.weights.at(client).a);
}

inline constexpr double kDriftSlack = 1e-12;

// Outcome of the per-round weight-drift invariant checks. The step bound
// ||A_raw - A_prev|| <= eta * ||Theta||_F * ||delta|| is a Cauchy-Schwarz
// consequence of the update and must hold always. The cumulative bound
// ||A_raw - e_i|| <= sum over steps of 2*eta*Max*||Theta||_F additionally
// needs convex weight rows, so it is only checked while the full
// post-processing pipeline is active.
struct DriftRecord {
  bool step_ok = true;
  double max_step_drift = 0.0;
  double max_step_bound = 0.0;
  bool cumulative_checked = false;
  bool cumulative_ok = true;
};

// Server half of a FedAPA round (Alg. 1 lines 9-13) after all sampled
// clients returned: per client in ascending index order, compute the delta,
// update the weight vector from it, post-process, store the uploaded block,
// refresh the max norm.
inline DriftRecord server_round_fedapa(
    ServerState& server, const std::vector<std::size_t>& sampled,
    const std::vector<ParamVector>& theta_bar_sent,
    const std::vector<ParamVector>& theta_returned,
    const StrategyConfig& cfg) {
  if (sampled.empty()) {
    throw std::invalid_argument("server_round_fedapa: empty client sample");
  }
  if (sampled.size() != theta_bar_sent.size() ||
      sampled.size() != theta_returned.size()) {
    throw std::invalid_argument("server_round_fedapa: per-client data mismatch");
  }

  DriftRecord rec;
  rec.cumulative_checked = cfg.full_postprocess();
  for (std::size_t k = 0; k < sampled.size(); ++k) {
    const std::size_t i = sampled[k];
    const ParamVector delta_i = delta(theta_returned[k], theta_bar_sent[k]);

    server.max_param_norm =
        std::max(server.max_param_norm, norm2(theta_returned[k]));

    const auto& prev = server.weights.at(i).a;
    const auto raw = update_weights(prev, server.theta_store, delta_i, cfg.eta,
                                    cfg.sign_convention);

    // per-step drift vs its bound
    double drift_sq = 0.0;
    for (std::size_t j = 0; j < raw.size(); ++j) {
      const double d = raw[j] - prev[j];
      drift_sq += d * d;
    }
    const double drift = std::sqrt(drift_sq);
    const double frob = server.theta_store.frobenius_norm();
    const double bound = cfg.eta * frob * norm2(delta_i);
    rec.max_step_drift = std::max(rec.max_step_drift, drift);
    rec.max_step_bound = std::max(rec.max_step_bound, bound);
    if (drift > bound + kDriftSlack) rec.step_ok = false;

    if (rec.cumulative_checked) {
      server.drift_budget[i] += 2.0 * cfg.eta * server.max_param_norm * frob;
      std::vector<double> from_ei(raw.begin(), raw.end());
      from_ei[i] -= 1.0;
      if (vec_norm2(from_ei) > server.drift_budget[i] + kDriftSlack) {
        rec.cumulative_ok = false;
      }
    }

    server.weights[i] =
        postprocess(raw, i, cfg.mu, cfg.ablate_clip, cfg.ablate_self_weight,
                    cfg.ablate_normalize);
    server.theta_store.set_column(i, theta_returned[k]);
  }
  server.round += 1;
  return rec;
}

}  // namespace fedapa
