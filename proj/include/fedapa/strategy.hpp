#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedapa/numerics.hpp"

namespace fedapa {

enum class Strategy { kFedApa, kFedAvg, kLocalOnly };

// The printed update rule A <- A - eta * Theta^T * delta moves A against the
// direction that reduces 1/2 ||Theta A - theta||^2 (whose gradient in A is
// -Theta^T delta). kSurrogateDescent applies exact descent on that surrogate,
// matching the stated intent of minimizing the local loss; kLiteralPaper
// applies the formula as printed.
enum class SignConvention { kSurrogateDescent, kLiteralPaper };

struct StrategyConfig {
  Strategy strategy = Strategy::kFedApa;
  double eta = 0.01;
  double mu = 0.5;
  SignConvention sign_convention = SignConvention::kSurrogateDescent;
  bool pms = true;  // partial model sharing: transmit only the extractor
  bool ablate_clip = false;
  bool ablate_self_weight = false;
  bool ablate_normalize = false;
  bool reset_momentum_each_round = false;

  void validate() const {
    if (eta < 0.0) throw std::invalid_argument("eta: must be >= 0");
    if (mu < 0.0 || mu > 1.0) {
      throw std::invalid_argument("mu: must be in [0,1]");
    }
  }

  bool full_postprocess() const {
    return !ablate_clip && !ablate_self_weight && !ablate_normalize;
  }
};

// Per-client aggregation weights A_i; a[j] weighs client j's parameters when
// forming client i's personalized model.
struct WeightVector {
  std::vector<double> a;
  std::size_t owner = 0;

  // initial state: self-weight 1, everything else 0
  static WeightVector identity(std::size_t num_clients, std::size_t owner) {
    WeightVector w;
    w.a.assign(num_clients, 0.0);
    w.a[owner] = 1.0;
    w.owner = owner;
    return w;
  }
};

// Raw weight update from the client-parameter delta; post-processing is a
// separate step.
inline std::vector<double> update_weights(std::span<const double> a,
                                          const ParamMatrix& theta_store,
                                          const ParamVector& delta_i,
                                          double eta, SignConvention sign) {
  if (a.size() != theta_store.num_columns()) {
    throw std::invalid_argument("update_weights: weight/column count mismatch");
  }
  if (eta < 0.0) throw std::invalid_argument("update_weights: eta must be >= 0");
  const auto grad_term = mat_transpose_vec(theta_store, delta_i);
  const double step = sign == SignConvention::kSurrogateDescent ? eta : -eta;
  std::vector<double> out(a.begin(), a.end());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] += step * grad_term[j];
  return out;
}

// In order: clip each entry to [0,1], set the self-weight to mu, divide by
// the sum. Each step can be ablated.
inline WeightVector postprocess(std::vector<double> raw, std::size_t self_index,
                                double mu, bool ablate_clip = false,
                                bool ablate_self_weight = false,
                                bool ablate_normalize = false) {
  if (self_index >= raw.size()) {
    throw std::invalid_argument("postprocess: self index out of range");
  }
  if (!ablate_clip) {
    for (auto& v : raw) v = std::min(std::max(v, 0.0), 1.0);
  }
  if (!ablate_self_weight) {
    raw[self_index] = mu;
  }
  if (!ablate_normalize) {
    double sum = 0.0;
    for (double v : raw) sum += v;
    if (sum == 0.0) {
      throw std::invalid_argument("postprocess: cannot normalize zero-sum weights");
    }
    for (auto& v : raw) v /= sum;
  }
  return {std::move(raw), self_index};
}

// Size-weighted mean of participant parameters (Eq. 1 weighting |D_i|/N).
inline ParamVector fedavg_aggregate(const ParamMatrix& participants,
                                    std::span<const std::size_t> shard_sizes) {
  if (shard_sizes.size() != participants.num_columns()) {
    throw std::invalid_argument("fedavg_aggregate: size/column count mismatch");
  }
  std::size_t total = 0;
  for (std::size_t s : shard_sizes) {
    if (s == 0) throw std::invalid_argument("fedavg_aggregate: zero shard size");
    total += s;
  }
  std::vector<double> weights(shard_sizes.size());
  for (std::size_t j = 0; j < weights.size(); ++j) {
    weights[j] =
        static_cast<double>(shard_sizes[j]) / static_cast<double>(total);
  }
  return weighted_sum(participants, weights);
}

inline std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kFedApa: return "fedapa";
    case Strategy::kFedAvg: return "fedavg";
    case Strategy::kLocalOnly: return "local_only";
  }
  return "?";
}

}  // namespace fedapa
