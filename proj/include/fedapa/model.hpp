#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "fedapa/data.hpp"
#include "fedapa/numerics.hpp"
#include "fedapa/rng.hpp"

namespace fedapa {

// MLP with ReLU hidden layers: the feature extractor is every affine layer
// except the last, the decision head is the final affine layer + softmax.
struct ModelSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::size_t num_classes = 0;

  void validate() const {
    if (input_dim == 0 || num_classes == 0 || hidden_dims.empty()) {
      throw std::invalid_argument("ModelSpec: dims must be positive");
    }
    for (std::size_t h : hidden_dims) {
      if (h == 0) throw std::invalid_argument("ModelSpec: zero hidden dim");
    }
  }

  // [input, hidden..., classes]
  std::vector<std::size_t> dims() const {
    std::vector<std::size_t> d;
    d.push_back(input_dim);
    d.insert(d.end(), hidden_dims.begin(), hidden_dims.end());
    d.push_back(num_classes);
    return d;
  }

  Layout extractor_layout() const {
    const auto d = dims();
    Layout l;
    for (std::size_t i = 0; i + 2 < d.size(); ++i) {
      l.push_back({d[i], d[i + 1]});
      l.push_back({d[i + 1], 0});
    }
    return l;
  }

  Layout head_layout() const {
    const auto d = dims();
    const std::size_t n = d.size();
    return {{d[n - 2], d[n - 1]}, {d[n - 1], 0}};
  }

  Layout full_layout() const {
    return layout_concat(extractor_layout(), head_layout());
  }

  std::size_t extractor_params() const { return layout_count(extractor_layout()); }
  std::size_t head_params() const { return layout_count(head_layout()); }
  std::size_t total_params() const { return extractor_params() + head_params(); }
};

// theta = extractor, phi = head; [theta; phi] is the full model omega.
struct ModelParams {
  ParamVector theta;
  ParamVector phi;
};

struct MomentumState {
  ParamVector velocity;  // full omega layout
};

inline ParamVector omega_of(const ModelParams& p) {
  return concat(p.theta, p.phi);
}

inline ModelParams model_from_omega(const ModelSpec& spec,
                                    const ParamVector& omega) {
  if (omega.layout() != spec.full_layout()) {
    throw std::invalid_argument("model_from_omega: layout mismatch");
  }
  auto [theta, phi] = split_at(omega, spec.extractor_layout().size());
  return {std::move(theta), std::move(phi)};
}

// Glorot-uniform weights, zero biases, drawn layer by layer from one stream.
inline ModelParams init_params(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  const auto d = spec.dims();
  std::vector<double> values;
  values.reserve(spec.total_params());
  for (std::size_t l = 0; l + 1 < d.size(); ++l) {
    const double s = std::sqrt(6.0 / static_cast<double>(d[l] + d[l + 1]));
    for (std::size_t k = 0; k < d[l] * d[l + 1]; ++k) {
      values.push_back(rng.uniform_range(-s, s));
    }
    for (std::size_t k = 0; k < d[l + 1]; ++k) values.push_back(0.0);
  }
  ParamVector omega(std::move(values), spec.full_layout());
  return model_from_omega(spec, omega);
}

namespace detail {

struct LayerDesc {
  std::size_t w_offset = 0;
  std::size_t b_offset = 0;
  std::size_t in = 0;
  std::size_t out = 0;
  bool in_head = false;
};

inline std::vector<LayerDesc> layer_descs(const ModelSpec& spec) {
  const auto d = spec.dims();
  std::vector<LayerDesc> descs;
  std::size_t theta_ofs = 0;
  for (std::size_t l = 0; l + 1 < d.size(); ++l) {
    LayerDesc ld;
    ld.in = d[l];
    ld.out = d[l + 1];
    ld.in_head = (l + 2 == d.size());
    if (ld.in_head) {
      ld.w_offset = 0;
      ld.b_offset = ld.in * ld.out;
    } else {
      ld.w_offset = theta_ofs;
      ld.b_offset = theta_ofs + ld.in * ld.out;
      theta_ofs += ld.in * ld.out + ld.out;
    }
    descs.push_back(ld);
  }
  return descs;
}

inline void softmax_inplace(std::vector<double>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (auto& v : z) {
    v = std::exp(v - m);
    sum += v;
  }
  for (auto& v : z) v /= sum;
}

// activations[0] is the input; activations[l+1] the post-ReLU output of
// layer l (logits for the head layer, pre-softmax).
inline std::vector<std::vector<double>> forward_cache(
    const ModelSpec& spec, const ModelParams& params,
    std::span<const double> x) {
  if (x.size() != spec.input_dim) {
    throw std::invalid_argument("forward: input has " +
                                std::to_string(x.size()) + " features, want " +
                                std::to_string(spec.input_dim));
  }
  const auto descs = layer_descs(spec);
  std::vector<std::vector<double>> acts;
  acts.emplace_back(x.begin(), x.end());
  for (const auto& ld : descs) {
    const auto src = ld.in_head ? params.phi.values() : params.theta.values();
    const double* w = src.data() + ld.w_offset;
    const double* b = src.data() + ld.b_offset;
    const auto& a = acts.back();
    std::vector<double> z(ld.out);
    for (std::size_t j = 0; j < ld.out; ++j) {
      double acc = b[j];
      for (std::size_t i = 0; i < ld.in; ++i) acc += a[i] * w[i * ld.out + j];
      z[j] = ld.in_head ? acc : std::max(0.0, acc);
    }
    acts.push_back(std::move(z));
  }
  return acts;
}

}  // namespace detail

// class-probability vector (softmax over head logits)
inline std::vector<double> forward(const ModelSpec& spec,
                                   const ModelParams& params,
                                   std::span<const double> x) {
  auto acts = detail::forward_cache(spec, params, x);
  auto probs = std::move(acts.back());
  detail::softmax_inplace(probs);
  return probs;
}

inline constexpr double kProbFloor = 1e-12;

inline double cross_entropy(std::span<const double> probs, std::size_t label) {
  if (label >= probs.size()) {
    throw std::invalid_argument("cross_entropy: class index " +
                                std::to_string(label) + " out of range");
  }
  return -std::log(std::max(probs[label], kProbFloor));
}

// Exact gradient of the batch-mean cross-entropy loss over [theta; phi].
inline ParamVector backward(const ModelSpec& spec, const ModelParams& params,
                            const Dataset& ds,
                            std::span<const std::size_t> batch) {
  if (batch.empty()) {
    throw std::invalid_argument("backward: empty batch");
  }
  const auto descs = detail::layer_descs(spec);
  const std::size_t num_layers = descs.size();

  std::vector<double> gtheta(spec.extractor_params(), 0.0);
  std::vector<double> gphi(spec.head_params(), 0.0);

  for (std::size_t idx : batch) {
    auto acts = detail::forward_cache(spec, params, ds.row(idx));
    std::vector<double> probs = acts.back();
    detail::softmax_inplace(probs);
    const std::size_t y = ds.labels[idx];
    if (y >= spec.num_classes) {
      throw std::invalid_argument("backward: label out of range");
    }

    // d(loss)/d(logits) for softmax + cross-entropy
    std::vector<double> dcur = probs;
    dcur[y] -= 1.0;

    for (std::size_t l = num_layers; l-- > 0;) {
      const auto& ld = descs[l];
      const auto& a = acts[l];
      auto& g = ld.in_head ? gphi : gtheta;
      for (std::size_t i = 0; i < ld.in; ++i) {
        for (std::size_t j = 0; j < ld.out; ++j) {
          g[ld.w_offset + i * ld.out + j] += a[i] * dcur[j];
        }
      }
      for (std::size_t j = 0; j < ld.out; ++j) g[ld.b_offset + j] += dcur[j];

      if (l > 0) {
        const auto src =
            ld.in_head ? params.phi.values() : params.theta.values();
        const double* w = src.data() + ld.w_offset;
        std::vector<double> dprev(ld.in, 0.0);
        for (std::size_t i = 0; i < ld.in; ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < ld.out; ++j) {
            acc += w[i * ld.out + j] * dcur[j];
          }
          // ReLU gate: acts[l] is the post-ReLU output of layer l-1
          dprev[i] = a[i] > 0.0 ? acc : 0.0;
        }
        dcur = std::move(dprev);
      }
    }
  }

  const double inv = 1.0 / static_cast<double>(batch.size());
  std::vector<double> values;
  values.reserve(spec.total_params());
  for (double v : gtheta) values.push_back(v * inv);
  for (double v : gphi) values.push_back(v * inv);
  return ParamVector(std::move(values), spec.full_layout());
}

// Heavy-ball update: velocity <- momentum*velocity + grad; omega -= lr*velocity.
inline void sgd_momentum_step(ParamVector& omega, const ParamVector& grad,
                              MomentumState& state, double lr,
                              double momentum) {
  require_same_layout(omega, grad, "sgd_momentum_step");
  require_same_layout(omega, state.velocity, "sgd_momentum_step");
  if (lr < 0.0 || momentum < 0.0 || momentum >= 1.0) {
    throw std::invalid_argument("sgd_momentum_step: need lr >= 0, 0 <= momentum < 1");
  }
  auto v = state.velocity.values();
  auto w = omega.values();
  const auto g = grad.values();
  for (std::size_t k = 0; k < w.size(); ++k) {
    v[k] = momentum * v[k] + g[k];
    w[k] -= lr * v[k];
  }
}

struct EvalResult {
  double accuracy = 0.0;
  double mean_loss = 0.0;
};

// argmax prediction, ties broken toward the lowest class index
inline std::size_t predict_class(std::span<const double> probs) {
  return static_cast<std::size_t>(
      std::max_element(probs.begin(), probs.end()) - probs.begin());
}

inline EvalResult evaluate_model(const ModelSpec& spec,
                                 const ModelParams& params, const Dataset& ds,
                                 std::span<const std::size_t> indices) {
  if (indices.empty()) {
    throw std::invalid_argument("evaluate_model: empty index set");
  }
  std::size_t correct = 0;
  double loss = 0.0;
  for (std::size_t idx : indices) {
    const auto probs = forward(spec, params, ds.row(idx));
    if (predict_class(probs) == ds.labels[idx]) ++correct;
    loss += cross_entropy(probs, ds.labels[idx]);
  }
  return {static_cast<double>(correct) / static_cast<double>(indices.size()),
          loss / static_cast<double>(indices.size())};
}

}  // namespace fedapa
