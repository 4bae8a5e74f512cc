#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fedapa {

// Tensor shape inside a flat parameter vector: (rows, cols) for a matrix,
// (len, 0) for a plain vector.
struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t count() const noexcept { return cols == 0 ? rows : rows * cols; }
  bool is_matrix() const noexcept { return cols != 0; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

using Layout = std::vector<Shape>;

inline std::size_t layout_count(const Layout& layout) {
  std::size_t n = 0;
  for (const auto& s : layout) n += s.count();
  return n;
}

inline Layout layout_concat(const Layout& a, const Layout& b) {
  Layout out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

// Flat 64-bit parameter vector with shape metadata. The layout is metadata
// only; all arithmetic treats the values as one flat sequence. Elements are
// validated finite at construction.
class ParamVector {
 public:
  ParamVector() = default;

  ParamVector(std::vector<double> values, Layout layout)
      : values_(std::move(values)), layout_(std::move(layout)) {
    if (values_.size() != layout_count(layout_)) {
      throw std::invalid_argument(
          "ParamVector: layout counts " +
          std::to_string(layout_count(layout_)) + " elements, got " +
          std::to_string(values_.size()));
    }
    for (double v : values_) {
      if (!std::isfinite(v)) {
        throw std::invalid_argument("ParamVector: non-finite element");
      }
    }
  }

  static ParamVector zeros(Layout layout) {
    std::vector<double> v(layout_count(layout), 0.0);
    return ParamVector(std::move(v), std::move(layout));
  }

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  const Layout& layout() const noexcept { return layout_; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  bool same_layout(const ParamVector& other) const {
    return layout_ == other.layout_;
  }

 private:
  std::vector<double> values_;
  Layout layout_;
};

inline void require_same_layout(const ParamVector& a, const ParamVector& b,
                                const char* op) {
  if (!a.same_layout(b)) {
    throw std::invalid_argument(std::string(op) + ": layout mismatch (" +
                                std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + " elements)");
  }
}

// M parameter vectors sharing one layout; column j holds client j's
// parameters.
class ParamMatrix {
 public:
  ParamMatrix() = default;

  explicit ParamMatrix(std::vector<ParamVector> columns)
      : columns_(std::move(columns)) {
    if (columns_.empty()) {
      throw std::invalid_argument("ParamMatrix: needs at least one column");
    }
    for (const auto& c : columns_) {
      require_same_layout(columns_.front(), c, "ParamMatrix");
    }
  }

  std::size_t num_columns() const noexcept { return columns_.size(); }
  const ParamVector& column(std::size_t j) const { return columns_.at(j); }
  const Layout& layout() const { return columns_.front().layout(); }

  void set_column(std::size_t j, ParamVector v) {
    require_same_layout(columns_.at(j), v, "ParamMatrix::set_column");
    columns_[j] = std::move(v);
  }

  double frobenius_norm() const {
    double sum = 0.0;
    for (const auto& c : columns_) {
      for (double v : c.values()) sum += v * v;
    }
    return std::sqrt(sum);
  }

 private:
  std::vector<ParamVector> columns_;
};

// result = sum_j weights[j] * column(j); accumulation is plain left-to-right
// in j so results are bit-reproducible.
inline ParamVector weighted_sum(const ParamMatrix& params,
                                std::span<const double> weights) {
  if (weights.size() != params.num_columns()) {
    throw std::invalid_argument(
        "weighted_sum: " + std::to_string(weights.size()) + " weights for " +
        std::to_string(params.num_columns()) + " columns");
  }
  std::vector<double> acc(layout_count(params.layout()), 0.0);
  for (std::size_t j = 0; j < params.num_columns(); ++j) {
    const auto col = params.column(j).values();
    const double w = weights[j];
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += w * col[k];
  }
  return ParamVector(std::move(acc), params.layout());
}

// elementwise a - b
inline ParamVector delta(const ParamVector& a, const ParamVector& b) {
  require_same_layout(a, b, "delta");
  std::vector<double> out(a.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = a[k] - b[k];
  return ParamVector(std::move(out), a.layout());
}

// result[j] = dot(column(j), v), i.e. Theta^T v
inline std::vector<double> mat_transpose_vec(const ParamMatrix& params,
                                             const ParamVector& v) {
  require_same_layout(params.column(0), v, "mat_transpose_vec");
  std::vector<double> out(params.num_columns(), 0.0);
  for (std::size_t j = 0; j < params.num_columns(); ++j) {
    const auto col = params.column(j).values();
    double acc = 0.0;
    for (std::size_t k = 0; k < col.size(); ++k) acc += col[k] * v[k];
    out[j] = acc;
  }
  return out;
}

inline double dot(const ParamVector& a, const ParamVector& b) {
  require_same_layout(a, b, "dot");
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
  return acc;
}

inline double norm2(const ParamVector& v) {
  double acc = 0.0;
  for (double x : v.values()) acc += x * x;
  return std::sqrt(acc);
}

// v <- v + s * w
inline void axpy(ParamVector& v, double s, const ParamVector& w) {
  require_same_layout(v, w, "axpy");
  for (std::size_t k = 0; k < v.size(); ++k) v[k] += s * w[k];
}

inline ParamVector concat(const ParamVector& a, const ParamVector& b) {
  std::vector<double> values;
  values.reserve(a.size() + b.size());
  values.insert(values.end(), a.values().begin(), a.values().end());
  values.insert(values.end(), b.values().begin(), b.values().end());
  return ParamVector(std::move(values), layout_concat(a.layout(), b.layout()));
}

// inverse of concat: first part takes `front` shapes of v's layout
inline std::pair<ParamVector, ParamVector> split_at(const ParamVector& v,
                                                    std::size_t front_shapes) {
  if (front_shapes > v.layout().size()) {
    throw std::invalid_argument("split_at: not enough shapes");
  }
  Layout la(v.layout().begin(), v.layout().begin() + front_shapes);
  Layout lb(v.layout().begin() + front_shapes, v.layout().end());
  const std::size_t na = layout_count(la);
  std::vector<double> va(v.values().begin(), v.values().begin() + na);
  std::vector<double> vb(v.values().begin() + na, v.values().end());
  return {ParamVector(std::move(va), std::move(la)),
          ParamVector(std::move(vb), std::move(lb))};
}

// small helpers for plain weight vectors
inline double vec_dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double vec_norm2(std::span<const double> a) {
  double acc = 0.0;
  for (double x : a) acc += x * x;
  return std::sqrt(acc);
}

}  // namespace fedapa
