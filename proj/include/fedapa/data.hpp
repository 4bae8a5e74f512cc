#pragma once

#include <charconv>
#include <cstddef>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedapa/rng.hpp"

namespace fedapa {

// Labeled feature matrix; rows are samples, labels are class indices.
struct Dataset {
  std::vector<double> features;  // row-major, size() * input_dim
  std::vector<std::size_t> labels;
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return labels.size(); }

  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * input_dim, input_dim};
  }

  void validate() const {
    if (features.size() != labels.size() * input_dim) {
      throw std::invalid_argument("Dataset: feature/label count mismatch");
    }
    for (std::size_t y : labels) {
      if (y >= num_classes) {
        throw std::invalid_argument("Dataset: label out of range");
      }
    }
  }
};

struct ClusteredSynthetic {
  Dataset data;
  std::vector<std::size_t> cluster_of_client;
  std::vector<std::vector<std::size_t>> client_shards;
};

inline constexpr double kClassMeanSpread = 2.0;
inline constexpr double kSampleNoiseSigma = 1.0;

// Gaussian class blobs with a cluster structure. All clients of a cluster
// draw from the same class means. Cluster k's class-c mean is
//   base_c + shift * (base_{(c+k) mod C} - base_c)
// so shift 0 makes all clusters identical and shift 1 permutes the class
// geometry cyclically across clusters, which makes a single global model
// fit conflicting labelings. Labels are balanced round-robin per client.
inline ClusteredSynthetic make_clustered_synthetic(
    std::size_t clusters, std::size_t clients_per_cluster, std::size_t classes,
    std::size_t samples_per_client, std::size_t input_dim, double cluster_shift,
    std::uint64_t seed) {
  if (clusters == 0 || clients_per_cluster == 0 || classes == 0 ||
      samples_per_client == 0 || input_dim == 0) {
    throw std::invalid_argument("make_clustered_synthetic: counts must be positive");
  }
  Rng rng(seed);

  std::vector<double> base(classes * input_dim);
  for (auto& v : base) v = kClassMeanSpread * rng.normal();

  // means[k][c * d + j]
  std::vector<std::vector<double>> means(clusters,
                                         std::vector<double>(base.size()));
  for (std::size_t k = 0; k < clusters; ++k) {
    for (std::size_t c = 0; c < classes; ++c) {
      const std::size_t pc = (c + k) % classes;
      for (std::size_t j = 0; j < input_dim; ++j) {
        const double b = base[c * input_dim + j];
        const double pb = base[pc * input_dim + j];
        means[k][c * input_dim + j] = b + cluster_shift * (pb - b);
      }
    }
  }

  const std::size_t num_clients = clusters * clients_per_cluster;
  ClusteredSynthetic out;
  out.data.input_dim = input_dim;
  out.data.num_classes = classes;
  out.data.features.reserve(num_clients * samples_per_client * input_dim);
  out.data.labels.reserve(num_clients * samples_per_client);
  out.cluster_of_client.resize(num_clients);
  out.client_shards.resize(num_clients);

  for (std::size_t i = 0; i < num_clients; ++i) {
    const std::size_t k = i / clients_per_cluster;
    out.cluster_of_client[i] = k;
    for (std::size_t s = 0; s < samples_per_client; ++s) {
      const std::size_t c = s % classes;
      out.client_shards[i].push_back(out.data.labels.size());
      out.data.labels.push_back(c);
      for (std::size_t j = 0; j < input_dim; ++j) {
        out.data.features.push_back(means[k][c * input_dim + j] +
                                    kSampleNoiseSigma * rng.normal());
      }
    }
  }
  return out;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

inline std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw std::runtime_error("format_double failed");
  return std::string(buf, end);
}

}  // namespace detail

// CSV with a header row; the column named "label" (last) holds integer class
// indices, every other column is a float feature.
inline Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("load_csv: empty file " + path);
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_csv_line(line);
  if (header.empty() || header.back() != "label") {
    throw std::runtime_error("load_csv: last column must be named 'label'");
  }
  const std::size_t dim = header.size() - 1;
  if (dim == 0) {
    throw std::runtime_error("load_csv: no feature columns");
  }

  Dataset ds;
  ds.input_dim = dim;
  std::size_t row_no = 1;
  std::size_t max_label = 0;
  while (std::getline(in, line)) {
    ++row_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw std::runtime_error("load_csv: row " + std::to_string(row_no) +
                               " has " + std::to_string(cells.size()) +
                               " cells, expected " +
                               std::to_string(header.size()));
    }
    for (std::size_t j = 0; j < dim; ++j) {
      double v = 0.0;
      const auto& c = cells[j];
      auto [p, ec] = std::from_chars(c.data(), c.data() + c.size(), v);
      if (ec != std::errc{} || p != c.data() + c.size()) {
        throw std::runtime_error("load_csv: row " + std::to_string(row_no) +
                                 ": bad float '" + c + "'");
      }
      ds.features.push_back(v);
    }
    long long y = -1;
    const auto& lc = cells.back();
    auto [p, ec] = std::from_chars(lc.data(), lc.data() + lc.size(), y);
    if (ec != std::errc{} || p != lc.data() + lc.size() || y < 0) {
      throw std::runtime_error("load_csv: row " + std::to_string(row_no) +
                               ": bad label '" + lc + "'");
    }
    ds.labels.push_back(static_cast<std::size_t>(y));
    max_label = std::max(max_label, ds.labels.back());
  }
  if (ds.labels.empty()) {
    throw std::runtime_error("load_csv: no data rows in " + path);
  }
  ds.num_classes = max_label + 1;
  return ds;
}

inline void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_csv: cannot open " + path);
  for (std::size_t j = 0; j < ds.input_dim; ++j) out << "f" << j << ",";
  out << "label\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto r = ds.row(i);
    for (double v : r) out << detail::format_double(v) << ",";
    out << ds.labels[i] << "\n";
  }
}

}  // namespace fedapa
