#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedapa/data.hpp"
#include "fedapa/rng.hpp"

namespace fedapa {

struct TrainTestSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// M disjoint index lists into a parent Dataset plus their train/test
// sub-splits (filled by split_train_test).
struct PartitionResult {
  std::vector<std::vector<std::size_t>> shards;
  std::vector<TrainTestSplit> splits;
};

namespace detail {

// integer counts summing exactly to total, proportional to quotas
inline std::vector<std::size_t> largest_remainder(
    std::span<const double> quotas, std::size_t total) {
  const std::size_t n = quotas.size();
  std::vector<std::size_t> counts(n);
  std::vector<std::pair<double, std::size_t>> rema(n);
  std::size_t assigned = 0;
  double qsum = 0.0;
  for (double q : quotas) qsum += q;
  for (std::size_t i = 0; i < n; ++i) {
    const double exact = qsum > 0.0
                             ? quotas[i] / qsum * static_cast<double>(total)
                             : static_cast<double>(total) / static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(exact);
    rema[i] = {exact - static_cast<double>(counts[i]), i};
    assigned += counts[i];
  }
  std::stable_sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
    return a.first > b.first;
  });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) {
    counts[rema[k % n].second] += 1;
  }
  return counts;
}

inline std::vector<std::vector<std::size_t>> indices_by_class(
    const Dataset& ds) {
  std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);
  return by_class;
}

}  // namespace detail

// Practical non-IID: for each class, a Dir(alpha) proportion vector over
// clients allocates that class's samples (largest-remainder rounding, so
// class totals are conserved). Allocations leaving a client empty are
// redrawn up to 100 times, then single samples are reassigned from the
// largest shard.
inline PartitionResult partition_dirichlet(const Dataset& ds,
                                           std::size_t num_clients,
                                           double alpha, std::uint64_t seed) {
  if (alpha <= 0.0) throw std::invalid_argument("partition_dirichlet: alpha must be > 0");
  if (num_clients == 0) throw std::invalid_argument("partition_dirichlet: need clients");
  if (ds.size() < num_clients) {
    throw std::invalid_argument("partition_dirichlet: fewer samples than clients");
  }
  const auto by_class = detail::indices_by_class(ds);
  Rng rng(seed);

  PartitionResult out;
  for (int attempt = 0; attempt < 100; ++attempt) {
    out.shards.assign(num_clients, {});
    for (const auto& cls : by_class) {
      if (cls.empty()) continue;
      const auto p = rng.dirichlet(alpha, num_clients);
      const auto counts = detail::largest_remainder(p, cls.size());
      auto order = cls;
      rng.shuffle(order);
      std::size_t pos = 0;
      for (std::size_t j = 0; j < num_clients; ++j) {
        for (std::size_t k = 0; k < counts[j]; ++k) {
          out.shards[j].push_back(order[pos++]);
        }
      }
    }
    const bool all_nonempty =
        std::all_of(out.shards.begin(), out.shards.end(),
                    [](const auto& s) { return !s.empty(); });
    if (all_nonempty) break;
  }
  // last resort: move one sample to each still-empty client
  for (auto& shard : out.shards) {
    if (!shard.empty()) continue;
    auto donor = std::max_element(
        out.shards.begin(), out.shards.end(),
        [](const auto& a, const auto& b) { return a.size() < b.size(); });
    shard.push_back(donor->back());
    donor->pop_back();
  }
  for (auto& s : out.shards) std::sort(s.begin(), s.end());
  return out;
}

// Pathological non-IID: each client holds exactly `classes_per_client`
// distinct classes, assigned round-robin over a seed-shuffled class list;
// a class's samples are split among its holders in unbalanced Dir(0.5)
// proportions with a floor share of min(0.1, 1/holders).
inline PartitionResult partition_pathological(const Dataset& ds,
                                              std::size_t num_clients,
                                              std::size_t classes_per_client,
                                              std::uint64_t seed) {
  const std::size_t num_classes = ds.num_classes;
  if (classes_per_client == 0 || classes_per_client > num_classes) {
    throw std::invalid_argument(
        "partition_pathological: classes_per_client must be in [1, " +
        std::to_string(num_classes) + "]");
  }
  const auto by_class = detail::indices_by_class(ds);
  Rng rng(seed);

  auto class_list = rng.permutation(num_classes);
  std::vector<std::vector<std::size_t>> holders(num_classes);
  for (std::size_t i = 0; i < num_clients; ++i) {
    for (std::size_t j = 0; j < classes_per_client; ++j) {
      const std::size_t cls =
          class_list[(i * classes_per_client + j) % num_classes];
      holders[cls].push_back(i);
    }
  }

  PartitionResult out;
  out.shards.assign(num_clients, {});
  for (std::size_t cls = 0; cls < num_classes; ++cls) {
    const auto& h = holders[cls];
    if (h.empty()) continue;  // uncovered when num_clients*c < num_classes
    const auto& samples = by_class[cls];
    if (samples.size() < h.size()) {
      throw std::invalid_argument("partition_pathological: class " +
                                  std::to_string(cls) + " has " +
                                  std::to_string(h.size()) + " holders but " +
                                  std::to_string(samples.size()) + " samples");
    }
    auto p = rng.dirichlet(0.5, h.size());
    const double floor = std::min(0.1, 1.0 / static_cast<double>(h.size()));
    const double rest = 1.0 - floor * static_cast<double>(h.size());
    for (auto& v : p) v = floor + rest * v;
    auto counts = detail::largest_remainder(p, samples.size());
    // floor + rounding can still strand a holder at zero when the class is
    // tiny; shift singles from the largest holder
    for (std::size_t j = 0; j < counts.size(); ++j) {
      while (counts[j] == 0) {
        auto big = std::max_element(counts.begin(), counts.end());
        *big -= 1;
        counts[j] += 1;
      }
    }
    auto order = samples;
    rng.shuffle(order);
    std::size_t pos = 0;
    for (std::size_t j = 0; j < h.size(); ++j) {
      for (std::size_t k = 0; k < counts[j]; ++k) {
        out.shards[h[j]].push_back(order[pos++]);
      }
    }
  }
  for (auto& s : out.shards) std::sort(s.begin(), s.end());
  return out;
}

// Seed-deterministic disjoint exhaustive split; stratified per class when
// every class present has >= 2 samples and quotas fit.
inline TrainTestSplit split_train_test(const Dataset& ds,
                                       std::span<const std::size_t> shard,
                                       double train_fraction,
                                       std::uint64_t seed) {
  if (shard.size() < 2) {
    throw std::invalid_argument("split_train_test: shard too small");
  }
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("split_train_test: train_fraction must be in (0,1)");
  }
  const std::size_t n = shard.size();
  std::size_t n_train = static_cast<std::size_t>(
      std::llround(train_fraction * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
  const std::size_t n_test = n - n_train;

  Rng rng(seed);

  // group shard by class
  std::vector<std::vector<std::size_t>> groups;
  {
    std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
    for (std::size_t idx : shard) by_class[ds.labels[idx]].push_back(idx);
    for (auto& g : by_class) {
      if (!g.empty()) groups.push_back(std::move(g));
    }
  }
  const bool stratifiable =
      std::all_of(groups.begin(), groups.end(),
                  [](const auto& g) { return g.size() >= 2; }) &&
      n_test <= n - groups.size();

  TrainTestSplit split;
  if (stratifiable) {
    std::vector<double> quotas(groups.size());
    for (std::size_t g = 0; g < groups.size(); ++g) {
      quotas[g] = static_cast<double>(groups[g].size());
    }
    auto test_counts = detail::largest_remainder(quotas, n_test);
    // cap at size-1 so every class keeps a training sample
    for (std::size_t g = 0; g < groups.size(); ++g) {
      while (test_counts[g] >= groups[g].size()) {
        test_counts[g] -= 1;
        for (std::size_t o = 0; o < groups.size(); ++o) {
          if (test_counts[o] + 1 < groups[o].size()) {
            test_counts[o] += 1;
            break;
          }
        }
      }
    }
    for (std::size_t g = 0; g < groups.size(); ++g) {
      auto order = groups[g];
      rng.shuffle(order);
      for (std::size_t k = 0; k < order.size(); ++k) {
        (k < test_counts[g] ? split.test : split.train).push_back(order[k]);
      }
    }
  } else {
    std::vector<std::size_t> order(shard.begin(), shard.end());
    rng.shuffle(order);
    for (std::size_t k = 0; k < order.size(); ++k) {
      (k < n_test ? split.test : split.train).push_back(order[k]);
    }
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

// client id -> index list, for reproduction
inline nlohmann::ordered_json partition_to_json(const PartitionResult& p) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < p.shards.size(); ++i) {
    j[std::to_string(i)] = p.shards[i];
  }
  return j;
}

inline std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t partition_hash(const PartitionResult& p) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::uint64_t v) {
    std::uint8_t bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<std::uint8_t>(v >> (8 * i));
    h = fnv1a64(bytes, h);
  };
  feed(p.shards.size());
  for (const auto& s : p.shards) {
    feed(s.size());
    for (std::size_t idx : s) feed(idx);
  }
  for (const auto& sp : p.splits) {
    feed(sp.train.size());
    for (std::size_t idx : sp.train) feed(idx);
    feed(sp.test.size());
    for (std::size_t idx : sp.test) feed(idx);
  }
  return h;
}

}  // namespace fedapa
