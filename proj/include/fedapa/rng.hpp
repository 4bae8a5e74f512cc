#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace fedapa {

// Deterministic random streams. Every stream in the simulator is a SplitMix64
// chain, so results are bit-identical across platforms and standard libraries
// (std:: distributions and std::shuffle are implementation-defined and would
// break reproducibility of golden values).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1), 53-bit resolution
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform in (0, 1], safe as a log() argument
  double uniform_pos() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  double uniform_range(double lo, double hi) {
    return lo + (hi - lo) * uniform();
  }

  // unbiased integer in [0, n) via rejection
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  // standard normal via Box-Muller (cosine branch only, stateless)
  double normal() {
    const double u1 = uniform_pos();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Gamma(alpha, 1) via Marsaglia-Tsang; alpha < 1 handled by boosting.
  double gamma(double alpha) {
    if (alpha <= 0.0) throw std::invalid_argument("gamma: alpha must be > 0");
    if (alpha < 1.0) {
      const double u = uniform_pos();
      return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform_pos();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  // proportion vector over n slots ~ Dir(alpha, ..., alpha)
  std::vector<double> dirichlet(double alpha, std::size_t n) {
    std::vector<double> p(n);
    for (;;) {
      double sum = 0.0;
      for (auto& v : p) {
        v = gamma(alpha);
        sum += v;
      }
      if (sum > 0.0 && std::isfinite(sum)) {
        for (auto& v : p) v /= sum;
        return p;
      }
      // all draws underflowed (tiny alpha); redraw
    }
  }

  // Fisher-Yates; fixed algorithm, see class comment
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    shuffle(p);
    return p;
  }

 private:
  std::uint64_t state_;
};

// The documented seed-mixing function: every derived stream is
// splitmix64(master XOR salt * odd-constant), advanced once. Salts:
//   dataset        -> mix(master, kSeedDataset)
//   partition      -> mix(master, kSeedPartition)
//   split, client i-> mix(master, kSeedSplit + i)
//   init, client i -> mix(master, kSeedInit + i)
//   client i       -> mix(master, kSeedClient + i)
//   round t        -> mix(master, kSeedRound + t)
//   batches        -> mix(client_seed, round)
inline std::uint64_t mix_seed(std::uint64_t master, std::uint64_t salt) {
  Rng rng(master ^ (salt * 0xff51afd7ed558ccdULL));
  return rng.next_u64();
}

inline constexpr std::uint64_t kSeedDataset = 0x01'0000;
inline constexpr std::uint64_t kSeedPartition = 0x02'0000;
inline constexpr std::uint64_t kSeedSplit = 0x03'0000;
inline constexpr std::uint64_t kSeedInit = 0x04'0000;
inline constexpr std::uint64_t kSeedClient = 0x05'0000;
inline constexpr std::uint64_t kSeedRound = 0x06'0000;
inline constexpr std::uint64_t kSeedHead = 0x07'0000;

}  // namespace fedapa
