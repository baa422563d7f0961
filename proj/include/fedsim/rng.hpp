// SPDX-License-Identifier: Apache-2.0

#ifndef FEDSIM_RNG_HPP
#define FEDSIM_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace fedsim {

// Deterministic PRNG with explicitly coded output paths. std::* distributions
// are implementation-defined, so everything an experiment consumes is derived
// from splitmix64 right here; two runs of the same binary and seed are
// bit-identical, and so are builds across compilers.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), n >= 1. Rejection keeps it unbiased.
  uint64_t below(uint64_t n) {
    const uint64_t threshold = (0 - n) % n;
    for (;;) {
      uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Standard normal via Box-Muller. No cached spare: the draw count per call
  // is fixed, which keeps independent consumers reproducible.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Gamma(alpha), alpha > 0. Marsaglia-Tsang for alpha >= 1; the log of the
  // boosted draw is returned for alpha < 1 so that Dirichlet weights with
  // very small concentration survive in log space.
  double log_gamma_draw(double alpha) {
    if (alpha < 1.0) {
      double u = uniform();
      while (u <= 0.0) u = uniform();
      return log_gamma_draw(alpha + 1.0) + std::log(u) / alpha;
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      const double u = uniform();
      if (u <= 0.0) continue;
      if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
        return std::log(d) + std::log(v);
      }
    }
  }

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct values from [0, n), returned sorted ascending.
  std::vector<uint32_t> sample_without_replacement(uint32_t n, uint32_t k);

 private:
  uint64_t state_;
};

inline std::vector<uint32_t> Rng::sample_without_replacement(uint32_t n,
                                                             uint32_t k) {
  // Floyd's algorithm; result re-sorted for the callers' id-ordered contract.
  std::vector<uint32_t> out;
  out.reserve(k);
  for (uint32_t j = n - k; j < n; ++j) {
    const uint32_t t = static_cast<uint32_t>(below(j + 1));
    bool seen = false;
    for (uint32_t v : out) {
      if (v == t) {
        seen = true;
        break;
      }
    }
    out.push_back(seen ? j : t);
  }
  for (size_t i = 1; i < out.size(); ++i) {
    uint32_t key = out[i];
    size_t j = i;
    while (j > 0 && out[j - 1] > key) {
      out[j] = out[j - 1];
      --j;
    }
    out[j] = key;
  }
  return out;
}

// Stream derivation: decorrelated child seeds for (seed, round, lane) so that
// per-client work is order- and thread-count-independent.
inline uint64_t mix_seed(uint64_t a, uint64_t b = 0, uint64_t c = 0) {
  auto mix = [](uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  uint64_t h = mix(a + 0x9e3779b97f4a7c15ULL);
  h = mix(h ^ (b + 0x9e3779b97f4a7c15ULL));
  h = mix(h ^ (c + 0x9e3779b97f4a7c15ULL));
  return h;
}

}  // namespace fedsim

#endif  // FEDSIM_RNG_HPP
