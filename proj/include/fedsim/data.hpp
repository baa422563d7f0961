// SPDX-License-Identifier: Apache-2.0

#ifndef FEDSIM_DATA_HPP
#define FEDSIM_DATA_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fedsim/errors.hpp"
#include "fedsim/linalg.hpp"
#include "fedsim/models.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

enum class SkewMode { iid, dirichlet };
enum class BalanceMode { balanced, lognormal };

struct HeterogeneityConfig {
  SkewMode skew = SkewMode::iid;
  double alpha = 0.3;  // Dirichlet concentration, > 0
  BalanceMode balance = BalanceMode::balanced;
  double sigma = 0.3;  // log-normal concentration, >= 0
};

// Disjoint per-client example-index lists. The last `n_validation` clients
// are the held-out validation clients.
struct Partition {
  std::vector<std::vector<uint32_t>> clients;
  size_t n_validation = 0;

  size_t n_train() const { return clients.size() - n_validation; }

  bool is_validation(size_t client) const {
    return client >= n_train();
  }
};

namespace detail {

// Largest-remainder apportionment of `total` units over non-negative weights.
// Ties break by index, exhausts the supply exactly.
inline std::vector<size_t> largest_remainder(const std::vector<double>& w,
                                             size_t total) {
  const size_t n = w.size();
  double sum = 0.0;
  for (double v : w) sum += v;
  std::vector<size_t> base(n, 0);
  std::vector<std::pair<double, size_t>> rem(n);
  size_t assigned = 0;
  for (size_t i = 0; i < n; ++i) {
    const double share =
        sum > 0.0 ? w[i] / sum * static_cast<double>(total)
                  : static_cast<double>(total) / static_cast<double>(n);
    base[i] = static_cast<size_t>(std::floor(share));
    if (base[i] > total) base[i] = total;
    rem[i] = {share - std::floor(share), i};
    assigned += base[i];
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
    return a.first > b.first;
  });
  size_t left = total - assigned;
  for (size_t j = 0; left > 0; j = (j + 1) % n, --left) {
    base[rem[j].second] += 1;
  }
  return base;
}

}  // namespace detail

// Positive integer client sizes summing to `total`, drawn log-normally.
// sigma = 0 degenerates to an equal split with the remainder spread over the
// first clients.
inline std::vector<size_t> lognormal_sizes(size_t n_clients, double sigma,
                                           size_t total, uint64_t rng_seed) {
  if (sigma < 0.0) throw data_error("lognormal_sizes: sigma must be >= 0");
  if (total < n_clients) {
    throw data_error("lognormal_sizes: total < n_clients");
  }
  Rng rng(mix_seed(rng_seed, 0x5e5eULL));
  std::vector<double> w(n_clients, 1.0);
  if (sigma > 0.0) {
    for (double& v : w) v = std::exp(sigma * rng.normal());
  }
  std::vector<size_t> sizes = detail::largest_remainder(w, total);
  // every client gets at least one example
  for (size_t i = 0; i < n_clients; ++i) {
    while (sizes[i] == 0) {
      const size_t donor = static_cast<size_t>(
          std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
      if (sizes[donor] <= 1) throw data_error("lognormal_sizes: too few examples");
      --sizes[donor];
      ++sizes[i];
    }
  }
  return sizes;
}

// Dirichlet label-skew partition. Per-client class-proportion rows are drawn
// from Dirichlet(alpha * 1); examples are then apportioned class by class
// with largest remainders against the remaining supply, which exhausts every
// class exactly and keeps the result a pure function of the seed.
inline Partition partition_examples(const std::vector<int>& labels,
                                    size_t n_clients,
                                    const HeterogeneityConfig& het,
                                    uint64_t rng_seed,
                                    double validation_fraction = 0.1) {
  if (n_clients == 0) throw data_error("partition: n_clients must be >= 1");
  if (labels.size() < n_clients) {
    throw data_error("partition: more clients than examples");
  }
  if (het.skew == SkewMode::dirichlet && het.alpha <= 0.0) {
    throw data_error("partition: alpha must be > 0");
  }
  int n_classes = 0;
  for (int y : labels) n_classes = std::max(n_classes, y + 1);

  Rng rng(mix_seed(rng_seed, 0xd1c4ULL));
  std::vector<size_t> sizes =
      het.balance == BalanceMode::lognormal
          ? lognormal_sizes(n_clients, het.sigma, labels.size(), rng_seed)
          : detail::largest_remainder(std::vector<double>(n_clients, 1.0),
                                      labels.size());

  // per-class supply, shuffled so slices are label-exchangeable
  std::vector<std::vector<uint32_t>> supply(n_classes);
  for (size_t i = 0; i < labels.size(); ++i) {
    supply[labels[i]].push_back(static_cast<uint32_t>(i));
  }
  for (auto& s : supply) rng.shuffle(s);

  // target class mix per client
  std::vector<std::vector<double>> mix(n_clients,
                                       std::vector<double>(n_classes, 0.0));
  if (het.skew == SkewMode::iid) {
    for (auto& row : mix) {
      for (double& v : row) v = 1.0 / n_classes;
    }
  } else {
    for (auto& row : mix) {
      // log-space Dirichlet draw: robust down to alpha ~ 1e-3
      std::vector<double> lg(n_classes);
      double m = -1e308;
      for (int k = 0; k < n_classes; ++k) {
        lg[k] = rng.log_gamma_draw(het.alpha);
        m = std::max(m, lg[k]);
      }
      double s = 0.0;
      for (int k = 0; k < n_classes; ++k) {
        row[k] = std::exp(lg[k] - m);
        s += row[k];
      }
      for (double& v : row) v /= s;
    }
  }

  Partition part;
  part.clients.assign(n_clients, {});
  for (int k = 0; k < n_classes; ++k) {
    std::vector<double> want(n_clients);
    for (size_t i = 0; i < n_clients; ++i) {
      want[i] = static_cast<double>(sizes[i]) * mix[i][k];
    }
    std::vector<size_t> take = detail::largest_remainder(want, supply[k].size());
    size_t pos = 0;
    for (size_t i = 0; i < n_clients; ++i) {
      for (size_t j = 0; j < take[i]; ++j) {
        part.clients[i].push_back(supply[k][pos++]);
      }
    }
  }
  part.n_validation = static_cast<size_t>(
      std::floor(static_cast<double>(n_clients) * validation_fraction));

  // train clients must be non-empty; steal from the largest client if needed
  for (size_t i = 0; i < part.n_train(); ++i) {
    while (part.clients[i].empty()) {
      size_t donor = 0;
      for (size_t j = 1; j < n_clients; ++j) {
        if (part.clients[j].size() > part.clients[donor].size()) donor = j;
      }
      if (part.clients[donor].size() <= 1) {
        throw data_error("partition: cannot make all train clients non-empty");
      }
      part.clients[i].push_back(part.clients[donor].back());
      part.clients[donor].pop_back();
    }
  }
  return part;
}

inline Partition dirichlet_partition(const std::vector<int>& labels,
                                     size_t n_clients, double alpha,
                                     uint64_t rng_seed) {
  HeterogeneityConfig het;
  het.skew = SkewMode::dirichlet;
  het.alpha = alpha;
  return partition_examples(labels, n_clients, het, rng_seed);
}

// Reproducibility manifest: one line per client, "id: idx idx ...".
inline void write_manifest(std::ostream& os, const Partition& p) {
  os << "# clients=" << p.clients.size() << " validation=" << p.n_validation
     << "\n";
  for (size_t i = 0; i < p.clients.size(); ++i) {
    os << i << ":";
    for (uint32_t v : p.clients[i]) os << ' ' << v;
    os << "\n";
  }
}

inline Partition read_manifest(std::istream& is) {
  Partition p;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto vpos = line.find("validation=");
      if (vpos != std::string::npos) {
        p.n_validation = std::stoul(line.substr(vpos + 11));
      }
      continue;
    }
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw data_error("bad manifest line: " + line);
    std::istringstream ls(line.substr(colon + 1));
    std::vector<uint32_t> idx;
    uint32_t v;
    while (ls >> v) idx.push_back(v);
    p.clients.push_back(std::move(idx));
  }
  return p;
}

// Exact minimizer of sum_i 0.5 (theta-c_i)' A_i (theta-c_i): solves
// (sum A_i) theta = sum A_i c_i.
inline ParamVector quadratic_oracle_optimum(
    const std::vector<QuadraticProblem>& probs) {
  if (probs.empty()) throw data_error("quadratic_oracle_optimum: no problems");
  const size_t dim = probs.front().center.size();
  Matrix asum(dim, dim);
  ParamVector rhs(dim, 0.0);
  for (const auto& p : probs) {
    asum = matadd(asum, p.a);
    ParamVector ac = matvec(p.a, p.center);
    for (size_t i = 0; i < dim; ++i) rhs[i] += ac[i];
  }
  return solve(asum, rhs);
}

// Random SPD curvatures with eigenvalues in [curv_lo, curv_hi] and centers
// N(0, spread^2 I); also returns the exact minimizer of the summed objective.
inline std::pair<std::vector<QuadraticProblem>, ParamVector>
make_quadratic_federation(size_t n_clients, size_t dim, double spread,
                          double curv_lo, double curv_hi, uint64_t rng_seed) {
  if (curv_lo <= 0.0 || curv_hi < curv_lo) {
    throw data_error("make_quadratic_federation: bad curvature range");
  }
  Rng rng(mix_seed(rng_seed, 0x9a2dULL));
  std::vector<QuadraticProblem> probs;
  probs.reserve(n_clients);
  for (size_t c = 0; c < n_clients; ++c) {
    // random orthogonal basis via modified Gram-Schmidt on gaussian columns
    Matrix q(dim, dim);
    for (size_t col = 0; col < dim; ++col) {
      ParamVector v(dim);
      for (;;) {
        for (size_t i = 0; i < dim; ++i) v[i] = rng.normal();
        for (size_t prev = 0; prev < col; ++prev) {
          double proj = 0.0;
          for (size_t i = 0; i < dim; ++i) proj += v[i] * q.at(i, prev);
          for (size_t i = 0; i < dim; ++i) v[i] -= proj * q.at(i, prev);
        }
        const double nv = norm2(v);
        if (nv > 1e-8) {
          for (size_t i = 0; i < dim; ++i) q.at(i, col) = v[i] / nv;
          break;
        }
      }
    }
    std::vector<double> lam(dim);
    for (double& l : lam) l = rng.uniform(curv_lo, curv_hi);
    Matrix a(dim, dim);
    for (size_t i = 0; i < dim; ++i) {
      for (size_t j = 0; j <= i; ++j) {
        double s = 0.0;
        for (size_t k = 0; k < dim; ++k) s += q.at(i, k) * lam[k] * q.at(j, k);
        a.at(i, j) = s;
        a.at(j, i) = s;
      }
    }
    ParamVector center(dim);
    for (double& x : center) x = rng.normal(0.0, spread);
    probs.push_back({std::move(a), std::move(center)});
  }
  ParamVector opt = quadratic_oracle_optimum(probs);
  return {std::move(probs), std::move(opt)};
}

// Gaussian class clusters: unit-normalized random mean directions scaled by
// `class_separation`, unit within-class noise.
inline Dataset make_synthetic_classification(int n_classes, int dim,
                                             size_t n_examples,
                                             double class_separation,
                                             uint64_t rng_seed) {
  if (n_classes < 2) throw data_error("make_synthetic_classification: n_classes >= 2");
  Rng rng(mix_seed(rng_seed, 0xc1a5ULL));
  std::vector<std::vector<double>> means(n_classes, std::vector<double>(dim));
  for (auto& m : means) {
    double nrm = 0.0;
    for (double& v : m) {
      v = rng.normal();
      nrm += v * v;
    }
    nrm = std::sqrt(nrm);
    for (double& v : m) v = v / nrm * class_separation;
  }
  Dataset d;
  d.n = n_examples;
  d.dim = static_cast<size_t>(dim);
  d.x.resize(n_examples * dim);
  d.y.resize(n_examples);
  for (size_t i = 0; i < n_examples; ++i) {
    const int yi = static_cast<int>(rng.below(n_classes));
    d.y[i] = yi;
    for (int j = 0; j < dim; ++j) {
      d.x[i * dim + j] = means[yi][j] + rng.normal();
    }
  }
  return d;
}

}  // namespace fedsim

#endif  // FEDSIM_DATA_HPP
