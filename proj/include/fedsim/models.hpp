// SPDX-License-Identifier: Apache-2.0

#ifndef FEDSIM_MODELS_HPP
#define FEDSIM_MODELS_HPP

#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fedsim/errors.hpp"
#include "fedsim/linalg.hpp"

namespace fedsim {

// Row-major feature matrix plus integer class labels.
struct Dataset {
  size_t n = 0;
  size_t dim = 0;
  std::vector<double> x;  // n * dim
  std::vector<int> y;     // n

  std::span<const double> row(size_t i) const {
    return std::span<const double>(x.data() + i * dim, dim);
  }
};

// Per-client strongly convex objective 0.5 (theta-c)' A (theta-c).
struct QuadraticProblem {
  Matrix a;            // symmetric positive definite
  ParamVector center;  // c_i
};

enum class ModelKind { quadratic, softmax_regression, mlp };

struct ModelSpec {
  ModelKind kind = ModelKind::softmax_regression;
  int input_dim = 0;
  int n_classes = 0;
  int hidden = 0;  // mlp only
  double weight_decay = 0.0;

  size_t param_dim() const {
    switch (kind) {
      case ModelKind::quadratic:
        return static_cast<size_t>(input_dim);
      case ModelKind::softmax_regression:
        return static_cast<size_t>(n_classes) * (input_dim + 1);
      case ModelKind::mlp:
        return static_cast<size_t>(hidden) * (input_dim + 1) +
               static_cast<size_t>(n_classes) * (hidden + 1);
    }
    return 0;
  }
};

// One local objective evaluation target: either a mini-batch of a dataset or
// a client's quadratic problem (which ignores batching).
struct Batch {
  const Dataset* data = nullptr;
  std::span<const uint32_t> idx;
  const QuadraticProblem* quad = nullptr;

  static Batch of(const Dataset& d, std::span<const uint32_t> indices) {
    Batch b;
    b.data = &d;
    b.idx = indices;
    return b;
  }
  static Batch of(const QuadraticProblem& q) {
    Batch b;
    b.quad = &q;
    return b;
  }
  size_t size() const { return quad ? 1 : idx.size(); }
};

namespace detail {

inline void softmax_inplace(std::vector<double>& z) {
  double m = z[0];
  for (double v : z) m = std::max(m, v);
  double s = 0.0;
  for (double& v : z) {
    v = std::exp(v - m);
    s += v;
  }
  for (double& v : z) v /= s;
}

// loss/grad of mean softmax cross-entropy for the linear model.
// Layout: weights row-major [C x D], then C biases.
inline double softmax_loss_grad(const ModelSpec& spec, const ParamVector& w,
                                const Batch& batch, ParamVector* grad) {
  const int C = spec.n_classes;
  const int D = spec.input_dim;
  const double invn = 1.0 / static_cast<double>(batch.idx.size());
  std::vector<double> logits(C);
  double loss = 0.0;
  for (uint32_t i : batch.idx) {
    auto xi = batch.data->row(i);
    for (int c = 0; c < C; ++c) {
      double s = w[static_cast<size_t>(C) * D + c];  // bias
      const double* wr = w.data() + static_cast<size_t>(c) * D;
      for (int j = 0; j < D; ++j) s += wr[j] * xi[j];
      logits[c] = s;
    }
    softmax_inplace(logits);
    const int yi = batch.data->y[i];
    loss -= std::log(std::max(logits[yi], 1e-300));
    if (grad) {
      for (int c = 0; c < C; ++c) {
        const double g = (logits[c] - (c == yi ? 1.0 : 0.0)) * invn;
        double* gr = grad->data() + static_cast<size_t>(c) * D;
        for (int j = 0; j < D; ++j) gr[j] += g * xi[j];
        (*grad)[static_cast<size_t>(C) * D + c] += g;
      }
    }
  }
  return loss * invn;
}

// Two fully-connected layers: tanh hidden activation, softmax cross-entropy
// output. Layout: W1 [H x D], b1 [H], W2 [C x H], b2 [C].
inline double mlp_loss_grad(const ModelSpec& spec, const ParamVector& w,
                            const Batch& batch, ParamVector* grad) {
  const int D = spec.input_dim;
  const int H = spec.hidden;
  const int C = spec.n_classes;
  const size_t o_w1 = 0;
  const size_t o_b1 = static_cast<size_t>(H) * D;
  const size_t o_w2 = o_b1 + H;
  const size_t o_b2 = o_w2 + static_cast<size_t>(C) * H;
  const double invn = 1.0 / static_cast<double>(batch.idx.size());
  std::vector<double> a1(H), z2(C), dz1(H);
  double loss = 0.0;
  for (uint32_t i : batch.idx) {
    auto xi = batch.data->row(i);
    for (int hN = 0; hN < H; ++hN) {
      double s = w[o_b1 + hN];
      const double* wr = w.data() + o_w1 + static_cast<size_t>(hN) * D;
      for (int j = 0; j < D; ++j) s += wr[j] * xi[j];
      a1[hN] = std::tanh(s);
    }
    for (int c = 0; c < C; ++c) {
      double s = w[o_b2 + c];
      const double* wr = w.data() + o_w2 + static_cast<size_t>(c) * H;
      for (int hN = 0; hN < H; ++hN) s += wr[hN] * a1[hN];
      z2[c] = s;
    }
    softmax_inplace(z2);
    const int yi = batch.data->y[i];
    loss -= std::log(std::max(z2[yi], 1e-300));
    if (grad) {
      for (int hN = 0; hN < H; ++hN) dz1[hN] = 0.0;
      for (int c = 0; c < C; ++c) {
        const double dz2 = (z2[c] - (c == yi ? 1.0 : 0.0)) * invn;
        double* gr = grad->data() + o_w2 + static_cast<size_t>(c) * H;
        const double* wr = w.data() + o_w2 + static_cast<size_t>(c) * H;
        for (int hN = 0; hN < H; ++hN) {
          gr[hN] += dz2 * a1[hN];
          dz1[hN] += dz2 * wr[hN];
        }
        (*grad)[o_b2 + c] += dz2;
      }
      for (int hN = 0; hN < H; ++hN) {
        const double d = dz1[hN] * (1.0 - a1[hN] * a1[hN]);
        double* gr = grad->data() + o_w1 + static_cast<size_t>(hN) * D;
        for (int j = 0; j < D; ++j) gr[j] += d * xi[j];
        (*grad)[o_b1 + hN] += d;
      }
    }
  }
  return loss * invn;
}

inline double quadratic_loss_grad(const QuadraticProblem& q,
                                  const ParamVector& theta, ParamVector* grad) {
  ParamVector d = sub(theta, q.center);
  ParamVector ad = matvec(q.a, d);
  if (grad) {
    for (size_t k = 0; k < ad.size(); ++k) (*grad)[k] += ad[k];
  }
  return 0.5 * dot(d, ad);
}

}  // namespace detail

// Training objective: data loss plus (weight_decay/2)*||params||^2, with the
// exact analytic gradient. The decay term is part of the loss so the
// finite-difference oracle covers it.
inline std::pair<double, ParamVector> loss_and_grad(const ModelSpec& spec,
                                                    const ParamVector& params,
                                                    const Batch& batch) {
  if (params.size() != spec.param_dim()) {
    throw dimension_error("loss_and_grad: params dim " +
                          std::to_string(params.size()) + " != spec dim " +
                          std::to_string(spec.param_dim()));
  }
  if (!batch.quad && (batch.data == nullptr || batch.idx.empty())) {
    throw data_error("loss_and_grad: empty batch");
  }
  ParamVector grad(params.size(), 0.0);
  double loss = 0.0;
  switch (spec.kind) {
    case ModelKind::quadratic:
      loss = detail::quadratic_loss_grad(*batch.quad, params, &grad);
      break;
    case ModelKind::softmax_regression:
      loss = detail::softmax_loss_grad(spec, params, batch, &grad);
      break;
    case ModelKind::mlp:
      loss = detail::mlp_loss_grad(spec, params, batch, &grad);
      break;
  }
  if (spec.weight_decay != 0.0) {
    loss += 0.5 * spec.weight_decay * dot(params, params);
    for (size_t k = 0; k < grad.size(); ++k) {
      grad[k] += spec.weight_decay * params[k];
    }
  }
  return {loss, grad};
}

inline double loss_only(const ModelSpec& spec, const ParamVector& params,
                        const Batch& batch) {
  if (params.size() != spec.param_dim()) {
    throw dimension_error("loss_only: params dim mismatch");
  }
  double loss = 0.0;
  switch (spec.kind) {
    case ModelKind::quadratic:
      loss = detail::quadratic_loss_grad(*batch.quad, params, nullptr);
      break;
    case ModelKind::softmax_regression:
      loss = detail::softmax_loss_grad(spec, params, batch, nullptr);
      break;
    case ModelKind::mlp:
      loss = detail::mlp_loss_grad(spec, params, batch, nullptr);
      break;
  }
  if (spec.weight_decay != 0.0) {
    loss += 0.5 * spec.weight_decay * dot(params, params);
  }
  return loss;
}

// Central-difference gradient oracle, componentwise
// (L(theta + eps e_k) - L(theta - eps e_k)) / (2 eps).
inline ParamVector finite_diff_grad(const ModelSpec& spec,
                                    const ParamVector& params,
                                    const Batch& batch, double eps) {
  if (eps <= 0.0) throw data_error("finite_diff_grad: eps must be > 0");
  ParamVector g(params.size(), 0.0);
  ParamVector p = params;
  for (size_t k = 0; k < params.size(); ++k) {
    const double save = p[k];
    p[k] = save + eps;
    const double lp = loss_only(spec, p, batch);
    p[k] = save - eps;
    const double lm = loss_only(spec, p, batch);
    p[k] = save;
    g[k] = (lp - lm) / (2.0 * eps);
  }
  return g;
}

// Mean data loss (no decay term) and top-1 accuracy over a full dataset.
// Quadratic objectives report accuracy 0 by convention.
inline std::pair<double, double> evaluate(const ModelSpec& spec,
                                          const ParamVector& params,
                                          const Batch& batch) {
  if (spec.kind == ModelKind::quadratic) {
    ParamVector d = sub(params, batch.quad->center);
    return {0.5 * dot(d, matvec(batch.quad->a, d)), 0.0};
  }
  if (batch.data == nullptr || batch.idx.empty()) {
    throw data_error("evaluate: empty dataset");
  }
  ModelSpec plain = spec;
  plain.weight_decay = 0.0;
  const double loss = loss_only(plain, params, batch);
  // top-1 accuracy
  const int C = spec.n_classes;
  size_t hits = 0;
  std::vector<double> logits(C);
  for (uint32_t i : batch.idx) {
    auto xi = batch.data->row(i);
    if (spec.kind == ModelKind::softmax_regression) {
      const int D = spec.input_dim;
      for (int c = 0; c < C; ++c) {
        double s = params[static_cast<size_t>(C) * D + c];
        const double* wr = params.data() + static_cast<size_t>(c) * D;
        for (int j = 0; j < D; ++j) s += wr[j] * xi[j];
        logits[c] = s;
      }
    } else {
      const int D = spec.input_dim;
      const int H = spec.hidden;
      const size_t o_b1 = static_cast<size_t>(H) * D;
      const size_t o_w2 = o_b1 + H;
      const size_t o_b2 = o_w2 + static_cast<size_t>(C) * H;
      std::vector<double> a1(H);
      for (int hN = 0; hN < H; ++hN) {
        double s = params[o_b1 + hN];
        const double* wr = params.data() + static_cast<size_t>(hN) * D;
        for (int j = 0; j < D; ++j) s += wr[j] * xi[j];
        a1[hN] = std::tanh(s);
      }
      for (int c = 0; c < C; ++c) {
        double s = params[o_b2 + c];
        const double* wr = params.data() + o_w2 + static_cast<size_t>(c) * H;
        for (int hN = 0; hN < H; ++hN) s += wr[hN] * a1[hN];
        logits[c] = s;
      }
    }
    int best = 0;
    for (int c = 1; c < C; ++c) {
      if (logits[c] > logits[best]) best = c;
    }
    if (best == batch.data->y[i]) ++hits;
  }
  return {loss, static_cast<double>(hits) / static_cast<double>(batch.idx.size())};
}

// Loads the delimited text format: one example per line, integer label first,
// then the feature values, whitespace-separated. '#' starts a comment line.
inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open dataset file: " + path);
  Dataset d;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    int label;
    if (!(ls >> label)) throw data_error("bad label in: " + line);
    std::vector<double> feats;
    double v;
    while (ls >> v) feats.push_back(v);
    if (d.n == 0) {
      d.dim = feats.size();
    } else if (feats.size() != d.dim) {
      throw data_error("inconsistent feature count in: " + line);
    }
    d.y.push_back(label);
    d.x.insert(d.x.end(), feats.begin(), feats.end());
    ++d.n;
  }
  if (d.n == 0) throw data_error("empty dataset: " + path);
  return d;
}

inline std::vector<uint32_t> all_indices(const Dataset& d) {
  std::vector<uint32_t> idx(d.n);
  for (size_t i = 0; i < d.n; ++i) idx[i] = static_cast<uint32_t>(i);
  return idx;
}

}  // namespace fedsim

#endif  // FEDSIM_MODELS_HPP
