// SPDX-License-Identifier: Apache-2.0

#ifndef FEDSIM_FEDCORE_HPP
#define FEDSIM_FEDCORE_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fedsim/errors.hpp"
#include "fedsim/linalg.hpp"
#include "fedsim/models.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

enum class AlgorithmKind { fedavg, scaffold_m, feddyn, adabest };

inline const char* to_string(AlgorithmKind k) {
  switch (k) {
    case AlgorithmKind::fedavg: return "fedavg";
    case AlgorithmKind::scaffold_m: return "scaffoldm";
    case AlgorithmKind::feddyn: return "feddyn";
    case AlgorithmKind::adabest: return "adabest";
  }
  return "?";
}

// Which update rule is active plus its two scalars. FedAvg ignores both;
// ScaffoldM ignores beta; FedDyn ignores beta.
struct AlgorithmSpec {
  AlgorithmKind kind = AlgorithmKind::fedavg;
  double mu = 0.0;    // local regularization factor, >= 0
  double beta = 0.0;  // retention factor in [0, 1]
};

// Persistent per-client state: the local gradient estimate and the last
// round this client participated in (0 before first participation, h zero).
struct ClientState {
  int id = 0;
  ParamVector h;
  long t_last = 0;
};

// Server-side state across rounds.
struct ServerState {
  ParamVector theta;           // cloud model
  ParamVector theta_bar_prev;  // previous aggregate, == theta at round 0
  ParamVector h;               // oracle-gradient estimate, zero at round 0
  long round = 0;
  ParamVector inference_sum;   // running sum of absorbed client models
  long inference_count = 0;

  static ServerState init(ParamVector theta0) {
    ServerState s;
    s.theta_bar_prev = theta0;
    s.h = zeros(theta0.size());
    s.inference_sum = zeros(theta0.size());
    s.theta = std::move(theta0);
    return s;
  }
};

struct LocalRunConfig {
  double eta = 0.1;
  int epochs = 5;
  int batch_size = 45;
};

// Round-level quantities the SCAFFOLD/m recursions need. AdaBest updates must
// not read n_registered (no prior knowledge of the client-set size).
struct RoundSizes {
  long n_registered = 0;    // |S^t|
  long n_participants = 0;  // |P^t|
  long k_total_steps = 0;   // epochs * steps_per_epoch
  double eta = 0.0;
};

// One corrected mini-batch direction.
//   fedavg:   raw
//   adabest:  raw - mu * h_i                (h_i stored with the mu-scaled
//                                            accumulation, see update below)
//   feddyn:   raw - h_i - mu (theta_round_start - theta_current)
//   scaffoldm: raw - h_i + h
inline ParamVector local_gradient(const AlgorithmSpec& spec,
                                  const ParamVector& raw_grad,
                                  const ParamVector& h_i, const ParamVector& h,
                                  const ParamVector& theta_round_start,
                                  const ParamVector& theta_current) {
  switch (spec.kind) {
    case AlgorithmKind::fedavg:
      return raw_grad;
    case AlgorithmKind::adabest:
      return axpy(-spec.mu, h_i, raw_grad);
    case AlgorithmKind::feddyn: {
      ParamVector g = sub(raw_grad, h_i);
      require_same_dim(theta_round_start, theta_current, "local_gradient");
      for (size_t k = 0; k < g.size(); ++k) {
        g[k] -= spec.mu * (theta_round_start[k] - theta_current[k]);
      }
      return g;
    }
    case AlgorithmKind::scaffold_m:
      return add(sub(raw_grad, h_i), h);
  }
  return raw_grad;
}

struct LocalRunResult {
  ParamVector theta_out;
  ParamVector pseudo_gradient;  // theta_in - theta_out
  double mean_batch_loss = 0.0;
};

// K_epochs passes of mini-batch SGD with the algorithm's corrected direction.
// `data_idx` is the client's own example-index list (ignored for quadratic
// tasks, which take one full-batch step per epoch). A short final batch is
// topped up by bootstrap resampling from the client's full local set.
inline LocalRunResult run_local(const AlgorithmSpec& spec,
                                const ClientState& client,
                                const ParamVector& theta_in,
                                const LocalRunConfig& cfg,
                                const ModelSpec& model,
                                const Dataset* data,
                                const std::vector<uint32_t>& data_idx,
                                const QuadraticProblem* quad,
                                const ParamVector& server_h, Rng& rng,
                                long round) {
  require_same_dim(theta_in, client.h, "run_local");
  ParamVector theta = theta_in;
  double loss_sum = 0.0;
  long batches = 0;

  if (quad != nullptr) {
    const Batch batch = Batch::of(*quad);
    for (int e = 0; e < cfg.epochs; ++e) {
      auto [loss, raw] = loss_and_grad(model, theta, batch);
      ParamVector g =
          local_gradient(spec, raw, client.h, server_h, theta_in, theta);
      theta = axpy(-cfg.eta, g, theta);
      loss_sum += loss;
      ++batches;
    }
  } else {
    if (data == nullptr || data_idx.empty()) {
      throw data_error("run_local: client " + std::to_string(client.id) +
                       " has no data");
    }
    const size_t n_i = data_idx.size();
    const size_t bs = static_cast<size_t>(cfg.batch_size);
    const size_t steps = (n_i + bs - 1) / bs;
    std::vector<uint32_t> perm = data_idx;
    std::vector<uint32_t> batch_idx;
    for (int e = 0; e < cfg.epochs; ++e) {
      rng.shuffle(perm);
      for (size_t s = 0; s < steps; ++s) {
        const size_t lo = s * bs;
        const size_t hi = std::min(lo + bs, n_i);
        batch_idx.assign(perm.begin() + lo, perm.begin() + hi);
        while (batch_idx.size() < bs && n_i > 0) {
          batch_idx.push_back(data_idx[rng.below(n_i)]);
        }
        auto [loss, raw] =
            loss_and_grad(model, theta, Batch::of(*data, batch_idx));
        ParamVector g =
            local_gradient(spec, raw, client.h, server_h, theta_in, theta);
        theta = axpy(-cfg.eta, g, theta);
        loss_sum += loss;
        ++batches;
      }
      if (!all_finite(theta)) {
        throw numeric_error(round, "client " + std::to_string(client.id) +
                                       " diverged in epoch " +
                                       std::to_string(e + 1));
      }
    }
  }
  if (!all_finite(theta)) {
    throw numeric_error(round,
                        "client " + std::to_string(client.id) + " diverged");
  }
  LocalRunResult r;
  r.pseudo_gradient = sub(theta_in, theta);
  r.theta_out = std::move(theta);
  r.mean_batch_loss = batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0;
  return r;
}

// Local gradient-estimate update, applied at the round barrier.
//   adabest:   (1/(t - t_last)) h_i + mu g_i
//   feddyn:    h_i + mu g_i
//   scaffoldm: ((|S|-1)/|S|) h_i + (|P|/(K eta |S|)) (theta_prev - theta_bar)
//   fedavg:    zeros
// `global_step` carries theta_prev - theta_bar for the scaffoldm rule.
inline ParamVector update_client_estimate(const AlgorithmSpec& spec,
                                          const ParamVector& h_i_old,
                                          const ParamVector& g_i, long t,
                                          long t_last,
                                          const RoundSizes& sizes,
                                          const ParamVector& global_step) {
  if (t <= t_last) {
    throw invariant_error("update_client_estimate: t must exceed t_last");
  }
  switch (spec.kind) {
    case AlgorithmKind::fedavg:
      return zeros(h_i_old.size());
    case AlgorithmKind::adabest: {
      const double keep = 1.0 / static_cast<double>(t - t_last);
      return axpy(spec.mu, g_i, scale(keep, h_i_old));
    }
    case AlgorithmKind::feddyn:
      return axpy(spec.mu, g_i, h_i_old);
    case AlgorithmKind::scaffold_m: {
      const double ns = static_cast<double>(sizes.n_registered);
      const double keep = (ns - 1.0) / ns;
      if (sizes.eta == 0.0) {
        // zero step size leaves no displacement to rescale
        return scale(keep, h_i_old);
      }
      const double gain = static_cast<double>(sizes.n_participants) /
                          (static_cast<double>(sizes.k_total_steps) *
                           sizes.eta * ns);
      return axpy(gain, global_step, scale(keep, h_i_old));
    }
  }
  return h_i_old;
}

// Uniform mean of the participating client models (callers pass them sorted
// by client id).
inline ParamVector aggregate(const std::vector<ParamVector>& client_models) {
  return mean_of(client_models);
}

// Aggregation-identity guard: theta_bar must equal theta_prev - gbar up to
// summation reassociation. Scale-relative so large-norm testbeds don't trip.
inline void check_aggregate_identity(const ParamVector& theta_prev,
                                     const ParamVector& theta_bar,
                                     const ParamVector& g_bar, long round) {
  const double tol =
      1e-12 * std::max(1.0, std::max(max_abs(theta_prev), max_abs(theta_bar)));
  for (size_t k = 0; k < theta_bar.size(); ++k) {
    const double lhs = theta_bar[k];
    const double rhs = theta_prev[k] - g_bar[k];
    if (std::abs(lhs - rhs) > tol) {
      throw invariant_error(
          "aggregate identity violated at round " + std::to_string(round) +
          ", component " + std::to_string(k));
    }
  }
}

// Oracle-gradient estimate update.
//   adabest:   beta (theta_bar_prev - theta_bar)
//   feddyn:    h_prev + (|P|/|S|) (theta_prev - theta_bar)
//   scaffoldm: ((|S|-1)/|S|) h_prev + (|P|/(K eta |S|)) (theta_prev - theta_bar)
//   fedavg:    zeros
inline ParamVector update_server_estimate(const AlgorithmSpec& spec,
                                          const ParamVector& h_prev,
                                          const ParamVector& theta_prev,
                                          const ParamVector& theta_bar_prev,
                                          const ParamVector& theta_bar,
                                          const RoundSizes& sizes) {
  require_same_dim(h_prev, theta_bar, "update_server_estimate");
  if (sizes.n_participants <= 0) {
    throw invariant_error("update_server_estimate: empty participant set");
  }
  switch (spec.kind) {
    case AlgorithmKind::fedavg:
      return zeros(h_prev.size());
    case AlgorithmKind::adabest:
      return scale(spec.beta, sub(theta_bar_prev, theta_bar));
    case AlgorithmKind::feddyn: {
      const double gain = static_cast<double>(sizes.n_participants) /
                          static_cast<double>(sizes.n_registered);
      return axpy(gain, sub(theta_prev, theta_bar), h_prev);
    }
    case AlgorithmKind::scaffold_m: {
      const double ns = static_cast<double>(sizes.n_registered);
      const double keep = (ns - 1.0) / ns;
      if (sizes.eta == 0.0) {
        return scale(keep, h_prev);
      }
      const double gain = static_cast<double>(sizes.n_participants) /
                          (static_cast<double>(sizes.k_total_steps) *
                           sizes.eta * ns);
      return axpy(gain, sub(theta_prev, theta_bar), scale(keep, h_prev));
    }
  }
  return h_prev;
}

// Cloud model update: theta_bar - h for AdaBest/FedDyn, theta_bar for the
// others.
inline ParamVector cloud_update(const AlgorithmSpec& spec,
                                const ParamVector& theta_bar,
                                const ParamVector& h) {
  switch (spec.kind) {
    case AlgorithmKind::fedavg:
    case AlgorithmKind::scaffold_m:
      return theta_bar;
    case AlgorithmKind::feddyn:
    case AlgorithmKind::adabest:
      return sub(theta_bar, h);
  }
  return theta_bar;
}

}  // namespace fedsim

#endif  // FEDSIM_FEDCORE_HPP
