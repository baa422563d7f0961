// SPDX-License-Identifier: Apache-2.0

#ifndef FEDSIM_RUNNER_HPP
#define FEDSIM_RUNNER_HPP

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <optional>
#include <thread>
#include <vector>

#include "fedsim/analysis.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/fedcore.hpp"
#include "fedsim/linalg.hpp"
#include "fedsim/models.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

// Client sampling: either a fraction of the registered set or an absolute
// count. pool_schedule lists (round, clients added) for a growing client set;
// clients join in id order.
struct SamplerConfig {
  double fraction = 1.0;
  long count = 0;  // takes precedence when > 0
  std::vector<std::pair<long, long>> pool_schedule;
};

inline long resolve_sample_size(const SamplerConfig& cfg, long n_registered) {
  long k = cfg.count > 0
               ? cfg.count
               : std::lround(cfg.fraction * static_cast<double>(n_registered));
  if (k > n_registered) k = n_registered;
  if (k <= 0) {
    throw invariant_error("sample_clients: resolved sample size is 0");
  }
  return k;
}

// Uniform sample without replacement from the registered prefix [0, n),
// returned sorted ascending.
inline std::vector<uint32_t> sample_clients(long n_registered,
                                            const SamplerConfig& cfg,
                                            Rng& rng) {
  if (n_registered <= 0) throw invariant_error("sample_clients: empty pool");
  const long k = resolve_sample_size(cfg, n_registered);
  return rng.sample_without_replacement(static_cast<uint32_t>(n_registered),
                                        static_cast<uint32_t>(k));
}

struct PlateauConfig {
  bool enabled = false;
  int window = 20;
  double rel_threshold = 0.01;
  double factor = 0.5;
};

struct ScheduleConfig {
  double eta0 = 0.1;
  double lr_decay = 0.998;
  double beta0 = 0.0;
  PlateauConfig plateau;
};

// eta0 * decay^round, round 0-based.
inline double lr_at(const ScheduleConfig& s, long round) {
  if (round < 0) throw invariant_error("lr_at: negative round");
  return s.eta0 * std::pow(s.lr_decay, static_cast<double>(round));
}

// Plateau-decayed beta. The detector walks the recorded |h| history: a
// plateau is a full window of W values whose spread (max - min) stays within
// rel_threshold of the window maximum; each detected plateau multiplies beta
// by `factor` once, and the detector re-arms only after W further rounds.
inline double beta_at(const ScheduleConfig& s, long /*round*/,
                      const std::vector<double>& h_norm_history) {
  if (!s.plateau.enabled) return s.beta0;
  const size_t w = static_cast<size_t>(s.plateau.window);
  double beta = s.beta0;
  long last_fire = -static_cast<long>(w) - 1;
  for (size_t tau = 0; tau < h_norm_history.size(); ++tau) {
    if (tau + 1 < w) continue;
    if (static_cast<long>(tau) - last_fire < static_cast<long>(w)) continue;
    double mx = h_norm_history[tau], mn = h_norm_history[tau];
    for (size_t j = tau + 1 - w; j <= tau; ++j) {
      mx = std::max(mx, h_norm_history[j]);
      mn = std::min(mn, h_norm_history[j]);
    }
    if (mx - mn <= s.plateau.rel_threshold * std::max(mx, 1e-12)) {
      beta *= s.plateau.factor;
      last_fire = static_cast<long>(tau);
    }
  }
  return beta;
}

// A client's local objective: a slice of a shared dataset or a quadratic.
// Quadratic tasks may still carry indices as a notional example count (used
// only as an aggregation weight).
struct ClientTask {
  const Dataset* data = nullptr;
  std::vector<uint32_t> indices;
  const QuadraticProblem* quad = nullptr;

  size_t n_examples() const {
    if (!indices.empty()) return indices.size();
    return quad ? 1 : 0;
  }
};

struct RoundMetrics {
  long round = 0;
  double test_loss = std::numeric_limits<double>::quiet_NaN();
  double test_acc = std::numeric_limits<double>::quiet_NaN();
  double train_loss = std::numeric_limits<double>::quiet_NaN();
  double theta_norm = 0.0;
  double h_norm = 0.0;
  double gbar_norm = 0.0;
  double cos_h_g = std::numeric_limits<double>::quiet_NaN();
  double lr = 0.0;
  double beta = 0.0;
  double wall_time = 0.0;
  // not part of the CSV contract
  double inf_test_loss = std::numeric_limits<double>::quiet_NaN();
  double inf_test_acc = std::numeric_limits<double>::quiet_NaN();
  double theta_bar_delta = 0.0;
  bool evaluated = false;
};

inline long env_thread_cap() {
  const char* v = std::getenv("FEDSIM_THREADS");
  if (v == nullptr) return 1;
  const long n = std::atol(v);
  return n > 0 ? n : 1;
}

// Round-averaged inference model.
inline ParamVector inference_model(const ServerState& server) {
  if (server.inference_count < 1) {
    throw invariant_error("inference_model: no client models absorbed yet");
  }
  return scale(1.0 / static_cast<double>(server.inference_count),
               server.inference_sum);
}

struct RoundOutcome {
  std::vector<uint32_t> participants;
  ParamVector g_bar;
  RoundMetrics metrics;
};

// One full communication round: sample, broadcast, local runs, estimate
// updates, aggregation, server estimate, cloud update, inference absorption.
// Pure up to the rng streams derived from (sampling_seed, round).
// `weighted_aggregation` switches the model average from uniform to
// example-count weights; the inference accumulator stays uniform either way.
inline RoundOutcome run_round(ServerState& server,
                              std::vector<ClientState>& clients,
                              const std::vector<ClientTask>& tasks,
                              const AlgorithmSpec& alg, const ModelSpec& model,
                              const LocalRunConfig& local,
                              const SamplerConfig& sampler, long n_registered,
                              uint64_t sampling_seed, double beta_t,
                              long n_threads = 1,
                              bool weighted_aggregation = false) {
  const auto t_start = std::chrono::steady_clock::now();
  const long t = server.round + 1;
  AlgorithmSpec alg_t = alg;
  alg_t.beta = beta_t;

  Rng sample_rng(mix_seed(sampling_seed, static_cast<uint64_t>(t), 0));
  const std::vector<uint32_t> ids =
      sample_clients(n_registered, sampler, sample_rng);
  const long n_part = static_cast<long>(ids.size());

  // local runs, id-sorted result slots; safe to parallelize
  std::vector<LocalRunResult> results(ids.size());
  auto work = [&](size_t slot) {
    const uint32_t cid = ids[slot];
    Rng rng(mix_seed(sampling_seed, static_cast<uint64_t>(t),
                     0x1000ULL + cid));
    results[slot] = run_local(alg_t, clients[cid], server.theta, local, model,
                              tasks[cid].data, tasks[cid].indices,
                              tasks[cid].quad, server.h, rng, t);
  };
  const long threads = std::min<long>(n_threads, n_part);
  if (threads <= 1) {
    for (size_t slot = 0; slot < ids.size(); ++slot) work(slot);
  } else {
    std::vector<std::thread> pool;
    std::atomic<size_t> next{0};
    for (long w = 0; w < threads; ++w) {
      pool.emplace_back([&]() {
        for (;;) {
          const size_t slot = next.fetch_add(1);
          if (slot >= ids.size()) return;
          work(slot);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  std::vector<ParamVector> models_in;
  std::vector<ParamVector> pseudo;
  models_in.reserve(ids.size());
  pseudo.reserve(ids.size());
  double train_loss = 0.0;
  for (const auto& r : results) {
    models_in.push_back(r.theta_out);
    pseudo.push_back(r.pseudo_gradient);
    train_loss += r.mean_batch_loss;
  }
  train_loss /= static_cast<double>(ids.size());

  std::vector<double> weights;
  if (weighted_aggregation) {
    weights.reserve(ids.size());
    for (uint32_t cid : ids) {
      weights.push_back(static_cast<double>(tasks[cid].n_examples()));
    }
  }
  const ParamVector theta_bar = weighted_aggregation
                                    ? weighted_mean_of(models_in, weights)
                                    : aggregate(models_in);
  const ParamVector g_bar = weighted_aggregation
                                ? weighted_mean_of(pseudo, weights)
                                : mean_of(pseudo);
  check_aggregate_identity(server.theta, theta_bar, g_bar, t);

  // total local steps; under unbalanced partitions the per-client counts
  // differ, so the displacement rescale uses the participant mean
  long k_total = local.epochs;
  if (tasks[ids.front()].quad == nullptr) {
    const size_t bs = static_cast<size_t>(local.batch_size);
    double steps = 0.0;
    for (uint32_t cid : ids) {
      const size_t n_i = tasks[cid].indices.size();
      steps += static_cast<double>((n_i + bs - 1) / bs);
    }
    k_total = std::max<long>(
        1, std::lround(local.epochs * steps / static_cast<double>(n_part)));
  }
  RoundSizes sizes{n_registered, n_part, k_total, local.eta};

  const ParamVector global_step = sub(server.theta, theta_bar);
  for (size_t slot = 0; slot < ids.size(); ++slot) {
    ClientState& c = clients[ids[slot]];
    c.h = update_client_estimate(alg_t, c.h, pseudo[slot], t, c.t_last, sizes,
                                 global_step);
    c.t_last = t;
  }

  const ParamVector h_prev = server.h;
  ParamVector h_new = update_server_estimate(alg_t, server.h, server.theta,
                                             server.theta_bar_prev, theta_bar,
                                             sizes);
  ParamVector theta_new = cloud_update(alg_t, theta_bar, h_new);

  if (!all_finite(theta_new) || !all_finite(h_new)) {
    throw numeric_error(t, "non-finite server state");
  }

  if (alg_t.kind == AlgorithmKind::adabest) {
    // aggregate-difference identity: theta_bar_prev - theta_bar must equal
    // h_prev + g_bar componentwise up to summation reassociation
    const ParamVector lhs = sub(server.theta_bar_prev, theta_bar);
    const ParamVector rhs = add(h_prev, g_bar);
    for (size_t k = 0; k < lhs.size(); ++k) {
      if (std::abs(lhs[k] - rhs[k]) > 1e-10) {
        throw invariant_error(
            "adabest aggregate-difference identity violated at round " +
            std::to_string(t));
      }
    }
    const double bound =
        alg_t.beta * (norm2(h_prev) + norm2(g_bar)) + 1e-9;
    if (norm2(h_new) > bound) {
      throw invariant_error("adabest |h| retention bound violated at round " +
                            std::to_string(t));
    }
  }

  RoundOutcome out;
  out.metrics.round = t;
  out.metrics.train_loss = train_loss;
  out.metrics.h_norm = norm2(h_new);
  out.metrics.gbar_norm = norm2(g_bar);
  out.metrics.theta_bar_delta = norm2(sub(theta_bar, server.theta_bar_prev));
  const double nh = norm2(h_prev);
  const double ng = out.metrics.gbar_norm;
  out.metrics.cos_h_g = (nh > 0.0 && ng > 0.0)
                            ? cos_angle(h_prev, g_bar)
                            : std::numeric_limits<double>::quiet_NaN();
  out.metrics.lr = local.eta;
  out.metrics.beta = beta_t;
  out.g_bar = g_bar;
  out.participants = ids;

  // absorb participant models into the inference accumulator
  for (const auto& m : models_in) {
    for (size_t k = 0; k < m.size(); ++k) server.inference_sum[k] += m[k];
  }
  server.inference_count += n_part;

  server.theta_bar_prev = theta_bar;
  server.h = std::move(h_new);
  server.theta = std::move(theta_new);
  server.round = t;
  out.metrics.theta_norm = norm2(server.theta);
  out.metrics.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return out;
}

}  // namespace fedsim

#endif  // FEDSIM_RUNNER_HPP
