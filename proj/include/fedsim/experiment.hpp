// SPDX-License-Identifier: Apache-2.0

#ifndef FEDSIM_EXPERIMENT_HPP
#define FEDSIM_EXPERIMENT_HPP

#include <optional>
#include <utility>
#include <vector>

#include "fedsim/analysis.hpp"
#include "fedsim/config.hpp"
#include "fedsim/data.hpp"
#include "fedsim/runner.hpp"

namespace fedsim {

struct RunResult {
  std::vector<RoundMetrics> log;
  ServerState server;
  std::vector<ClientState> clients;
  std::vector<double> h_norm_history;
  std::vector<TraceRecord> trace;
  // task materialization
  Dataset dataset;                        // classification sources
  std::vector<uint32_t> test_indices;
  Partition partition;
  std::vector<QuadraticProblem> problems;  // quadratic source
  ParamVector oracle_optimum;
  // abort bookkeeping (tolerant variant only)
  long aborted_round = 0;  // 0 = completed
  std::string abort_message;
};

namespace detail {

inline ParamVector random_init(size_t dim, double scale, uint64_t seed) {
  Rng rng(mix_seed(seed, 0x1417ULL));
  ParamVector v(dim);
  for (double& x : v) x = rng.normal(0.0, scale);
  return v;
}

inline std::pair<double, double> eval_task(const ExperimentConfig& cfg,
                                           const ModelSpec& model,
                                           const RunResult& r,
                                           const ParamVector& params) {
  if (cfg.source == DataSource::quadratic) {
    double loss = 0.0;
    for (const auto& q : r.problems) {
      ParamVector d = sub(params, q.center);
      loss += 0.5 * dot(d, matvec(q.a, d));
    }
    return {loss / static_cast<double>(r.problems.size()), 0.0};
  }
  return evaluate(model, params, Batch::of(r.dataset, r.test_indices));
}

}  // namespace detail

// Full protocol: build data and clients, run T rounds, evaluate the live
// cloud model and the round-averaged inference model at each eval interval.
// A pure function of the config and its three seeds. Numeric blow-ups are
// recorded in the result instead of thrown, so callers can flush the partial
// log; run_experiment below rethrows them.
inline RunResult run_experiment_tolerant(const ExperimentConfig& cfg) {
  RunResult r;
  ModelSpec model = cfg.model;

  std::vector<ClientTask> tasks(cfg.n_clients);
  if (cfg.source == DataSource::quadratic) {
    auto [probs, opt] = make_quadratic_federation(
        cfg.n_clients, static_cast<size_t>(cfg.model.input_dim),
        cfg.quad_spread, cfg.quad_curv_lo, cfg.quad_curv_hi,
        cfg.seed_partition);
    r.problems = std::move(probs);
    r.oracle_optimum = std::move(opt);
    for (size_t i = 0; i < cfg.n_clients; ++i) {
      tasks[i].quad = &r.problems[i];
    }
  } else {
    r.dataset = cfg.source == DataSource::file
                    ? load_dataset(cfg.data_path)
                    : make_synthetic_classification(
                          cfg.model.n_classes, cfg.model.input_dim,
                          cfg.n_examples, cfg.separation, cfg.seed_partition);
    if (cfg.source == DataSource::file) {
      model.input_dim = static_cast<int>(r.dataset.dim);
      int classes = 0;
      for (int y : r.dataset.y) classes = std::max(classes, y + 1);
      model.n_classes = classes;
    }
    const size_t n_train = static_cast<size_t>(
        static_cast<double>(r.dataset.n) * (1.0 - cfg.test_fraction));
    if (n_train < cfg.n_clients) {
      throw config_error("partition.clients", "more clients than train examples");
    }
    for (size_t i = n_train; i < r.dataset.n; ++i) {
      r.test_indices.push_back(static_cast<uint32_t>(i));
    }
    std::vector<int> train_labels(r.dataset.y.begin(),
                                  r.dataset.y.begin() + n_train);
    r.partition = partition_examples(train_labels, cfg.n_clients, cfg.het,
                                     cfg.seed_partition,
                                     cfg.validation_fraction);
    for (size_t i = 0; i < cfg.n_clients; ++i) {
      tasks[i].data = &r.dataset;
      tasks[i].indices = r.partition.clients[i];
    }
  }

  // validation clients are set aside: they never join the training pool
  const size_t pool_total = cfg.source == DataSource::quadratic
                                ? cfg.n_clients
                                : r.partition.n_train();
  std::vector<long> registered_at(pool_total, 0);
  {
    long base = static_cast<long>(pool_total);
    for (const auto& [round, k] : cfg.sampler.pool_schedule) base -= k;
    if (base < 1) throw config_error("sample.pool_schedule", "empty initial pool");
    long next = base;
    for (const auto& [round, k] : cfg.sampler.pool_schedule) {
      for (long j = 0; j < k; ++j) {
        if (next < static_cast<long>(pool_total)) registered_at[next++] = round;
      }
    }
  }

  const size_t dim = model.param_dim();
  ServerState server =
      ServerState::init(detail::random_init(dim, cfg.init_scale, cfg.seed_init));
  std::vector<ClientState> clients(pool_total);
  for (size_t i = 0; i < pool_total; ++i) {
    clients[i].id = static_cast<int>(i);
    clients[i].h = zeros(dim);
  }
  r.server = server;

  const long n_threads = env_thread_cap();
  long converged_for = 0;

  if (cfg.rounds == 0) {
    RoundMetrics m;
    m.round = 0;
    auto [loss, acc] = detail::eval_task(cfg, model, r, server.theta);
    m.test_loss = loss;
    m.test_acc = acc;
    m.theta_norm = norm2(server.theta);
    m.lr = lr_at(cfg.schedule, 0);
    m.beta = cfg.schedule.beta0;
    m.evaluated = true;
    r.log.push_back(m);
    r.server = std::move(server);
    r.clients = std::move(clients);
    return r;
  }

  for (long t = 1; t <= cfg.rounds; ++t) {
    LocalRunConfig local = cfg.local;
    local.eta = lr_at(cfg.schedule, t - 1);
    const double beta_t = cfg.algorithm.kind == AlgorithmKind::adabest
                              ? beta_at(cfg.schedule, t, r.h_norm_history)
                              : cfg.algorithm.beta;
    long n_registered = 0;
    for (long reg : registered_at) {
      if (reg <= t) ++n_registered;
    }
    RoundOutcome out;
    try {
      out = run_round(server, clients, tasks, cfg.algorithm, model, local,
                      cfg.sampler, n_registered, cfg.seed_sampling, beta_t,
                      n_threads, cfg.weighted_aggregation);
    } catch (const numeric_error& e) {
      r.aborted_round = e.round;
      r.abort_message = e.detail;
      break;
    }
    r.h_norm_history.push_back(out.metrics.h_norm);

    // stationarity requires the drift estimate to vanish: once the aggregate
    // settles for a full window, |h| must sit within 10x the tolerance
    if (out.metrics.theta_bar_delta < cfg.convergence_tol) {
      if (++converged_for >= cfg.convergence_window &&
          out.metrics.h_norm >= 10.0 * cfg.convergence_tol) {
        throw invariant_error(
            "aggregate converged while |h| stayed large at round " +
            std::to_string(t));
      }
    } else {
      converged_for = 0;
    }

    if (t % cfg.eval_interval == 0 || t == cfg.rounds) {
      auto [loss, acc] = detail::eval_task(cfg, model, r, server.theta);
      out.metrics.test_loss = loss;
      out.metrics.test_acc = acc;
      ParamVector inf = inference_model(server);
      auto [iloss, iacc] = detail::eval_task(cfg, model, r, inf);
      out.metrics.inf_test_loss = iloss;
      out.metrics.inf_test_acc = iacc;
      out.metrics.evaluated = true;
    }
    if (cfg.trace && (t % cfg.trace_stride == 0)) {
      TraceRecord tr;
      tr.round = t;
      tr.g_bar = out.g_bar;
      tr.h = server.h;
      tr.theta = server.theta;
      tr.theta_bar = server.theta_bar_prev;
      r.trace.push_back(std::move(tr));
    }
    r.log.push_back(out.metrics);
  }
  r.server = std::move(server);
  r.clients = std::move(clients);
  return r;
}

inline RunResult run_experiment(const ExperimentConfig& cfg) {
  RunResult r = run_experiment_tolerant(cfg);
  if (r.aborted_round != 0) {
    throw numeric_error(r.aborted_round, r.abort_message);
  }
  return r;
}

}  // namespace fedsim

#endif  // FEDSIM_EXPERIMENT_HPP
