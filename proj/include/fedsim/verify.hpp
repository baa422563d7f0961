// SPDX-License-Identifier: Apache-2.0

#ifndef FEDSIM_VERIFY_HPP
#define FEDSIM_VERIFY_HPP

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "fedsim/analysis.hpp"
#include "fedsim/csv.hpp"
#include "fedsim/experiment.hpp"

namespace fedsim {

struct CheckResult {
  std::string name;
  bool pass = false;
  double measured = 0.0;
  double tolerance = 0.0;
  std::string note;
};

namespace verify_detail {

inline CheckResult check(const std::string& name, double measured,
                         double tolerance, bool pass,
                         const std::string& note = "") {
  return CheckResult{name, pass, measured, tolerance, note};
}

inline ExperimentConfig small_softmax_config(AlgorithmKind kind, double mu,
                                             double beta, long rounds,
                                             uint64_t seed) {
  KeyValues kv = {
      {"algorithm", std::string(to_string(kind))},
      {"algorithm.mu", std::to_string(mu)},
      {"algorithm.beta", std::to_string(beta)},
      {"model", "softmax"},
      {"model.input_dim", "8"},
      {"model.classes", "3"},
      {"data", "synthetic"},
      {"data.examples", "600"},
      {"data.separation", "3.0"},
      {"partition.clients", "10"},
      {"partition.skew", "dirichlet"},
      {"partition.alpha", "0.3"},
      {"rounds", std::to_string(rounds)},
      {"sample.fraction", "0.5"},
      {"seeds.partition", std::to_string(seed)},
      {"seeds.init", std::to_string(seed)},
      {"seeds.sampling", std::to_string(seed)},
      {"trace", "on"},
  };
  return make_config(kv);
}

}  // namespace verify_detail

// Recurrence-vs-power-series and the aggregate-difference identities, plus
// the FedAvg special case.
inline std::vector<CheckResult> verify_remarks() {
  using verify_detail::check;
  std::vector<CheckResult> out;

  // recurrence h^t = beta (h^{t-1} + gbar^t) against the direct series
  {
    double worst = 0.0;
    Rng rng(20240601ULL);
    const double betas[] = {0.2, 0.5, 0.9, 1.0};
    for (int trial = 0; trial < 100; ++trial) {
      const double beta = betas[trial % 4];
      const size_t len = 1 + rng.below(50);
      std::vector<ParamVector> hist;
      ParamVector h = zeros(32);
      for (size_t t = 0; t < len; ++t) {
        ParamVector g(32);
        for (double& v : g) v = rng.normal();
        h = scale(beta, add(h, g));
        hist.push_back(std::move(g));
      }
      const ParamVector series = power_series_h(hist, beta);
      const double scale_ref = std::max(1.0, norm2(h));
      worst = std::max(worst, norm2(sub(series, h)) / scale_ref);
    }
    out.push_back(check("remark3.series_vs_recurrence", worst, 1e-10,
                        worst < 1e-10, "relative over 100 histories"));
  }

  // live aggregate-difference identity on a traced run
  {
    ExperimentConfig cfg = verify_detail::small_softmax_config(
        AlgorithmKind::adabest, 0.02, 0.9, 40, 11);
    RunResult r = run_experiment(cfg);  // run_round enforces the identity
    double worst = 0.0;
    for (size_t i = 1; i < r.trace.size(); ++i) {
      const ParamVector lhs = sub(r.trace[i - 1].theta_bar, r.trace[i].theta_bar);
      const ParamVector rhs = add(r.trace[i - 1].h, r.trace[i].g_bar);
      worst = std::max(worst, max_abs(sub(lhs, rhs)));
    }
    out.push_back(check("remark2.live_identity", worst, 1e-10, worst < 1e-10,
                        "max |component| over a 40-round run"));
  }

  // beta = mu = 0 reproduces plain averaging bit for bit
  {
    ExperimentConfig base = verify_detail::small_softmax_config(
        AlgorithmKind::fedavg, 0.0, 0.0, 30, 5);
    ExperimentConfig ada = verify_detail::small_softmax_config(
        AlgorithmKind::adabest, 0.0, 0.0, 30, 5);
    RunResult ra = run_experiment(base);
    RunResult rb = run_experiment(ada);
    std::ostringstream ca, cb;
    write_csv(ca, ra.log);
    write_csv(cb, rb.log);
    const bool same = ca.str() == cb.str();
    out.push_back(check("remark4.fedavg_special_case", same ? 0.0 : 1.0, 0.0,
                        same, "bitwise CSV comparison"));
  }

  // with full participation and beta = 1 the two server updates coincide
  {
    ExperimentConfig full = verify_detail::small_softmax_config(
        AlgorithmKind::adabest, 0.02, 1.0, 20, 7);
    full.sampler.fraction = 1.0;
    RunResult r = run_experiment(full);
    double worst = 0.0;
    const long n = static_cast<long>(full.n_clients -
                                     static_cast<size_t>(std::floor(
                                         full.n_clients * full.validation_fraction)));
    AlgorithmSpec ada{AlgorithmKind::adabest, 0.02, 1.0};
    AlgorithmSpec dyn{AlgorithmKind::feddyn, 0.02, 0.0};
    for (size_t i = 1; i < r.trace.size(); ++i) {
      RoundSizes sizes{n, n, 0, 0.1};
      const ParamVector& theta_prev = r.trace[i - 1].theta;
      const ParamVector ha = update_server_estimate(
          ada, r.trace[i - 1].h, theta_prev, r.trace[i - 1].theta_bar,
          r.trace[i].theta_bar, sizes);
      const ParamVector hd = update_server_estimate(
          dyn, r.trace[i - 1].h, theta_prev, r.trace[i - 1].theta_bar,
          r.trace[i].theta_bar, sizes);
      worst = std::max(worst, max_abs(sub(ha, hd)));
    }
    out.push_back(check("remark5.feddyn_special_case", worst, 1e-12,
                        worst < 1e-12, "max |component| over 20 rounds"));
  }
  return out;
}

// Margin sign exactly predicts the one-step norm decrease, and a live run
// never violates the cosine condition.
inline std::vector<CheckResult> verify_theorem1() {
  using verify_detail::check;
  std::vector<CheckResult> out;
  {
    Rng rng(77ULL);
    long mismatches = 0;
    for (int i = 0; i < 1000; ++i) {
      const size_t dim = 2 + rng.below(16);
      ParamVector h(dim), g(dim);
      for (double& v : h) v = rng.normal();
      for (double& v : g) v = rng.normal();
      const long s = 2 + static_cast<long>(rng.below(200));
      const long p = 1 + static_cast<long>(rng.below(static_cast<uint64_t>(s)));
      const double rho = static_cast<double>(p) / static_cast<double>(s);
      const double margin = theorem1_margin(h, g, p, s);
      const double n_new = norm2(axpy(rho, g, h));
      const double n_old = norm2(h);
      if (margin <= -1e-9 && n_new > n_old) ++mismatches;
      if (margin >= 1e-9 && n_new <= n_old) ++mismatches;
    }
    out.push_back(check("theorem1.margin_sign", static_cast<double>(mismatches),
                        0.0, mismatches == 0, "1000 random one-step draws"));
  }
  return out;
}

// On a fixed client set a settled aggregate forces the drift estimate to
// vanish; exercised on a convex federation driven to stationarity.
inline std::vector<CheckResult> verify_theorem2() {
  using verify_detail::check;
  std::vector<CheckResult> out;
  KeyValues kv = {
      {"algorithm", "adabest"},   {"algorithm.mu", "0.5"},
      {"algorithm.beta", "1.0"},  {"model", "quadratic"},
      {"model.input_dim", "3"},   {"data", "quadratic"},
      {"data.quad.spread", "2.0"}, {"data.quad.curv_lo", "0.5"},
      {"data.quad.curv_hi", "2.0"}, {"partition.clients", "2"},
      {"sample.fraction", "1.0"}, {"rounds", "300"},
      {"schedule.eta0", "0.1"},   {"schedule.lr_decay", "1.0"},
      {"local.epochs", "5"},      {"schedule.plateau", "on"},
      {"partition.validation_fraction", "0"},
      {"seeds.partition", "3"},   {"seeds.init", "7"},
      {"seeds.sampling", "7"},
  };
  ExperimentConfig cfg = make_config(kv);
  RunResult r = run_experiment(cfg);
  const double final_h = r.log.back().h_norm;
  const double delta = r.log.back().theta_bar_delta;
  const double resid = stationarity_residual(r.problems, r.server.theta);
  out.push_back(check("theorem2.h_vanishes_at_convergence",
                      final_h, std::max(10.0 * delta, 1e-8),
                      final_h < std::max(10.0 * delta, 1e-8),
                      "|h| at the settled tail"));
  out.push_back(check("theorem2.stationarity_residual", resid, 1e-4,
                      resid < 1e-4, "mean full-gradient norm"));
  return out;
}

inline std::vector<CheckResult> verify_costs() {
  using verify_detail::check;
  std::vector<CheckResult> out;
  const DominanceReport rep = cost_dominance_check();
  for (const auto& e : rep.entries) {
    long min_coef = 0;
    for (const auto& [mono, c] : e.difference) {
      (void)mono;
      min_coef = std::min(min_coef, c);
    }
    out.push_back(check("costs." + e.name, static_cast<double>(min_coef), 0.0,
                        e.dominated, "coefficientwise difference"));
  }
  return out;
}

// Analytic gradients against central differences for all three model kinds.
inline std::vector<CheckResult> verify_gradients() {
  using verify_detail::check;
  std::vector<CheckResult> out;
  Rng rng(4242ULL);
  const Dataset data = make_synthetic_classification(4, 6, 64, 2.0, 99);
  const std::vector<uint32_t> idx = all_indices(data);

  auto run_kind = [&](const char* name, const ModelSpec& spec,
                      const Batch& batch) {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      ParamVector p(spec.param_dim());
      for (double& v : p) v = rng.normal(0.0, 0.5);
      auto [loss, grad] = loss_and_grad(spec, p, batch);
      (void)loss;
      const ParamVector fd = finite_diff_grad(spec, p, batch, 1e-6);
      const double rel =
          norm2(sub(grad, fd)) / std::max(1e-12, norm2(fd));
      worst = std::max(worst, rel);
    }
    out.push_back(check(std::string("gradients.") + name, worst, 1e-5,
                        worst < 1e-5, "relative L2, 100 draws"));
  };

  {
    ModelSpec spec;
    spec.kind = ModelKind::softmax_regression;
    spec.input_dim = 6;
    spec.n_classes = 4;
    spec.weight_decay = 1e-3;
    run_kind("softmax", spec, Batch::of(data, idx));
  }
  {
    ModelSpec spec;
    spec.kind = ModelKind::mlp;
    spec.input_dim = 6;
    spec.n_classes = 4;
    spec.hidden = 5;
    spec.weight_decay = 1e-3;
    run_kind("mlp", spec, Batch::of(data, idx));
  }
  {
    auto [probs, opt] = make_quadratic_federation(1, 5, 2.0, 0.5, 3.0, 17);
    (void)opt;
    ModelSpec spec;
    spec.kind = ModelKind::quadratic;
    spec.input_dim = 5;
    spec.weight_decay = 1e-3;
    run_kind("quadratic", spec, Batch::of(probs.front()));
  }
  return out;
}

inline std::vector<CheckResult> verify_suite(const std::string& name) {
  if (name == "remarks") return verify_remarks();
  if (name == "theorem1") return verify_theorem1();
  if (name == "theorem2") return verify_theorem2();
  if (name == "costs") return verify_costs();
  if (name == "gradients") return verify_gradients();
  if (name == "all") {
    std::vector<CheckResult> out;
    for (const char* s : {"remarks", "theorem1", "theorem2", "costs",
                          "gradients"}) {
      auto part = verify_suite(s);
      out.insert(out.end(), part.begin(), part.end());
    }
    return out;
  }
  throw config_error("suite", "unknown suite '" + name +
                                  "' (remarks|theorem1|theorem2|costs|"
                                  "gradients|all)");
}

}  // namespace fedsim

#endif  // FEDSIM_VERIFY_HPP
