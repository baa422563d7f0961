// SPDX-License-Identifier: Apache-2.0

#ifndef FEDSIM_CONFIG_HPP
#define FEDSIM_CONFIG_HPP

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/fedcore.hpp"
#include "fedsim/runner.hpp"

namespace fedsim {

enum class DataSource { synthetic, quadratic, file };

// Fully resolved run description. Every field has a recorded default; the
// resolved key-value view (resolved_keys) is what lands in the sidecar.
struct ExperimentConfig {
  AlgorithmSpec algorithm;
  ModelSpec model;

  DataSource source = DataSource::synthetic;
  std::string data_path;
  size_t n_examples = 4000;
  double separation = 3.0;
  double test_fraction = 0.2;
  double quad_spread = 2.0;
  double quad_curv_lo = 0.5;
  double quad_curv_hi = 2.0;

  size_t n_clients = 10;
  HeterogeneityConfig het;
  double validation_fraction = 0.1;

  SamplerConfig sampler;
  long rounds = 10;
  LocalRunConfig local;
  ScheduleConfig schedule;

  bool weighted_aggregation = false;  // example-count weights instead of uniform

  uint64_t seed_partition = 1;
  uint64_t seed_init = 1;
  uint64_t seed_sampling = 1;
  double init_scale = 0.01;

  long eval_interval = 1;
  bool trace = false;
  long trace_stride = 1;
  double convergence_tol = 1e-9;
  long convergence_window = 10;
};

namespace detail {

inline const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "algorithm", "algorithm.mu", "algorithm.beta",
      "model", "model.input_dim", "model.classes", "model.hidden",
      "model.weight_decay",
      "data", "data.path", "data.examples", "data.separation",
      "data.test_fraction",
      "data.quad.spread", "data.quad.curv_lo", "data.quad.curv_hi",
      "partition.clients", "partition.skew", "partition.alpha",
      "partition.balance", "partition.sigma", "partition.validation_fraction",
      "sample.fraction", "sample.count", "sample.pool_schedule",
      "aggregate.weighted",
      "rounds",
      "local.epochs", "local.batch",
      "schedule.eta0", "schedule.lr_decay",
      "schedule.plateau", "schedule.plateau.window",
      "schedule.plateau.rel_threshold", "schedule.plateau.factor",
      "seeds.partition", "seeds.init", "seeds.sampling",
      "init.scale",
      "eval.interval", "trace", "trace.stride",
      "convergence.tol", "convergence.window",
  };
  return keys;
}

inline double parse_real(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw config_error(key, "expected a real number, got '" + v + "'");
  }
}

inline long parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const long x = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw config_error(key, "expected an integer, got '" + v + "'");
  }
}

inline bool parse_flag(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw config_error(key, "expected on/off, got '" + v + "'");
}

inline std::vector<std::pair<long, long>> parse_pool_schedule(
    const std::string& key, const std::string& v) {
  std::vector<std::pair<long, long>> out;
  if (v.empty() || v == "none") return out;
  std::istringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      throw config_error(key, "expected round:count pairs, got '" + v + "'");
    }
    out.emplace_back(parse_int(key, item.substr(0, colon)),
                     parse_int(key, item.substr(colon + 1)));
  }
  return out;
}

}  // namespace detail

using KeyValues = std::map<std::string, std::string>;

// Reads the flat key=value format; '#' comments, blank lines ignored,
// later duplicates win.
inline KeyValues read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("config", "cannot open '" + path + "'");
  KeyValues kv;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw config_error("config",
                         "line " + std::to_string(lineno) + ": expected key=value");
    }
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      const auto b = s.find_last_not_of(" \t");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

// Builds and validates an ExperimentConfig from key-values; unknown keys are
// rejected, every error names the field.
inline ExperimentConfig make_config(const KeyValues& kv) {
  using namespace detail;
  for (const auto& [k, v] : kv) {
    (void)v;
    if (known_keys().count(k) == 0) {
      throw config_error(k, "unknown key");
    }
  }
  auto get = [&kv](const std::string& k) -> const std::string* {
    auto it = kv.find(k);
    return it == kv.end() ? nullptr : &it->second;
  };

  ExperimentConfig c;
  if (const auto* v = get("algorithm")) {
    if (*v == "fedavg") c.algorithm.kind = AlgorithmKind::fedavg;
    else if (*v == "scaffoldm") c.algorithm.kind = AlgorithmKind::scaffold_m;
    else if (*v == "feddyn") c.algorithm.kind = AlgorithmKind::feddyn;
    else if (*v == "adabest") c.algorithm.kind = AlgorithmKind::adabest;
    else throw config_error("algorithm", "unknown algorithm '" + *v + "'");
  }
  if (const auto* v = get("algorithm.mu")) c.algorithm.mu = parse_real("algorithm.mu", *v);
  if (const auto* v = get("algorithm.beta")) c.algorithm.beta = parse_real("algorithm.beta", *v);

  c.model.kind = ModelKind::softmax_regression;
  if (const auto* v = get("model")) {
    if (*v == "quadratic") c.model.kind = ModelKind::quadratic;
    else if (*v == "softmax") c.model.kind = ModelKind::softmax_regression;
    else if (*v == "mlp") c.model.kind = ModelKind::mlp;
    else throw config_error("model", "unknown model '" + *v + "'");
  }
  c.model.input_dim = 16;
  c.model.n_classes = 10;
  c.model.hidden = 32;
  if (const auto* v = get("model.input_dim")) c.model.input_dim = static_cast<int>(parse_int("model.input_dim", *v));
  if (const auto* v = get("model.classes")) c.model.n_classes = static_cast<int>(parse_int("model.classes", *v));
  if (const auto* v = get("model.hidden")) c.model.hidden = static_cast<int>(parse_int("model.hidden", *v));
  if (const auto* v = get("model.weight_decay")) c.model.weight_decay = parse_real("model.weight_decay", *v);

  if (const auto* v = get("data")) {
    if (*v == "synthetic") c.source = DataSource::synthetic;
    else if (*v == "quadratic") c.source = DataSource::quadratic;
    else if (*v == "file") c.source = DataSource::file;
    else throw config_error("data", "unknown data source '" + *v + "'");
  }
  if (const auto* v = get("data.path")) c.data_path = *v;
  if (const auto* v = get("data.examples")) c.n_examples = static_cast<size_t>(parse_int("data.examples", *v));
  if (const auto* v = get("data.separation")) c.separation = parse_real("data.separation", *v);
  if (const auto* v = get("data.test_fraction")) c.test_fraction = parse_real("data.test_fraction", *v);
  if (const auto* v = get("data.quad.spread")) c.quad_spread = parse_real("data.quad.spread", *v);
  if (const auto* v = get("data.quad.curv_lo")) c.quad_curv_lo = parse_real("data.quad.curv_lo", *v);
  if (const auto* v = get("data.quad.curv_hi")) c.quad_curv_hi = parse_real("data.quad.curv_hi", *v);

  if (const auto* v = get("partition.clients")) c.n_clients = static_cast<size_t>(parse_int("partition.clients", *v));
  if (const auto* v = get("partition.skew")) {
    if (*v == "iid") c.het.skew = SkewMode::iid;
    else if (*v == "dirichlet") c.het.skew = SkewMode::dirichlet;
    else throw config_error("partition.skew", "expected iid|dirichlet");
  }
  if (const auto* v = get("partition.alpha")) c.het.alpha = parse_real("partition.alpha", *v);
  if (const auto* v = get("partition.balance")) {
    if (*v == "balanced") c.het.balance = BalanceMode::balanced;
    else if (*v == "lognormal") c.het.balance = BalanceMode::lognormal;
    else throw config_error("partition.balance", "expected balanced|lognormal");
  }
  if (const auto* v = get("partition.sigma")) c.het.sigma = parse_real("partition.sigma", *v);
  if (const auto* v = get("partition.validation_fraction")) {
    c.validation_fraction = parse_real("partition.validation_fraction", *v);
  }

  if (const auto* v = get("sample.fraction")) c.sampler.fraction = parse_real("sample.fraction", *v);
  if (const auto* v = get("sample.count")) c.sampler.count = parse_int("sample.count", *v);
  if (const auto* v = get("sample.pool_schedule")) {
    c.sampler.pool_schedule = parse_pool_schedule("sample.pool_schedule", *v);
  }

  if (const auto* v = get("aggregate.weighted")) {
    c.weighted_aggregation = parse_flag("aggregate.weighted", *v);
  }
  if (const auto* v = get("rounds")) c.rounds = parse_int("rounds", *v);
  if (const auto* v = get("local.epochs")) c.local.epochs = static_cast<int>(parse_int("local.epochs", *v));
  if (const auto* v = get("local.batch")) c.local.batch_size = static_cast<int>(parse_int("local.batch", *v));
  if (const auto* v = get("schedule.eta0")) c.schedule.eta0 = parse_real("schedule.eta0", *v);
  if (const auto* v = get("schedule.lr_decay")) c.schedule.lr_decay = parse_real("schedule.lr_decay", *v);
  if (const auto* v = get("schedule.plateau")) c.schedule.plateau.enabled = parse_flag("schedule.plateau", *v);
  if (const auto* v = get("schedule.plateau.window")) {
    c.schedule.plateau.window = static_cast<int>(parse_int("schedule.plateau.window", *v));
  }
  if (const auto* v = get("schedule.plateau.rel_threshold")) {
    c.schedule.plateau.rel_threshold = parse_real("schedule.plateau.rel_threshold", *v);
  }
  if (const auto* v = get("schedule.plateau.factor")) {
    c.schedule.plateau.factor = parse_real("schedule.plateau.factor", *v);
  }
  if (const auto* v = get("seeds.partition")) c.seed_partition = static_cast<uint64_t>(parse_int("seeds.partition", *v));
  if (const auto* v = get("seeds.init")) c.seed_init = static_cast<uint64_t>(parse_int("seeds.init", *v));
  if (const auto* v = get("seeds.sampling")) c.seed_sampling = static_cast<uint64_t>(parse_int("seeds.sampling", *v));
  if (const auto* v = get("init.scale")) c.init_scale = parse_real("init.scale", *v);
  if (const auto* v = get("eval.interval")) c.eval_interval = parse_int("eval.interval", *v);
  if (const auto* v = get("trace")) c.trace = parse_flag("trace", *v);
  if (const auto* v = get("trace.stride")) c.trace_stride = parse_int("trace.stride", *v);
  if (const auto* v = get("convergence.tol")) c.convergence_tol = parse_real("convergence.tol", *v);
  if (const auto* v = get("convergence.window")) c.convergence_window = parse_int("convergence.window", *v);

  c.schedule.beta0 = c.algorithm.beta;

  // validation
  if (c.algorithm.beta < 0.0 || c.algorithm.beta > 1.0) {
    throw config_error("algorithm.beta", "beta must lie in [0,1]");
  }
  if (c.algorithm.mu < 0.0) throw config_error("algorithm.mu", "mu must be >= 0");
  if (c.model.weight_decay < 0.0) {
    throw config_error("model.weight_decay", "weight decay must be >= 0");
  }
  if (c.rounds < 0) throw config_error("rounds", "rounds must be >= 0");
  if (c.schedule.eta0 <= 0.0) throw config_error("schedule.eta0", "eta0 must be > 0");
  if (c.schedule.lr_decay <= 0.0 || c.schedule.lr_decay > 1.0) {
    throw config_error("schedule.lr_decay", "decay must lie in (0,1]");
  }
  if (c.schedule.plateau.window < 2) {
    throw config_error("schedule.plateau.window", "window must be >= 2");
  }
  if (c.local.epochs < 1) throw config_error("local.epochs", "epochs must be >= 1");
  if (c.local.batch_size < 1) throw config_error("local.batch", "batch must be >= 1");
  if (c.n_clients < 1) throw config_error("partition.clients", "need >= 1 client");
  if (c.het.alpha <= 0.0) throw config_error("partition.alpha", "alpha must be > 0");
  if (c.het.sigma < 0.0) throw config_error("partition.sigma", "sigma must be >= 0");
  if (c.test_fraction <= 0.0 || c.test_fraction >= 1.0) {
    throw config_error("data.test_fraction", "test fraction must lie in (0,1)");
  }
  if (c.validation_fraction < 0.0 || c.validation_fraction >= 1.0) {
    throw config_error("partition.validation_fraction", "must lie in [0,1)");
  }
  if (c.sampler.count == 0 && c.sampler.fraction <= 0.0) {
    throw config_error("sample.fraction", "participation must be positive");
  }
  if (c.eval_interval < 1) throw config_error("eval.interval", "must be >= 1");
  if (c.source == DataSource::file && c.data_path.empty()) {
    throw config_error("data.path", "file source requires a path");
  }
  if (c.source == DataSource::quadratic && c.model.kind != ModelKind::quadratic) {
    throw config_error("model", "quadratic data source requires model=quadratic");
  }
  if (c.source != DataSource::quadratic && c.model.kind == ModelKind::quadratic) {
    throw config_error("data", "model=quadratic requires data=quadratic");
  }
  if (c.quad_curv_lo <= 0.0 || c.quad_curv_hi < c.quad_curv_lo) {
    throw config_error("data.quad.curv_lo", "bad curvature range");
  }
  return c;
}

// Canonical key-value rendering of a resolved config: every default made
// explicit, so a run is reproducible from its sidecar alone.
inline KeyValues resolved_keys(const ExperimentConfig& c) {
  auto real = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  KeyValues kv;
  kv["algorithm"] = to_string(c.algorithm.kind);
  kv["algorithm.mu"] = real(c.algorithm.mu);
  kv["algorithm.beta"] = real(c.algorithm.beta);
  kv["model"] = c.model.kind == ModelKind::quadratic ? "quadratic"
                : c.model.kind == ModelKind::mlp ? "mlp" : "softmax";
  kv["model.input_dim"] = std::to_string(c.model.input_dim);
  kv["model.classes"] = std::to_string(c.model.n_classes);
  kv["model.hidden"] = std::to_string(c.model.hidden);
  kv["model.weight_decay"] = real(c.model.weight_decay);
  kv["data"] = c.source == DataSource::synthetic ? "synthetic"
               : c.source == DataSource::quadratic ? "quadratic" : "file";
  kv["data.path"] = c.data_path;
  kv["data.examples"] = std::to_string(c.n_examples);
  kv["data.separation"] = real(c.separation);
  kv["data.test_fraction"] = real(c.test_fraction);
  kv["data.quad.spread"] = real(c.quad_spread);
  kv["data.quad.curv_lo"] = real(c.quad_curv_lo);
  kv["data.quad.curv_hi"] = real(c.quad_curv_hi);
  kv["partition.clients"] = std::to_string(c.n_clients);
  kv["partition.skew"] = c.het.skew == SkewMode::iid ? "iid" : "dirichlet";
  kv["partition.alpha"] = real(c.het.alpha);
  kv["partition.balance"] =
      c.het.balance == BalanceMode::balanced ? "balanced" : "lognormal";
  kv["partition.sigma"] = real(c.het.sigma);
  kv["partition.validation_fraction"] = real(c.validation_fraction);
  kv["sample.fraction"] = real(c.sampler.fraction);
  kv["sample.count"] = std::to_string(c.sampler.count);
  std::string sched;
  for (const auto& [r, k] : c.sampler.pool_schedule) {
    if (!sched.empty()) sched += ",";
    sched += std::to_string(r) + ":" + std::to_string(k);
  }
  kv["sample.pool_schedule"] = sched.empty() ? "none" : sched;
  kv["aggregate.weighted"] = c.weighted_aggregation ? "on" : "off";
  kv["rounds"] = std::to_string(c.rounds);
  kv["local.epochs"] = std::to_string(c.local.epochs);
  kv["local.batch"] = std::to_string(c.local.batch_size);
  kv["schedule.eta0"] = real(c.schedule.eta0);
  kv["schedule.lr_decay"] = real(c.schedule.lr_decay);
  kv["schedule.plateau"] = c.schedule.plateau.enabled ? "on" : "off";
  kv["schedule.plateau.window"] = std::to_string(c.schedule.plateau.window);
  kv["schedule.plateau.rel_threshold"] = real(c.schedule.plateau.rel_threshold);
  kv["schedule.plateau.factor"] = real(c.schedule.plateau.factor);
  kv["seeds.partition"] = std::to_string(c.seed_partition);
  kv["seeds.init"] = std::to_string(c.seed_init);
  kv["seeds.sampling"] = std::to_string(c.seed_sampling);
  kv["init.scale"] = real(c.init_scale);
  kv["eval.interval"] = std::to_string(c.eval_interval);
  kv["trace"] = c.trace ? "on" : "off";
  kv["trace.stride"] = std::to_string(c.trace_stride);
  kv["convergence.tol"] = real(c.convergence_tol);
  kv["convergence.window"] = std::to_string(c.convergence_window);
  return kv;
}

// Reference-protocol presets. The adabest presets carry the experimental
// constants (eta0 0.1, decay 0.998, 5 local epochs, batch 45, mu 0.02,
// beta 0.96 for 10% / 0.98 for 100% participation, 90/10 train/validation
// client split).
inline std::map<std::string, KeyValues> presets() {
  std::map<std::string, KeyValues> p;
  const KeyValues protocol = {
      {"schedule.eta0", "0.1"},       {"schedule.lr_decay", "0.998"},
      {"local.epochs", "5"},          {"local.batch", "45"},
      {"partition.validation_fraction", "0.1"},
  };
  {
    KeyValues kv = protocol;
    kv["algorithm"] = "adabest";
    kv["algorithm.mu"] = "0.02";
    kv["algorithm.beta"] = "0.96";
    kv["sample.fraction"] = "0.10";
    kv["schedule.plateau"] = "on";
    kv["data"] = "synthetic";
    kv["model"] = "softmax";
    kv["partition.clients"] = "100";
    kv["partition.skew"] = "dirichlet";
    kv["partition.alpha"] = "0.3";
    kv["rounds"] = "400";
    p["adabest-10pct"] = kv;
  }
  {
    KeyValues kv = p["adabest-10pct"];
    kv["algorithm.beta"] = "0.98";
    kv["sample.fraction"] = "1.0";
    p["adabest-100pct"] = kv;
  }
  {
    KeyValues kv = protocol;
    kv["algorithm"] = "fedavg";
    kv["sample.fraction"] = "0.10";
    kv["data"] = "synthetic";
    kv["model"] = "softmax";
    kv["partition.clients"] = "100";
    kv["partition.skew"] = "dirichlet";
    kv["partition.alpha"] = "0.3";
    kv["rounds"] = "400";
    p["fedavg-10pct"] = kv;
  }
  {
    // desk-scale stand-in for the two-fully-connected-layer letters task
    KeyValues kv = protocol;
    kv["algorithm"] = "adabest";
    kv["algorithm.mu"] = "0.02";
    kv["algorithm.beta"] = "0.96";
    kv["sample.fraction"] = "0.10";
    kv["schedule.plateau"] = "on";
    kv["data"] = "synthetic";
    kv["data.examples"] = "6000";
    kv["model"] = "mlp";
    kv["model.hidden"] = "100";
    kv["model.classes"] = "10";
    kv["model.weight_decay"] = "0.0001";
    kv["partition.clients"] = "110";
    kv["partition.skew"] = "iid";
    kv["rounds"] = "300";
    p["emnist-l-like"] = kv;
  }
  {
    // low-participation long-horizon stability run on quadratics
    KeyValues kv;
    kv["algorithm"] = "feddyn";
    kv["algorithm.mu"] = "0.02";
    kv["data"] = "quadratic";
    kv["model"] = "quadratic";
    kv["model.input_dim"] = "4";
    kv["partition.clients"] = "200";
    kv["sample.count"] = "5";
    kv["rounds"] = "500";
    kv["schedule.eta0"] = "0.1";
    kv["schedule.lr_decay"] = "0.998";
    kv["local.epochs"] = "5";
    kv["local.batch"] = "45";
    kv["partition.validation_fraction"] = "0.1";
    p["stability-fig1-like"] = kv;
  }
  return p;
}

}  // namespace fedsim

#endif  // FEDSIM_CONFIG_HPP
