// SPDX-License-Identifier: Apache-2.0

#ifndef FEDSIM_ANALYSIS_HPP
#define FEDSIM_ANALYSIS_HPP

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "fedsim/errors.hpp"
#include "fedsim/fedcore.hpp"
#include "fedsim/linalg.hpp"
#include "fedsim/models.hpp"

namespace fedsim {

// Direct power-series evaluation of the oracle-gradient estimate:
//   h^t = sum_{tau=1..t} beta^(t-tau+1) gbar^tau
// computed without the recurrence, Kahan-compensated per component; plain
// summation drifts past the 1e-10 agreement tolerance at length-50 histories.
inline ParamVector power_series_h(const std::vector<ParamVector>& g_bar_history,
                                  double beta) {
  if (g_bar_history.empty()) {
    throw data_error("power_series_h: empty history");
  }
  const size_t dim = g_bar_history.front().size();
  const size_t t = g_bar_history.size();
  ParamVector sum(dim, 0.0);
  ParamVector comp(dim, 0.0);
  for (size_t tau = 1; tau <= t; ++tau) {
    const ParamVector& g = g_bar_history[tau - 1];
    require_same_dim(g, sum, "power_series_h");
    const double w = std::pow(beta, static_cast<double>(t - tau + 1));
    for (size_t k = 0; k < dim; ++k) {
      const double y = w * g[k] - comp[k];
      const double s = sum[k] + y;
      comp[k] = (s - sum[k]) - y;
      sum[k] = s;
    }
  }
  return sum;
}

// Margin of the FedDyn norm-decrease condition:
//   cos(h_prev, g_bar) - ( -(|P|/(2|S|)) ||g_bar|| / ||h_prev|| ).
// Negative margin means a one-step norm decrease is possible; the sign
// predicts ||h_prev + (|P|/|S|) g_bar|| <= ||h_prev|| exactly.
inline double theorem1_margin(const ParamVector& h_prev,
                              const ParamVector& g_bar, long p_count,
                              long s_count) {
  const double nh = norm2(h_prev);
  const double ng = norm2(g_bar);
  if (nh == 0.0 || ng == 0.0) {
    throw data_error("theorem1_margin: zero-norm input");
  }
  const double bound = -(static_cast<double>(p_count) /
                         (2.0 * static_cast<double>(s_count))) *
                       ng / nh;
  return cos_angle(h_prev, g_bar) - bound;
}

// Mean full-gradient norm of the summed quadratic objective at theta.
inline double stationarity_residual(const std::vector<QuadraticProblem>& probs,
                                    const ParamVector& theta) {
  if (probs.empty()) throw data_error("stationarity_residual: no problems");
  ParamVector sum(theta.size(), 0.0);
  for (const auto& p : probs) {
    ParamVector g = matvec(p.a, sub(theta, p.center));
    for (size_t k = 0; k < sum.size(); ++k) sum[k] += g[k];
  }
  return norm2(sum) / static_cast<double>(probs.size());
}

// Closed-form fixed point of FedAvg on a quadratic federation with constant
// step size: theta = mean_i [ c_i + B_i (theta - c_i) ], B_i = (I - eta A_i)^K.
inline ParamVector fedavg_fixed_point(const std::vector<QuadraticProblem>& probs,
                                      double eta, unsigned k_steps) {
  const size_t dim = probs.front().center.size();
  Matrix b_bar(dim, dim);
  ParamVector rhs(dim, 0.0);
  for (const auto& p : probs) {
    Matrix b = matpow(matadd(Matrix::identity(dim), matscale(-eta, p.a)),
                      k_steps);
    b_bar = matadd(b_bar, b);
    ParamVector v = sub(p.center, matvec(b, p.center));  // (I - B) c
    for (size_t i = 0; i < dim; ++i) rhs[i] += v[i];
  }
  const double inv = 1.0 / static_cast<double>(probs.size());
  b_bar = matscale(inv, b_bar);
  for (double& v : rhs) v *= inv;
  return solve(matadd(Matrix::identity(dim), matscale(-1.0, b_bar)), rhs);
}

// ---------------------------------------------------------------------------
// Symbolic operation counts. Monomial vocabulary over
//   g: mini-batch gradient cost, s: scalar add, m: scalar multiply,
//   n: parameter count, K: local steps, P: participants per round.
// ---------------------------------------------------------------------------

struct CostModel {
  std::map<std::string, long> coeffs;  // monomial -> coefficient
  std::string table_form;              // factored rendering

  long coeff(const std::string& mono) const {
    auto it = coeffs.find(mono);
    return it == coeffs.end() ? 0 : it->second;
  }
};

inline CostModel client_cost(AlgorithmKind kind) {
  CostModel c;
  switch (kind) {
    case AlgorithmKind::fedavg:
      c.coeffs = {{"Kg", 1}, {"Kns", 1}, {"Knm", 1}};
      c.table_form = "K(g + ns + nm)";
      break;
    case AlgorithmKind::scaffold_m:
      c.coeffs = {{"Kg", 1}, {"Kns", 3}, {"Knm", 1}, {"ns", 2}, {"nm", 2}};
      c.table_form = "K(g + ns + nm) + 2Kns + 2n(s+m)";
      break;
    case AlgorithmKind::feddyn:
      c.coeffs = {{"Kg", 1}, {"Kns", 4}, {"Knm", 2}, {"ns", 1}, {"nm", 1}};
      c.table_form = "K(g + ns + nm) + 3Kns + Knm + n(s+m)";
      break;
    case AlgorithmKind::adabest:
      c.coeffs = {{"Kg", 1}, {"Kns", 2}, {"Knm", 1}, {"ns", 1}, {"nm", 1}};
      c.table_form = "K(g + ns + nm) + Kns + n(s+m)";
      break;
  }
  return c;
}

inline CostModel server_cost(AlgorithmKind kind) {
  CostModel c;
  switch (kind) {
    case AlgorithmKind::fedavg:
      c.coeffs = {{"Pns", 1}};
      c.table_form = "|P|ns";
      break;
    case AlgorithmKind::scaffold_m:
      c.coeffs = {{"Pns", 1}, {"ns", 2}, {"nm", 2}};
      c.table_form = "|P|ns + 2ns + 2nm";
      break;
    case AlgorithmKind::feddyn:
      c.coeffs = {{"Pns", 1}, {"ns", 3}, {"nm", 1}};
      c.table_form = "|P|ns + 3ns + nm";
      break;
    case AlgorithmKind::adabest:
      c.coeffs = {{"Pns", 1}, {"ns", 2}, {"nm", 1}};
      c.table_form = "|P|ns + 2ns + nm";
      break;
  }
  return c;
}

// lhs - rhs over the union of monomials.
inline std::map<std::string, long> cost_difference(const CostModel& lhs,
                                                   const CostModel& rhs) {
  std::map<std::string, long> d = lhs.coeffs;
  for (const auto& [mono, coef] : rhs.coeffs) d[mono] -= coef;
  for (auto it = d.begin(); it != d.end();) {
    it = it->second == 0 ? d.erase(it) : std::next(it);
  }
  return d;
}

// lhs <= rhs for every positive assignment of the symbols, i.e. the
// coefficient difference is non-negative monomial by monomial.
inline bool cost_dominated_by(const CostModel& lhs, const CostModel& rhs) {
  for (const auto& [mono, coef] : cost_difference(rhs, lhs)) {
    (void)mono;
    if (coef < 0) return false;
  }
  return true;
}

struct DominanceReport {
  struct Entry {
    std::string name;
    bool dominated;
    std::map<std::string, long> difference;  // rhs - lhs, expected >= 0
  };
  std::vector<Entry> entries;
  bool all_pass = true;
};

// Verifies the claimed cost ordering: AdaBest below FedDyn and SCAFFOLD/m on
// both sides, FedAvg below everything.
inline DominanceReport cost_dominance_check() {
  DominanceReport rep;
  auto add = [&rep](const std::string& name, const CostModel& lo,
                    const CostModel& hi) {
    DominanceReport::Entry e;
    e.name = name;
    e.difference = cost_difference(hi, lo);
    e.dominated = cost_dominated_by(lo, hi);
    rep.all_pass = rep.all_pass && e.dominated;
    rep.entries.push_back(std::move(e));
  };
  add("adabest<=feddyn/client", client_cost(AlgorithmKind::adabest),
      client_cost(AlgorithmKind::feddyn));
  add("adabest<=scaffoldm/client", client_cost(AlgorithmKind::adabest),
      client_cost(AlgorithmKind::scaffold_m));
  add("adabest<=feddyn/server", server_cost(AlgorithmKind::adabest),
      server_cost(AlgorithmKind::feddyn));
  add("adabest<=scaffoldm/server", server_cost(AlgorithmKind::adabest),
      server_cost(AlgorithmKind::scaffold_m));
  for (AlgorithmKind k : {AlgorithmKind::scaffold_m, AlgorithmKind::feddyn,
                          AlgorithmKind::adabest}) {
    add(std::string("fedavg<=") + to_string(k) + "/client",
        client_cost(AlgorithmKind::fedavg), client_cost(k));
    add(std::string("fedavg<=") + to_string(k) + "/server",
        server_cost(AlgorithmKind::fedavg), server_cost(k));
  }
  return rep;
}

// Optional per-round snapshots for oracle replay.
struct TraceRecord {
  long round = 0;
  ParamVector g_bar;
  ParamVector h;
  ParamVector theta;
  ParamVector theta_bar;
};

}  // namespace fedsim

#endif  // FEDSIM_ANALYSIS_HPP
