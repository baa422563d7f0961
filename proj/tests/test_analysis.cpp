// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "fedsim/analysis.hpp"
#include "fedsim/data.hpp"
#include "fedsim/rng.hpp"

using namespace fedsim;

TEST_CASE("power series examples") {
  CHECK(power_series_h({{1.0}}, 0.5) == ParamVector{0.5});
  const ParamVector h2 = power_series_h({{1.0}, {1.0}}, 0.5);
  CHECK(h2[0] == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(power_series_h({{3.0, -2.0}, {1.0, 1.0}}, 0.0) == zeros(2));
  CHECK_THROWS_AS(power_series_h({}, 0.5), data_error);
}

TEST_CASE("power series agrees with the recurrence") {
  Rng rng(31);
  const double betas[] = {0.2, 0.5, 0.9, 1.0};
  for (int trial = 0; trial < 100; ++trial) {
    const double beta = betas[trial % 4];
    const size_t len = 1 + rng.below(50);
    std::vector<ParamVector> hist;
    ParamVector h = zeros(16);
    for (size_t t = 0; t < len; ++t) {
      ParamVector g(16);
      for (double& v : g) v = rng.normal();
      h = scale(beta, add(h, g));
      hist.push_back(std::move(g));
    }
    const ParamVector series = power_series_h(hist, beta);
    CHECK(norm2(sub(series, h)) <= 1e-10 * std::max(1.0, norm2(h)));
  }
}

TEST_CASE("theorem-1 margin examples") {
  const double m1 = theorem1_margin({1.0, 0.0}, {-1.0, 0.0}, 1, 2);
  CHECK(m1 == doctest::Approx(-0.75).epsilon(1e-15));
  const double m2 = theorem1_margin({1.0, 0.0}, {1.0, 0.0}, 1, 2);
  CHECK(m2 > 0.0);
  CHECK(m2 == doctest::Approx(1.25).epsilon(1e-15));
  CHECK_THROWS_AS(theorem1_margin({0.0, 0.0}, {1.0, 0.0}, 1, 2), data_error);
}

TEST_CASE("margin sign predicts the one-step norm change") {
  Rng rng(17);
  for (int i = 0; i < 1000; ++i) {
    const size_t dim = 2 + rng.below(8);
    ParamVector h(dim), g(dim);
    for (double& v : h) v = rng.normal();
    for (double& v : g) v = rng.normal();
    const long s = 2 + static_cast<long>(rng.below(100));
    const long p = 1 + static_cast<long>(rng.below(static_cast<uint64_t>(s)));
    const double rho = static_cast<double>(p) / static_cast<double>(s);
    const double margin = theorem1_margin(h, g, p, s);
    const bool decreased = norm2(axpy(rho, g, h)) <= norm2(h);
    if (margin <= -1e-9) CHECK(decreased);
    if (margin >= 1e-9) CHECK(!decreased);
  }
}

TEST_CASE("client-side cost formulas match the tables") {
  const CostModel fa = client_cost(AlgorithmKind::fedavg);
  CHECK(fa.table_form == "K(g + ns + nm)");
  CHECK(fa.coeffs == std::map<std::string, long>{{"Kg", 1}, {"Kns", 1}, {"Knm", 1}});

  const CostModel ab = client_cost(AlgorithmKind::adabest);
  CHECK(ab.table_form == "K(g + ns + nm) + Kns + n(s+m)");
  CHECK(ab.coeffs == std::map<std::string, long>{
                         {"Kg", 1}, {"Kns", 2}, {"Knm", 1}, {"ns", 1}, {"nm", 1}});

  const CostModel fd = client_cost(AlgorithmKind::feddyn);
  CHECK(fd.table_form == "K(g + ns + nm) + 3Kns + Knm + n(s+m)");
  const CostModel sc = client_cost(AlgorithmKind::scaffold_m);
  CHECK(sc.table_form == "K(g + ns + nm) + 2Kns + 2n(s+m)");
}

TEST_CASE("server-side cost formulas match the tables") {
  CHECK(server_cost(AlgorithmKind::fedavg).table_form == "|P|ns");
  CHECK(server_cost(AlgorithmKind::scaffold_m).table_form ==
        "|P|ns + 2ns + 2nm");
  CHECK(server_cost(AlgorithmKind::feddyn).table_form == "|P|ns + 3ns + nm");
  const CostModel ab = server_cost(AlgorithmKind::adabest);
  CHECK(ab.table_form == "|P|ns + 2ns + nm");
  CHECK(ab.coeffs ==
        std::map<std::string, long>{{"Pns", 1}, {"ns", 2}, {"nm", 1}});
}

TEST_CASE("cost dominance") {
  // feddyn - adabest on the client side leaves 2Kns + Knm
  const auto dc = cost_difference(client_cost(AlgorithmKind::feddyn),
                                  client_cost(AlgorithmKind::adabest));
  CHECK(dc == std::map<std::string, long>{{"Kns", 2}, {"Knm", 1}});

  // scaffoldm - adabest on the server side leaves nm
  const auto ds = cost_difference(server_cost(AlgorithmKind::scaffold_m),
                                  server_cost(AlgorithmKind::adabest));
  CHECK(ds == std::map<std::string, long>{{"nm", 1}});

  // feddyn - adabest on the server side leaves ns
  const auto dfs = cost_difference(server_cost(AlgorithmKind::feddyn),
                                   server_cost(AlgorithmKind::adabest));
  CHECK(dfs == std::map<std::string, long>{{"ns", 1}});

  const DominanceReport rep = cost_dominance_check();
  CHECK(rep.all_pass);
  CHECK(rep.entries.size() == 10);
}

TEST_CASE("stationarity residual") {
  auto [probs, opt] = make_quadratic_federation(4, 3, 2.0, 0.5, 2.0, 3);
  CHECK(stationarity_residual(probs, opt) < 1e-10);

  std::vector<QuadraticProblem> one(1);
  one[0].a = Matrix::identity(2);
  one[0].center = {0.5, -0.5};
  CHECK(stationarity_residual(one, one[0].center) == 0.0);

  // linear in the perturbation: residual(opt + d) == ||mean A_i d||
  Rng rng(19);
  ParamVector d(3);
  for (double& v : d) v = rng.normal(0.0, 0.1);
  Matrix mean_a(3, 3);
  for (const auto& p : probs) mean_a = matadd(mean_a, p.a);
  mean_a = matscale(0.25, mean_a);
  const double expect = norm2(matvec(mean_a, d));
  const double got = stationarity_residual(probs, add(opt, d));
  CHECK(got == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("fedavg fixed point on a single client is its optimum") {
  std::vector<QuadraticProblem> one(1);
  one[0].a = Matrix::identity(2);
  one[0].center = {2.0, -3.0};
  const ParamVector fix = fedavg_fixed_point(one, 0.1, 5);
  CHECK(fix[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(fix[1] == doctest::Approx(-3.0).epsilon(1e-12));
}
