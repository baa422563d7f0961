// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "fedsim/fedcore.hpp"
#include "fedsim/rng.hpp"

using namespace fedsim;

namespace {

constexpr AlgorithmSpec kFedAvg{AlgorithmKind::fedavg, 0.0, 0.0};

ParamVector random_vec(Rng& rng, size_t dim, double s = 1.0) {
  ParamVector v(dim);
  for (double& x : v) x = rng.normal(0.0, s);
  return v;
}

}  // namespace

TEST_CASE("local_gradient per algorithm") {
  const ParamVector raw{1.0, 2.0};
  const ParamVector zero2 = zeros(2);
  CHECK(local_gradient(kFedAvg, raw, zero2, zero2, zero2, zero2) == raw);

  AlgorithmSpec ada{AlgorithmKind::adabest, 0.02, 0.9};
  const ParamVector g =
      local_gradient(ada, {1.0, 0.0}, {0.5, 0.5}, zero2, zero2, zero2);
  CHECK(g[0] == doctest::Approx(0.99).epsilon(1e-15));
  CHECK(g[1] == doctest::Approx(-0.01).epsilon(1e-15));

  AlgorithmSpec dyn{AlgorithmKind::feddyn, 0.1, 0.0};
  const ParamVector start{1.0, 1.0};
  CHECK(local_gradient(dyn, {1.0, 0.0}, zero2, zero2, start, start) ==
        ParamVector{1.0, 0.0});

  AlgorithmSpec sc{AlgorithmKind::scaffold_m, 0.0, 0.0};
  const ParamVector gs =
      local_gradient(sc, {1.0, 0.0}, {0.25, 0.0}, {0.0, 0.5}, zero2, zero2);
  CHECK(gs == ParamVector{0.75, 0.5});

  CHECK_THROWS_AS(
      local_gradient(ada, {1.0}, {0.5, 0.5}, zero2, zero2, zero2),
      dimension_error);
}

TEST_CASE("run_local basics on a quadratic") {
  QuadraticProblem q;
  q.a = Matrix::identity(2);
  q.center = {0.0, 0.0};
  ModelSpec spec;
  spec.kind = ModelKind::quadratic;
  spec.input_dim = 2;
  ClientState c;
  c.id = 0;
  c.h = zeros(2);
  Rng rng(1);

  SUBCASE("eta = 0 leaves parameters untouched") {
    LocalRunConfig cfg{0.0, 5, 45};
    const auto r = run_local(kFedAvg, c, {1.0, 0.0}, cfg, spec, nullptr, {},
                             &q, zeros(2), rng, 1);
    CHECK(r.theta_out == ParamVector{1.0, 0.0});
    CHECK(r.pseudo_gradient == ParamVector{0.0, 0.0});
  }

  SUBCASE("one full-batch step matches the analytic update") {
    LocalRunConfig cfg{0.1, 1, 45};
    const auto r = run_local(kFedAvg, c, {1.0, 0.0}, cfg, spec, nullptr, {},
                             &q, zeros(2), rng, 1);
    CHECK(r.theta_out[0] == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(r.theta_out[1] == 0.0);
    CHECK(r.pseudo_gradient[0] == doctest::Approx(0.1).epsilon(1e-15));
  }

  SUBCASE("long local runs converge to the client optimum") {
    QuadraticProblem q2;
    q2.a = Matrix::identity(2);
    q2.center = {2.0, -3.0};
    LocalRunConfig cfg{0.1, 500, 45};
    const auto r = run_local(kFedAvg, c, {1.0, 0.0}, cfg, spec, nullptr, {},
                             &q2, zeros(2), rng, 1);
    CHECK(norm2(sub(r.theta_out, q2.center)) < 1e-6);
  }
}

TEST_CASE("update_client_estimate per algorithm") {
  const RoundSizes sizes{10, 5, 4, 0.1};
  const ParamVector gstep{0.0, 0.0};

  AlgorithmSpec ada{AlgorithmKind::adabest, 0.02, 0.9};
  const ParamVector h1 = update_client_estimate(ada, {1.0, 1.0}, {2.0, 2.0},
                                                5, 3, sizes, gstep);
  CHECK(h1[0] == doctest::Approx(0.54).epsilon(1e-15));
  CHECK(h1[1] == doctest::Approx(0.54).epsilon(1e-15));

  const ParamVector h2 = update_client_estimate(ada, zeros(2), {1.0, 0.0},
                                                1, 0, sizes, gstep);
  CHECK(h2[0] == doctest::Approx(0.02).epsilon(1e-15));
  CHECK(h2[1] == 0.0);

  AlgorithmSpec dyn{AlgorithmKind::feddyn, 0.02, 0.0};
  const ParamVector h3 = update_client_estimate(dyn, {1.0, 0.0}, {1.0, 1.0},
                                                7, 2, sizes, gstep);
  CHECK(h3[0] == doctest::Approx(1.02).epsilon(1e-15));
  CHECK(h3[1] == doctest::Approx(0.02).epsilon(1e-15));

  // scaffoldm uses the global displacement and the registered-set weights
  AlgorithmSpec sc{AlgorithmKind::scaffold_m, 0.0, 0.0};
  const ParamVector h4 = update_client_estimate(sc, {1.0, 0.0}, {9.0, 9.0},
                                                3, 1, sizes, {0.4, 0.0});
  // (9/10)*1 + (5/(4*0.1*10))*0.4 = 0.9 + 0.5
  CHECK(h4[0] == doctest::Approx(1.4).epsilon(1e-12));
  CHECK(h4[1] == 0.0);

  CHECK(update_client_estimate(kFedAvg, {1.0, 1.0}, {1.0, 1.0}, 2, 1, sizes,
                               gstep) == zeros(2));
  CHECK_THROWS_AS(update_client_estimate(ada, zeros(2), zeros(2), 3, 3, sizes,
                                         gstep),
                  invariant_error);
}

TEST_CASE("aggregate and the averaging identity") {
  CHECK(aggregate({{1.0, 2.0}, {3.0, 4.0}}) == ParamVector{2.0, 3.0});

  Rng rng(5);
  const ParamVector theta_prev = random_vec(rng, 6);
  SUBCASE("no-progress round") {
    const std::vector<ParamVector> models(4, theta_prev);
    const ParamVector bar = aggregate(models);
    std::vector<ParamVector> pseudo;
    for (const auto& m : models) pseudo.push_back(sub(theta_prev, m));
    const ParamVector gbar = mean_of(pseudo);
    CHECK(norm2(gbar) == 0.0);
    CHECK(max_abs(sub(bar, theta_prev)) <= 1e-12);
  }
  SUBCASE("random models satisfy theta_prev - gbar == aggregate to 1e-12") {
    std::vector<ParamVector> models;
    std::vector<ParamVector> pseudo;
    for (int i = 0; i < 5; ++i) {
      models.push_back(random_vec(rng, 6));
      pseudo.push_back(sub(theta_prev, models.back()));
    }
    const ParamVector bar = aggregate(models);
    const ParamVector gbar = mean_of(pseudo);
    CHECK(max_abs(sub(bar, sub(theta_prev, gbar))) <= 1e-12);
    check_aggregate_identity(theta_prev, bar, gbar, 1);  // must not throw
  }
  CHECK_THROWS_AS(aggregate({}), dimension_error);
}

TEST_CASE("update_server_estimate per algorithm") {
  const RoundSizes full{9, 9, 4, 0.1};

  AlgorithmSpec ada{AlgorithmKind::adabest, 0.02, 0.5};
  const ParamVector h = update_server_estimate(
      ada, zeros(2), zeros(2), {1.0, 1.0}, {0.5, 0.75}, full);
  CHECK(h[0] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(h[1] == doctest::Approx(0.125).epsilon(1e-15));

  AlgorithmSpec ada0{AlgorithmKind::adabest, 0.02, 0.0};
  CHECK(update_server_estimate(ada0, {5.0, 5.0}, zeros(2), {1.0, 1.0},
                               {0.5, 0.75}, full) == zeros(2));

  CHECK(update_server_estimate(kFedAvg, {5.0, 5.0}, zeros(2), {1.0, 1.0},
                               {0.5, 0.75}, full) == zeros(2));

  SUBCASE("adabest at beta=1 equals feddyn at full participation") {
    Rng rng(9);
    AlgorithmSpec ada1{AlgorithmKind::adabest, 0.02, 1.0};
    AlgorithmSpec dyn{AlgorithmKind::feddyn, 0.02, 0.0};
    for (int trial = 0; trial < 50; ++trial) {
      const ParamVector h_prev = random_vec(rng, 5);
      const ParamVector theta_bar_prev = random_vec(rng, 5);
      const ParamVector theta_bar = random_vec(rng, 5);
      // consistent cloud state: theta_prev = theta_bar_prev - h_prev
      const ParamVector theta_prev = sub(theta_bar_prev, h_prev);
      const ParamVector ha = update_server_estimate(
          ada1, h_prev, theta_prev, theta_bar_prev, theta_bar, full);
      const ParamVector hd = update_server_estimate(
          dyn, h_prev, theta_prev, theta_bar_prev, theta_bar, full);
      CHECK(max_abs(sub(ha, hd)) <= 1e-12);
    }
  }

  SUBCASE("scaffoldm recursion") {
    const RoundSizes sizes{10, 5, 4, 0.1};
    AlgorithmSpec sc{AlgorithmKind::scaffold_m, 0.0, 0.0};
    const ParamVector hs = update_server_estimate(
        sc, {1.0, 0.0}, {0.4, 0.0}, zeros(2), zeros(2), sizes);
    // (9/10)*1 + (5/(4*0.1*10))*0.4 = 1.4
    CHECK(hs[0] == doctest::Approx(1.4).epsilon(1e-12));
  }

  RoundSizes bad{9, 0, 4, 0.1};
  CHECK_THROWS_AS(update_server_estimate(ada, zeros(2), zeros(2), zeros(2),
                                         zeros(2), bad),
                  invariant_error);
}

TEST_CASE("cloud_update per algorithm") {
  AlgorithmSpec ada{AlgorithmKind::adabest, 0.0, 0.5};
  const ParamVector t1 = cloud_update(ada, {2.0, 3.0}, {0.25, 0.125});
  CHECK(t1[0] == doctest::Approx(1.75).epsilon(1e-15));
  CHECK(t1[1] == doctest::Approx(2.875).epsilon(1e-15));

  AlgorithmSpec sc{AlgorithmKind::scaffold_m, 0.0, 0.0};
  CHECK(cloud_update(sc, {2.0, 3.0}, {9.0, 9.0}) == ParamVector{2.0, 3.0});

  for (AlgorithmKind k : {AlgorithmKind::fedavg, AlgorithmKind::scaffold_m,
                          AlgorithmKind::feddyn, AlgorithmKind::adabest}) {
    AlgorithmSpec s{k, 0.0, 0.0};
    CHECK(cloud_update(s, {1.5, -2.5}, zeros(2)) == ParamVector{1.5, -2.5});
  }
}

TEST_CASE("transition functions are pure") {
  Rng rng(13);
  AlgorithmSpec ada{AlgorithmKind::adabest, 0.02, 0.9};
  const ParamVector h_prev = random_vec(rng, 4);
  const ParamVector tb_prev = random_vec(rng, 4);
  const ParamVector tb = random_vec(rng, 4);
  const RoundSizes sizes{10, 5, 4, 0.1};
  const ParamVector a = update_server_estimate(ada, h_prev, zeros(4), tb_prev,
                                               tb, sizes);
  const ParamVector b = update_server_estimate(ada, h_prev, zeros(4), tb_prev,
                                               tb, sizes);
  CHECK(a == b);
}
