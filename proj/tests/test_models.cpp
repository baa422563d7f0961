// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "fedsim/data.hpp"
#include "fedsim/models.hpp"
#include "fedsim/rng.hpp"

using namespace fedsim;

namespace {

QuadraticProblem identity_problem(ParamVector center) {
  QuadraticProblem q;
  q.a = Matrix::identity(center.size());
  q.center = std::move(center);
  return q;
}

ModelSpec quad_spec(int dim, double wd = 0.0) {
  ModelSpec s;
  s.kind = ModelKind::quadratic;
  s.input_dim = dim;
  s.weight_decay = wd;
  return s;
}

double rel_l2(const ParamVector& a, const ParamVector& b) {
  return norm2(sub(a, b)) / std::max(1e-12, norm2(b));
}

}  // namespace

TEST_CASE("quadratic loss and gradient, analytic") {
  const QuadraticProblem q = identity_problem({0.0, 0.0});
  auto [loss, grad] = loss_and_grad(quad_spec(2), {1.0, 0.0}, Batch::of(q));
  CHECK(loss == 0.5);
  CHECK(grad == ParamVector{1.0, 0.0});

  const QuadraticProblem q2 = identity_problem({3.0, -1.0, 2.0});
  auto [l2, g2] = loss_and_grad(quad_spec(3), q2.center, Batch::of(q2));
  CHECK(l2 == 0.0);
  CHECK(g2 == ParamVector{0.0, 0.0, 0.0});
}

TEST_CASE("weight-decay gradient contribution is exactly wd * params") {
  const QuadraticProblem q = identity_problem({3.0, -1.0});
  const double wd = 1e-3;
  auto [loss, grad] = loss_and_grad(quad_spec(2, wd), q.center, Batch::of(q));
  (void)loss;
  // at theta = c the data gradient vanishes, leaving the decay term alone
  CHECK(grad == ParamVector{wd * 3.0, wd * -1.0});
}

TEST_CASE("finite differences on a quadratic are exact to 1e-8") {
  const QuadraticProblem q = identity_problem({0.0});
  const ParamVector fd = finite_diff_grad(quad_spec(1), {2.0}, Batch::of(q), 1e-6);
  CHECK(std::abs(fd[0] - 2.0) <= 1e-8);
}

TEST_CASE("softmax gradient matches central differences") {
  const Dataset data = make_synthetic_classification(3, 4, 10, 2.0, 5);
  const std::vector<uint32_t> idx = all_indices(data);
  ModelSpec spec;
  spec.kind = ModelKind::softmax_regression;
  spec.input_dim = 4;
  spec.n_classes = 3;
  spec.weight_decay = 1e-4;
  Rng rng(7);
  ParamVector p(spec.param_dim());
  for (double& v : p) v = rng.normal(0.0, 0.5);
  auto [loss, grad] = loss_and_grad(spec, p, Batch::of(data, idx));
  (void)loss;
  const ParamVector fd = finite_diff_grad(spec, p, Batch::of(data, idx), 1e-6);
  CHECK(rel_l2(grad, fd) < 1e-5);
}

TEST_CASE("one-unit mlp matches central differences") {
  Dataset data;
  data.n = 6;
  data.dim = 1;
  data.x = {0.3, -1.2, 0.8, 2.0, -0.5, 0.1};
  data.y = {0, 1, 0, 0, 1, 1};
  const std::vector<uint32_t> idx = all_indices(data);
  ModelSpec spec;
  spec.kind = ModelKind::mlp;
  spec.input_dim = 1;
  spec.n_classes = 2;
  spec.hidden = 1;
  spec.weight_decay = 1e-3;
  Rng rng(11);
  ParamVector p(spec.param_dim());
  for (double& v : p) v = rng.normal(0.0, 0.7);
  auto [loss, grad] = loss_and_grad(spec, p, Batch::of(data, idx));
  (void)loss;
  const ParamVector fd = finite_diff_grad(spec, p, Batch::of(data, idx), 1e-6);
  CHECK(rel_l2(grad, fd) < 1e-5);
}

TEST_CASE("finite-difference error is non-increasing from 1e-4 to 1e-6") {
  const Dataset data = make_synthetic_classification(3, 4, 12, 2.0, 6);
  const std::vector<uint32_t> idx = all_indices(data);
  ModelSpec spec;
  spec.kind = ModelKind::softmax_regression;
  spec.input_dim = 4;
  spec.n_classes = 3;
  Rng rng(8);
  ParamVector p(spec.param_dim());
  for (double& v : p) v = rng.normal(0.0, 0.5);
  auto [loss, grad] = loss_and_grad(spec, p, Batch::of(data, idx));
  (void)loss;
  const double e4 =
      rel_l2(finite_diff_grad(spec, p, Batch::of(data, idx), 1e-4), grad);
  const double e6 =
      rel_l2(finite_diff_grad(spec, p, Batch::of(data, idx), 1e-6), grad);
  CHECK(e6 <= e4);
}

TEST_CASE("loss_and_grad is deterministic") {
  const Dataset data = make_synthetic_classification(3, 4, 10, 2.0, 9);
  const std::vector<uint32_t> idx = all_indices(data);
  ModelSpec spec;
  spec.kind = ModelKind::softmax_regression;
  spec.input_dim = 4;
  spec.n_classes = 3;
  Rng rng(10);
  ParamVector p(spec.param_dim());
  for (double& v : p) v = rng.normal();
  auto [l1, g1] = loss_and_grad(spec, p, Batch::of(data, idx));
  auto [l2, g2] = loss_and_grad(spec, p, Batch::of(data, idx));
  CHECK(l1 == l2);
  CHECK(g1 == g2);
}

TEST_CASE("evaluate: separable task, random baseline, quadratic optimum") {
  // strongly separated 2-class task classified perfectly by a trained model
  const Dataset data = make_synthetic_classification(2, 3, 400, 12.0, 21);
  const std::vector<uint32_t> idx = all_indices(data);
  ModelSpec spec;
  spec.kind = ModelKind::softmax_regression;
  spec.input_dim = 3;
  spec.n_classes = 2;
  ParamVector p(spec.param_dim(), 0.0);
  for (int it = 0; it < 300; ++it) {
    auto [loss, grad] = loss_and_grad(spec, p, Batch::of(data, idx));
    (void)loss;
    p = axpy(-0.5, grad, p);
  }
  auto [loss, acc] = evaluate(spec, p, Batch::of(data, idx));
  (void)loss;
  CHECK(acc == 1.0);

  // uniform-random parameters sit near chance level on 10 classes
  const Dataset wide = make_synthetic_classification(10, 6, 6000, 3.0, 22);
  const std::vector<uint32_t> widx = all_indices(wide);
  ModelSpec wspec;
  wspec.kind = ModelKind::softmax_regression;
  wspec.input_dim = 6;
  wspec.n_classes = 10;
  double mean_acc = 0.0;
  const int trials = 10;
  for (int t = 0; t < trials; ++t) {
    Rng rng(100 + t);
    ParamVector rp(wspec.param_dim());
    for (double& v : rp) v = rng.normal(0.0, 0.5);
    mean_acc += evaluate(wspec, rp, Batch::of(wide, widx)).second;
  }
  mean_acc /= trials;
  CHECK(mean_acc == doctest::Approx(0.1).epsilon(0.5));
  CHECK(std::abs(mean_acc - 0.1) < 0.05);

  const QuadraticProblem q = identity_problem({1.0, 2.0});
  auto [qloss, qacc] = evaluate(quad_spec(2), q.center, Batch::of(q));
  CHECK(qloss == 0.0);
  CHECK(qacc == 0.0);

  Dataset empty;
  CHECK_THROWS_AS(evaluate(wspec, ParamVector(wspec.param_dim(), 0.0),
                           Batch::of(empty, {})),
                  data_error);
}

TEST_CASE("dataset text loader round-trips and rejects garbage") {
  const std::string path = "fedsim_test_dataset.txt";
  {
    std::ofstream out(path);
    out << "# comment line\n";
    out << "0 1.5 -2.0\n";
    out << "1 0.25 3.75\n";
    out << "\n";
    out << "0 -1.0 0.0\n";
  }
  const Dataset d = load_dataset(path);
  CHECK(d.n == 3);
  CHECK(d.dim == 2);
  CHECK(d.y == std::vector<int>{0, 1, 0});
  CHECK(d.x[2] == 0.25);
  std::remove(path.c_str());

  {
    std::ofstream out(path);
    out << "0 1.0 2.0\n0 1.0\n";
  }
  CHECK_THROWS_AS(load_dataset(path), data_error);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_dataset("no_such_file.txt"), data_error);
}

TEST_CASE("dimension mismatch is rejected") {
  const QuadraticProblem q = identity_problem({0.0, 0.0});
  CHECK_THROWS_AS(loss_and_grad(quad_spec(2), {1.0}, Batch::of(q)),
                  dimension_error);
}
