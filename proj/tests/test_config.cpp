// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "fedsim/config.hpp"

using namespace fedsim;

TEST_CASE("minimal config resolves with documented defaults") {
  const ExperimentConfig c = make_config({{"algorithm", "fedavg"},
                                          {"model", "quadratic"},
                                          {"model.input_dim", "3"},
                                          {"data", "quadratic"},
                                          {"rounds", "10"}});
  CHECK(c.rounds == 10);
  CHECK(c.schedule.eta0 == 0.1);
  CHECK(c.schedule.lr_decay == 0.998);
  CHECK(c.local.epochs == 5);
  CHECK(c.local.batch_size == 45);
  CHECK(c.validation_fraction == 0.1);
  // every key shows up in the resolved view
  const KeyValues kv = resolved_keys(c);
  for (const char* key :
       {"algorithm", "algorithm.mu", "algorithm.beta", "rounds",
        "schedule.eta0", "schedule.lr_decay", "seeds.partition", "seeds.init",
        "seeds.sampling", "partition.validation_fraction", "local.epochs",
        "local.batch", "sample.fraction", "eval.interval"}) {
    CHECK(kv.count(key) == 1);
  }
}

TEST_CASE("beta outside [0,1] is rejected with the field name") {
  try {
    make_config({{"algorithm", "adabest"}, {"algorithm.beta", "1.5"}});
    FAIL("expected config_error");
  } catch (const config_error& e) {
    CHECK(e.field == "algorithm.beta");
    CHECK(std::string(e.what()).find("[0,1]") != std::string::npos);
  }
}

TEST_CASE("unknown keys are rejected in strict mode") {
  CHECK_THROWS_AS(make_config({{"algorithm", "fedavg"}, {"bogus.key", "1"}}),
                  config_error);
}

TEST_CASE("type errors name the offending field") {
  try {
    make_config({{"rounds", "ten"}});
    FAIL("expected config_error");
  } catch (const config_error& e) {
    CHECK(e.field == "rounds");
  }
}

TEST_CASE("config file parsing with comments and overrides") {
  const std::string path = "fedsim_test_config.txt";
  {
    std::ofstream out(path);
    out << "# a comment\n";
    out << "algorithm = adabest\n";
    out << "algorithm.mu=0.02   # trailing comment\n";
    out << "algorithm.beta = 0.96\n";
    out << "rounds=7\n";
    out << "rounds=9\n";  // later duplicate wins
  }
  KeyValues kv = read_config_file(path);
  std::remove(path.c_str());
  CHECK(kv["algorithm"] == "adabest");
  CHECK(kv["algorithm.mu"] == "0.02");
  CHECK(kv["rounds"] == "9");
  const ExperimentConfig c = make_config(kv);
  CHECK(c.rounds == 9);
  CHECK(c.algorithm.beta == 0.96);
}

TEST_CASE("pool schedule parsing") {
  const ExperimentConfig c = make_config(
      {{"algorithm", "fedavg"}, {"sample.pool_schedule", "5:3,9:2"},
       {"sample.count", "2"}});
  REQUIRE(c.sampler.pool_schedule.size() == 2);
  CHECK(c.sampler.pool_schedule[0] == std::pair<long, long>{5, 3});
  CHECK(c.sampler.pool_schedule[1] == std::pair<long, long>{9, 2});
  CHECK_THROWS_AS(
      make_config({{"algorithm", "fedavg"}, {"sample.pool_schedule", "5-3"}}),
      config_error);
}

TEST_CASE("reference-protocol presets carry the experimental constants") {
  const auto all = presets();
  REQUIRE(all.count("adabest-10pct") == 1);
  REQUIRE(all.count("adabest-100pct") == 1);

  const ExperimentConfig p10 = make_config(all.at("adabest-10pct"));
  CHECK(p10.algorithm.kind == AlgorithmKind::adabest);
  CHECK(p10.algorithm.mu == 0.02);
  CHECK(p10.algorithm.beta == 0.96);
  CHECK(p10.sampler.fraction == 0.10);
  CHECK(p10.schedule.eta0 == 0.1);
  CHECK(p10.schedule.lr_decay == 0.998);
  CHECK(p10.local.epochs == 5);
  CHECK(p10.local.batch_size == 45);
  CHECK(p10.validation_fraction == 0.1);

  const ExperimentConfig p100 = make_config(all.at("adabest-100pct"));
  CHECK(p100.algorithm.beta == 0.98);
  CHECK(p100.sampler.fraction == 1.0);
  CHECK(p100.algorithm.mu == 0.02);

  // every preset must validate
  for (const auto& [name, kv] : all) {
    CHECK_NOTHROW(make_config(kv));
  }
}

TEST_CASE("quadratic source pairs with the quadratic model") {
  CHECK_THROWS_AS(make_config({{"algorithm", "fedavg"},
                               {"data", "quadratic"},
                               {"model", "softmax"}}),
                  config_error);
  CHECK_THROWS_AS(make_config({{"algorithm", "fedavg"},
                               {"data", "synthetic"},
                               {"model", "quadratic"}}),
                  config_error);
}
