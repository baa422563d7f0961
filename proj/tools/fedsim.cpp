// SPDX-License-Identifier: Apache-2.0
//
// fedsim — deterministic federated-optimization simulator.
//   fedsim run --config <path> [--set k=v ...] [--out <dir>] [--sweep seed=a..b]
//   fedsim verify <suite>
//   fedsim presets

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedsim/csv.hpp"
#include "fedsim/experiment.hpp"
#include "fedsim/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitVerify = 4;

void apply_overrides(fedsim::KeyValues& kv,
                     const std::vector<std::string>& sets) {
  for (const std::string& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw fedsim::config_error("--set", "expected key=value, got '" + s + "'");
    }
    kv[s.substr(0, eq)] = s.substr(eq + 1);
  }
}

void write_sidecar(const std::string& path, const fedsim::KeyValues& kv) {
  std::ofstream out(path);
  for (const auto& [k, v] : kv) {
    nlohmann::json line;
    line["key"] = k;
    line["value"] = v;
    out << line.dump() << "\n";
  }
}

int run_one(const fedsim::KeyValues& kv, const std::string& out_dir,
            const std::string& suffix) {
  const fedsim::ExperimentConfig cfg = fedsim::make_config(kv);
  fedsim::RunResult result = fedsim::run_experiment_tolerant(cfg);
  const int code = result.aborted_round == 0 ? kExitOk : kExitNumeric;
  const std::string abort_note =
      code == kExitOk ? ""
                      : "numeric abort at round " +
                            std::to_string(result.aborted_round) + ": " +
                            result.abort_message;

  std::ostream* os = &std::cout;
  std::ofstream file;
  std::string csv_path;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    csv_path = out_dir + "/metrics" + suffix + ".csv";
    file.open(csv_path);
    os = &file;
    write_sidecar(out_dir + "/config" + suffix + ".jsonl",
                  fedsim::resolved_keys(cfg));
    if (!result.partition.clients.empty()) {
      std::ofstream mf(out_dir + "/partition" + suffix + ".txt");
      fedsim::write_manifest(mf, result.partition);
    }
  }
  fedsim::write_csv(*os, result.log);  // partial log is flushed on abort
  if (code != kExitOk) {
    std::cerr << "fedsim: " << abort_note << "\n";
    return code;
  }
  if (!csv_path.empty()) {
    std::cerr << "wrote " << csv_path << " (" << result.log.size()
              << " rounds)\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deterministic federated optimization simulator"};
  app.require_subcommand(1);

  auto* run_cmd = app.add_subcommand("run", "run one experiment (or a sweep)");
  std::string config_path;
  std::string preset_name;
  std::string out_dir;
  std::string sweep;
  std::vector<std::string> sets;
  run_cmd->add_option("--config", config_path, "flat key=value config file");
  run_cmd->add_option("--preset", preset_name,
                      "start from a named preset (see `fedsim presets`)");
  run_cmd->add_option("--set", sets, "override config entries (key=value)");
  run_cmd->add_option("--out", out_dir, "output directory for CSV + sidecar");
  run_cmd->add_option("--sweep", sweep,
                      "repeat over a seed range, e.g. seed=1..5 "
                      "(varies the partition seed)");

  auto* verify_cmd =
      app.add_subcommand("verify", "run a verification-oracle suite");
  std::string suite;
  verify_cmd->add_option("suite", suite,
                         "remarks|theorem1|theorem2|costs|gradients|all")
      ->required();

  auto* presets_cmd = app.add_subcommand("presets", "list preset configs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (presets_cmd->parsed()) {
      for (const auto& [name, kv] : fedsim::presets()) {
        std::cout << name << "\n";
        for (const auto& [k, v] : kv) {
          std::cout << "  " << k << "=" << v << "\n";
        }
      }
      return kExitOk;
    }

    if (verify_cmd->parsed()) {
      const std::vector<fedsim::CheckResult> results =
          fedsim::verify_suite(suite);
      bool all_pass = true;
      for (const auto& c : results) {
        std::printf("%s %-38s measured=%.6g tol=%.6g %s\n",
                    c.pass ? "PASS" : "FAIL", c.name.c_str(), c.measured,
                    c.tolerance, c.note.c_str());
        all_pass = all_pass && c.pass;
      }
      return all_pass ? kExitOk : kExitVerify;
    }

    // run: preset < config file < --set, later sources win
    fedsim::KeyValues kv;
    if (!preset_name.empty()) {
      const auto all = fedsim::presets();
      const auto it = all.find(preset_name);
      if (it == all.end()) {
        throw fedsim::config_error("--preset",
                                   "unknown preset '" + preset_name + "'");
      }
      kv = it->second;
    }
    if (!config_path.empty()) {
      for (const auto& [k, v] : fedsim::read_config_file(config_path)) {
        kv[k] = v;
      }
    }
    apply_overrides(kv, sets);

    if (sweep.empty()) {
      return run_one(kv, out_dir, "");
    }
    const auto eq = sweep.find('=');
    const auto dots = sweep.find("..");
    if (eq == std::string::npos || dots == std::string::npos || dots < eq) {
      throw fedsim::config_error("--sweep", "expected seed=a..b");
    }
    const std::string what = sweep.substr(0, eq);
    if (what != "seed") {
      throw fedsim::config_error("--sweep", "only seed sweeps are supported");
    }
    const long lo = std::stol(sweep.substr(eq + 1, dots - eq - 1));
    const long hi = std::stol(sweep.substr(dots + 2));
    if (hi < lo) throw fedsim::config_error("--sweep", "empty range");
    int rc = kExitOk;
    for (long s = lo; s <= hi; ++s) {
      fedsim::KeyValues one = kv;
      one["seeds.partition"] = std::to_string(s);
      const int r = run_one(one, out_dir, "-seed" + std::to_string(s));
      if (r != kExitOk) rc = r;
    }
    return rc;
  } catch (const fedsim::config_error& e) {
    std::cerr << "fedsim: " << e.what() << "\n";
    return kExitConfig;
  } catch (const fedsim::numeric_error& e) {
    std::cerr << "fedsim: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "fedsim: " << e.what() << "\n";
    return kExitConfig;
  }
}
