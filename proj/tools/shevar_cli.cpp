// shevar: command-line driver for the experiment harness.
//
//   shevar <identities|lln|clt|estimate|scaling|simulate> --config FILE
//          [--seed S] [--out DIR] [--replicates R] [--threads N]
//   shevar verify REPORT.json [--threads N]
//
// Exit status: 0 all checks pass, 1 some check failed, 2 bad input, 3 run error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "shevar/harness.hpp"

namespace fs = std::filesystem;
using shevar::json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> replicates;
  std::size_t threads = 0;
};

std::size_t resolve_threads(std::size_t t) {
  if (t > 0) return t;
  return std::max(1u, std::thread::hardware_concurrency());
}

shevar::ExperimentConfig load(const std::string& kind, const Common& c) {
  std::ifstream in(c.config);
  if (!in) throw shevar::ConfigError("cannot open config file " + c.config);
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::exception& e) {
    throw shevar::ConfigError("config parse error: " + std::string(e.what()));
  }
  if (!j.is_object()) throw shevar::ConfigError("config must be an object");
  if (!j.contains("experiment")) j["experiment"] = kind;
  if (j["experiment"] != kind) {
    throw shevar::ConfigError("config is for '" + j["experiment"].get<std::string>() + "', not '" + kind + "'");
  }
  auto cfg = shevar::config_from_json(j);
  if (c.seed) cfg.seed = *c.seed;
  if (c.replicates) {
    if (*c.replicates < 1) throw shevar::ConfigError("replicates must be >= 1");
    cfg.replicates = *c.replicates;
  }
  if (c.out) cfg.out_dir = *c.out;
  if (kind == "simulate") cfg.write_paths = true;
  return cfg;
}

int run(const std::string& kind, const Common& c) {
  const auto cfg = load(kind, c);
  const fs::path dir = cfg.out_dir;
  shevar::RunOptions opt;
  opt.threads = resolve_threads(c.threads);
  if (cfg.write_paths) {
    fs::create_directories(dir / "paths");
    opt.path_sink = [dir](std::size_t i, const shevar::PathPanel& p) {
      char name[32];
      std::snprintf(name, sizeof name, "path_%06zu.csv", i);
      std::ofstream out(dir / "paths" / name);
      shevar::write_panel_csv(p, out);
    };
  }
  const auto rep = shevar::run_experiment(cfg, opt);
  shevar::write_report(rep, dir);
  for (const auto& k : rep.checks) {
    std::printf("%-4s %-36s %-14.6g %s\n", k.pass ? "PASS" : "FAIL", k.name.c_str(), k.value,
                k.requirement.c_str());
  }
  std::printf("%s: %s (%zu replicate rows, %.1f s) -> %s\n", kind.c_str(), rep.passed ? "passed" : "FAILED",
              rep.records.size(), rep.runtime_seconds, dir.string().c_str());
  return rep.passed ? 0 : 1;
}

int verify(const std::string& report_path, std::size_t threads) {
  std::ifstream in(report_path);
  if (!in) throw shevar::ConfigError("cannot open report " + report_path);
  const json stored = json::parse(in);
  auto cfg = shevar::config_from_json(stored.at("config"));
  const std::string want = stored.at("provenance").at("config_hash");
  if (shevar::hex64(shevar::config_hash(cfg)) != want) {
    std::printf("config hash mismatch: embedded config hashes to %s, report says %s\n",
                shevar::hex64(shevar::config_hash(cfg)).c_str(), want.c_str());
    return 1;
  }
  shevar::RunOptions opt;
  opt.threads = resolve_threads(threads);
  const auto fresh = shevar::run_experiment(cfg, opt);
  const bool same = shevar::payload_matches(stored, fresh);
  std::printf("%s: rerun %s the stored payload\n", report_path.c_str(), same ? "reproduces" : "does NOT reproduce");
  return same ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variation functionals of the stochastic heat equation with Riesz noise"};
  app.set_version_flag("--version", shevar::kVersion);
  app.require_subcommand(1);

  Common common;
  std::string chosen;
  for (const char* kind : {"identities", "lln", "clt", "estimate", "scaling", "simulate"}) {
    auto* sub = app.add_subcommand(kind, std::string("run the ") + kind + " experiment");
    sub->add_option("--config", common.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "master seed override");
    sub->add_option("--out", common.out, "output directory override");
    sub->add_option("--replicates", common.replicates, "replicate count override");
    sub->add_option("--threads", common.threads, "worker threads (0 = hardware)");
    sub->callback([&chosen, kind] { chosen = kind; });
  }
  std::string report;
  std::size_t verify_threads = 0;
  auto* ver = app.add_subcommand("verify", "re-run a report from its embedded config and compare");
  ver->add_option("report", report, "report.json")->required()->check(CLI::ExistingFile);
  ver->add_option("--threads", verify_threads, "worker threads (0 = hardware)");
  ver->callback([&chosen] { chosen = "verify"; });

  CLI11_PARSE(app, argc, argv);
  try {
    if (chosen == "verify") return verify(report, verify_threads);
    return run(chosen, common);
  } catch (const shevar::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const shevar::DomainError& e) {
    std::fprintf(stderr, "refused: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
