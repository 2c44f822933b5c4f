// Experiment configuration, execution and reports.

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "shevar/harness.hpp"

using namespace shevar;

namespace {

json small_clt() {
  return json::parse(R"({
    "experiment": "clt",
    "model": {"alpha": 0.5, "sigma": {"kind": "constant", "a": 1.0}},
    "design": {"delta_n": 0.0009765625, "horizon": 1.0},
    "function": [{"kind": "signed_monomial", "exponents": [2]}],
    "replicates": 64,
    "seed": 12
  })");
}

}  // namespace

TEST(Config, RoundTripsLosslessly) {
  auto j = small_clt();
  j["model"]["u0"] = {{"mean", 0.5}, {"cos", {0.1, 0.2}}, {"sin", {0.3}}};
  j["tolerances"] = {{"ks_p_min", 0.05}};
  const auto c = config_from_json(j);
  const auto once = to_json(c);
  const auto twice = to_json(config_from_json(once));
  EXPECT_EQ(once, twice);
  EXPECT_EQ(once.dump(), json::parse(once.dump()).dump());
  EXPECT_EQ(c.tolerances.at("ks_p_min"), 0.05);
  EXPECT_EQ(c.tolerances.at("var_ratio_tol"), 0.15);  // experiment default filled in
  EXPECT_EQ(c.u0_cos.size(), 2u);
}

TEST(Config, UnknownKeysAreErrors) {
  auto j = small_clt();
  j["replicate"] = 3;
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = small_clt();
  j["design"]["dleta_n"] = 0.1;
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = small_clt();
  j["tolerances"] = {{"ks_p", 0.1}};
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = small_clt();
  j["experiment"] = "bootstrap";
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = small_clt();
  j["replicates"] = 0;
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = small_clt();
  j["design"]["delta_n"] = "small";
  EXPECT_THROW(config_from_json(j), ConfigError);
}

TEST(Config, HashIgnoresOutputOnly) {
  auto a = config_from_json(small_clt());
  auto b = a;
  b.out_dir = "elsewhere";
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.seed = 13;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(hex64(config_hash(a)).size(), 16u);
}

TEST(ParallelFor, IndexedSlotsAndErrors) {
  std::vector<int> slots(100, -1);
  parallel_for(100, 4, [&](std::size_t i, std::size_t) { slots[i] = static_cast<int>(i * i); });
  for (int i = 0; i < 100; ++i) EXPECT_EQ(slots[static_cast<std::size_t>(i)], i * i);
  try {
    parallel_for(10, 3, [](std::size_t i, std::size_t) {
      if (i == 7 || i == 4) throw NumericalBlowup("boom", 1);
    });
    FAIL() << "no exception";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("replicate 4"), std::string::npos) << e.what();
  }
}

TEST(RunLln, SmokeSingleReplicate) {
  auto j = json::parse(R"({"experiment": "lln", "replicates": 1, "ladder": [6, 7, 8],
                           "function": [{"kind": "abs_power", "p": 2}]})");
  const auto rep = run_experiment(config_from_json(j));
  EXPECT_EQ(rep.records.size(), 3u);
  EXPECT_EQ(rep.columns.size(), rep.records[0].values.size());
  EXPECT_EQ(rep.summary["levels"].size(), 3u);
  EXPECT_EQ(rep.checks.size(), 1u);
  const auto payload = report_payload(rep);
  for (const char* key : {"experiment", "config", "summary", "checks", "passed", "provenance"}) {
    EXPECT_TRUE(payload.contains(key)) << key;
  }
  EXPECT_EQ(payload["provenance"]["config_hash"], hex64(rep.hash));
}

TEST(RunClt, RefusesWhiteNoise) {
  auto j = small_clt();
  j["model"]["alpha"] = 1.0;
  try {
    run_experiment(config_from_json(j));
    FAIL() << "no refusal";
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("0 < alpha < 1"), std::string::npos);
  }
}

TEST(RunClt, RefusesOddFunction) {
  auto j = small_clt();
  j["function"] = json::parse(R"([{"kind": "signed_monomial", "exponents": [3]}])");
  EXPECT_THROW(run_experiment(config_from_json(j)), DomainError);
}

TEST(RunClt, SummaryRecomputableFromRecords) {
  const auto rep = run_experiment(config_from_json(small_clt()));
  std::vector<double> s;
  for (const auto& r : rep.records) s.push_back(r.values[0]);
  const auto sm = summarize(s);
  EXPECT_EQ(rep.summary["statistic"]["mean"].get<double>(), sm.mean);
  EXPECT_EQ(rep.summary["statistic"]["variance"].get<double>(), sm.variance);
  EXPECT_EQ(rep.summary["ks_p_value"].get<double>(), ks_test_normal(s).p_value);
}

TEST(RunClt, ThreadCountDoesNotChangePayload) {
  const auto c = config_from_json(small_clt());
  RunOptions one, four;
  one.threads = 1;
  four.threads = 4;
  const auto a = run_experiment(c, one);
  const auto b = run_experiment(c, four);
  EXPECT_EQ(replicates_csv(a), replicates_csv(b));
  EXPECT_EQ(report_payload(a), report_payload(b));
}

TEST(RunEstimation, DegenerateModelSurfacesPerReplicate) {
  auto j = json::parse(R"({"experiment": "estimate", "simulator": "spde", "replicates": 3,
    "model": {"alpha": 0.5, "sigma": {"kind": "linear", "a": 0.0}, "u0": {"mean": 1.0}},
    "design": {"delta_n": 0.015625, "horizon": 0.25, "spatial_modes": 32, "oversampling": 2, "burn_in": 0},
    "estimator": {"target": "sigma0", "p": 2}})");
  const auto rep = run_experiment(config_from_json(j));
  ASSERT_EQ(rep.records.size(), 3u);
  for (const auto& r : rep.records) EXPECT_EQ(r.status, "degenerate");
  EXPECT_EQ(rep.summary["degenerate"].get<std::size_t>(), 3u);
  EXPECT_FALSE(rep.passed);
}

TEST(RunIdentities, AllChecksPass) {
  auto j = json::parse(R"({"experiment": "identities", "alphas": [0.5], "mc_pairs": 20000})");
  const auto rep = run_experiment(config_from_json(j));
  EXPECT_TRUE(rep.passed);
  EXPECT_EQ(rep.records.size(), 51u);
}

TEST(RunScaling, ExactOnlySkipsSpde) {
  auto j = json::parse(R"({"experiment": "scaling", "alphas": [0.5], "replicates": 20,
                           "scaling": {"steps": 4096, "spde_replicates": 0}})");
  const auto rep = run_experiment(config_from_json(j));
  EXPECT_EQ(rep.checks.size(), 1u);
  EXPECT_EQ(rep.records[1].status, "skipped");
}

TEST(Reports, WrittenAndVerifiable) {
  const auto dir = std::filesystem::temp_directory_path() / "shevar_report_test";
  std::filesystem::remove_all(dir);
  const auto c = config_from_json(small_clt());
  const auto rep = run_experiment(c);
  write_report(rep, dir);
  ASSERT_TRUE(std::filesystem::exists(dir / "report.json"));
  ASSERT_TRUE(std::filesystem::exists(dir / "replicates.csv"));
  std::ifstream in(dir / "report.json");
  const auto stored = json::parse(in);
  EXPECT_TRUE(stored.contains("generated_at"));
  const auto again = run_experiment(config_from_json(stored["config"]));
  EXPECT_TRUE(payload_matches(stored, again));
  auto tampered = stored;
  tampered["summary"]["ks_p_value"] = 0.5;
  EXPECT_FALSE(payload_matches(tampered, again));
  std::ifstream csv(dir / "replicates.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header.rfind("replicate,status,stat", 0), 0u);
  std::filesystem::remove_all(dir);
}
