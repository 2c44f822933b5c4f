#ifndef SHEVAR_HARNESS_HPP_
#define SHEVAR_HARNESS_HPP_

// Reproducible Monte Carlo experiments: configuration (JSON, unknown keys
// rejected), replicate execution on a worker pool writing into indexed
// slots, summaries recomputed from the per-replicate records, and report
// emission (report.json + replicates.csv).

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>
#include <boost/version.hpp>
#include <fftw3.h>
#include <nlohmann/json.hpp>

#include "shevar/error.hpp"
#include "shevar/gaussian_limits.hpp"
#include "shevar/inference.hpp"
#include "shevar/kernels.hpp"
#include "shevar/model.hpp"
#include "shevar/rng.hpp"
#include "shevar/simulate.hpp"
#include "shevar/stats.hpp"
#include "shevar/variations.hpp"

namespace shevar {

inline constexpr const char* kVersion = "0.1.0";

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// configuration

struct ComponentSpec {
  std::string kind = "abs_power";  // abs_power | signed_monomial | abs_multipower
  double p = 2.0;
  std::vector<double> exponents;
  std::size_t row = 0;
  std::size_t lag = 0;
};

struct ExperimentConfig {
  std::string experiment = "clt";  // lln | clt | estimate | identities | scaling | simulate
  double alpha = 0.5;
  int dim = 1;
  std::string sigma_kind = "constant";  // constant | linear | affine_tanh
  double sigma_a = 1.0;
  double sigma_b = 0.0;
  double u0_mean = 0.0;
  std::vector<double> u0_cos;
  std::vector<double> u0_sin;
  SamplingDesign design;
  std::string simulator = "stationary";  // stationary | spde
  std::vector<ComponentSpec> function{ComponentSpec{}};
  std::size_t replicates = 100;
  std::uint64_t seed = 1;
  std::vector<int> ladder{10, 11, 12, 13, 14, 15, 16};  // log2 of T / delta_n
  std::vector<double> alphas{0.1, 0.25, 0.5, 0.75, 0.9};
  std::vector<std::size_t> time_lags{1, 2, 4, 8, 16, 32};
  std::vector<std::size_t> space_lags{16, 32, 64, 128};
  std::size_t scaling_steps = 16384;    // exact sampler length for scaling
  std::size_t spde_replicates = 0;      // scaling: SPDE paths (0 = skip)
  std::string estimator_target = "sigma0";  // sigma0 | integrated_power
  double estimator_p = 2.0;
  double level = 0.95;
  std::size_t mc_pairs = 200000;
  std::map<std::string, double> tolerances;
  std::string out_dir = "out";
  bool write_paths = false;
};

namespace detail {

inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

inline const std::map<std::string, std::map<std::string, double>>& default_tolerances() {
  static const std::map<std::string, std::map<std::string, double>> t{
      {"lln", {{"slope_target", -0.5}, {"slope_tol", 0.1}}},
      {"clt", {{"ks_p_min", 0.01}, {"var_ratio_tol", 0.15}, {"mean_se_max", 4.0}, {"corr_se_max", 4.0}}},
      {"estimate", {}},
      {"identities",
       {{"pi_mass_max", 1e-6},
        {"partial_sum_rel_max", 1e-12},
        {"series_total_tol", 1e-5},
        {"toeplitz_min_eig", -1e-10},
        {"mc_se_max", 4.0}}},
      {"scaling", {{"temporal_tol", 0.02}, {"spde_temporal_tol", 0.05}, {"spatial_tol", 0.05}}},
      {"simulate", {}},
  };
  return t;
}

inline const std::set<std::string>& tolerance_names() {
  static const std::set<std::string> names{
      "slope_target", "slope_tol", "final_error_max", "ks_p_min", "var_ratio_tol", "mean_se_max",
      "corr_se_max", "rel_bias_max", "coverage_low", "coverage_high", "pi_mass_max",
      "partial_sum_rel_max", "series_total_tol", "toeplitz_min_eig", "mc_se_max", "temporal_tol",
      "spde_temporal_tol", "spatial_tol"};
  return names;
}

}  // namespace detail

inline json to_json(const ComponentSpec& c) {
  json j;
  j["kind"] = c.kind;
  if (c.kind == "abs_power") {
    j["p"] = c.p;
    j["lag"] = c.lag;
  } else {
    j["exponents"] = c.exponents;
  }
  j["row"] = c.row;
  return j;
}

/// Canonical form: every field present, keys sorted.
inline json to_json(const ExperimentConfig& c) {
  json j;
  j["experiment"] = c.experiment;
  j["model"] = {{"alpha", c.alpha},
                {"dim", c.dim},
                {"sigma", {{"kind", c.sigma_kind}, {"a", c.sigma_a}, {"b", c.sigma_b}}},
                {"u0", {{"mean", c.u0_mean}, {"cos", c.u0_cos}, {"sin", c.u0_sin}}}};
  j["design"] = {{"delta_n", c.design.delta_n},     {"horizon", c.design.horizon},
                 {"points", c.design.points},       {"lags", c.design.lags},
                 {"spatial_modes", c.design.spatial_modes}, {"oversampling", c.design.oversampling},
                 {"burn_in", c.design.burn_in}};
  j["simulator"] = c.simulator;
  j["function"] = json::array();
  for (const auto& f : c.function) j["function"].push_back(to_json(f));
  j["replicates"] = c.replicates;
  j["seed"] = c.seed;
  j["ladder"] = c.ladder;
  j["alphas"] = c.alphas;
  j["scaling"] = {{"time_lags", c.time_lags},
                  {"space_lags", c.space_lags},
                  {"steps", c.scaling_steps},
                  {"spde_replicates", c.spde_replicates}};
  j["estimator"] = {{"target", c.estimator_target}, {"p", c.estimator_p}, {"level", c.level}};
  j["mc_pairs"] = c.mc_pairs;
  j["tolerances"] = c.tolerances;
  j["output"] = {{"dir", c.out_dir}, {"paths", c.write_paths}};
  return j;
}

inline ExperimentConfig config_from_json(const json& j) {
  using detail::check_keys;
  using detail::read;
  ExperimentConfig c;
  check_keys(j,
             {"experiment", "model", "design", "simulator", "function", "replicates", "seed", "ladder",
              "alphas", "scaling", "estimator", "mc_pairs", "tolerances", "output"},
             "config");
  read(j, "experiment", c.experiment, "config");
  static const std::set<std::string> kinds{"lln", "clt", "estimate", "identities", "scaling", "simulate"};
  if (!kinds.count(c.experiment)) throw ConfigError("unknown experiment '" + c.experiment + "'");
  if (j.contains("model")) {
    const auto& m = j["model"];
    check_keys(m, {"alpha", "dim", "sigma", "u0"}, "model");
    read(m, "alpha", c.alpha, "model");
    read(m, "dim", c.dim, "model");
    if (m.contains("sigma")) {
      check_keys(m["sigma"], {"kind", "a", "b"}, "model.sigma");
      read(m["sigma"], "kind", c.sigma_kind, "model.sigma");
      read(m["sigma"], "a", c.sigma_a, "model.sigma");
      read(m["sigma"], "b", c.sigma_b, "model.sigma");
    }
    if (m.contains("u0")) {
      check_keys(m["u0"], {"mean", "cos", "sin"}, "model.u0");
      read(m["u0"], "mean", c.u0_mean, "model.u0");
      read(m["u0"], "cos", c.u0_cos, "model.u0");
      read(m["u0"], "sin", c.u0_sin, "model.u0");
    }
  }
  if (j.contains("design")) {
    const auto& d = j["design"];
    check_keys(d, {"delta_n", "horizon", "points", "lags", "spatial_modes", "oversampling", "burn_in"}, "design");
    read(d, "delta_n", c.design.delta_n, "design");
    read(d, "horizon", c.design.horizon, "design");
    read(d, "points", c.design.points, "design");
    read(d, "lags", c.design.lags, "design");
    read(d, "spatial_modes", c.design.spatial_modes, "design");
    read(d, "oversampling", c.design.oversampling, "design");
    read(d, "burn_in", c.design.burn_in, "design");
  }
  read(j, "simulator", c.simulator, "config");
  if (c.simulator != "stationary" && c.simulator != "spde") {
    throw ConfigError("simulator must be 'stationary' or 'spde'");
  }
  if (j.contains("function")) {
    if (!j["function"].is_array() || j["function"].empty()) throw ConfigError("function must be a nonempty array");
    c.function.clear();
    for (const auto& f : j["function"]) {
      check_keys(f, {"kind", "p", "exponents", "row", "lag"}, "function[]");
      ComponentSpec s;
      read(f, "kind", s.kind, "function[]");
      read(f, "p", s.p, "function[]");
      read(f, "exponents", s.exponents, "function[]");
      read(f, "row", s.row, "function[]");
      read(f, "lag", s.lag, "function[]");
      if (s.kind != "abs_power" && s.kind != "signed_monomial" && s.kind != "abs_multipower") {
        throw ConfigError("unknown function kind '" + s.kind + "'");
      }
      c.function.push_back(std::move(s));
    }
  }
  read(j, "replicates", c.replicates, "config");
  read(j, "seed", c.seed, "config");
  read(j, "ladder", c.ladder, "config");
  read(j, "alphas", c.alphas, "config");
  if (j.contains("scaling")) {
    const auto& s = j["scaling"];
    check_keys(s, {"time_lags", "space_lags", "steps", "spde_replicates"}, "scaling");
    read(s, "time_lags", c.time_lags, "scaling");
    read(s, "space_lags", c.space_lags, "scaling");
    read(s, "steps", c.scaling_steps, "scaling");
    read(s, "spde_replicates", c.spde_replicates, "scaling");
  }
  if (j.contains("estimator")) {
    const auto& e = j["estimator"];
    check_keys(e, {"target", "p", "level"}, "estimator");
    read(e, "target", c.estimator_target, "estimator");
    read(e, "p", c.estimator_p, "estimator");
    read(e, "level", c.level, "estimator");
    if (c.estimator_target != "sigma0" && c.estimator_target != "integrated_power") {
      throw ConfigError("estimator.target must be 'sigma0' or 'integrated_power'");
    }
  }
  read(j, "mc_pairs", c.mc_pairs, "config");
  if (j.contains("tolerances")) {
    const auto& t = j["tolerances"];
    if (!t.is_object()) throw ConfigError("tolerances must be an object");
    for (const auto& [k, v] : t.items()) {
      if (!detail::tolerance_names().count(k)) throw ConfigError("unknown tolerance '" + k + "'");
      if (!v.is_number()) throw ConfigError("tolerance '" + k + "' must be a number");
      c.tolerances[k] = v.get<double>();
    }
  }
  if (j.contains("output")) {
    check_keys(j["output"], {"dir", "paths"}, "output");
    read(j["output"], "dir", c.out_dir, "output");
    read(j["output"], "paths", c.write_paths, "output");
  }
  if (c.replicates < 1) throw ConfigError("replicates must be >= 1");
  // fill experiment defaults so the canonical form is explicit
  for (const auto& [k, v] : detail::default_tolerances().at(c.experiment)) c.tolerances.emplace(k, v);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::exception& e) {
    throw ConfigError("config parse error: " + std::string(e.what()));
  }
  return config_from_json(j);
}

/// FNV-1a 64 over the canonical dump, output block excluded.
inline std::uint64_t config_hash(const ExperimentConfig& c) {
  json j = to_json(c);
  j.erase("output");
  const std::string s = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline ModelSpec make_model(const ExperimentConfig& c) {
  ModelSpec m;
  m.noise = NoiseParams(c.alpha, c.dim);
  if (c.sigma_kind == "constant") {
    m.sigma = Coefficient::constant(c.sigma_a);
  } else if (c.sigma_kind == "linear") {
    m.sigma = Coefficient::linear(c.sigma_a);
  } else if (c.sigma_kind == "affine_tanh") {
    m.sigma = Coefficient::affine_tanh(c.sigma_a, c.sigma_b);
  } else {
    throw ConfigError("unknown sigma kind '" + c.sigma_kind + "'");
  }
  m.u0.mean = c.u0_mean;
  m.u0.cos_coef = c.u0_cos;
  m.u0.sin_coef = c.u0_sin;
  return m;
}

inline EvaluationFunction make_function(const ExperimentConfig& c) {
  EvaluationFunction f(c.design.points.size(), c.design.lags);
  for (const auto& s : c.function) {
    if (s.kind == "abs_power") {
      f.abs_power(s.p, s.row, s.lag);
    } else if (s.kind == "signed_monomial") {
      std::vector<int> e;
      for (double x : s.exponents) {
        if (x != std::floor(x)) throw ConfigError("signed_monomial exponents must be integers");
        e.push_back(static_cast<int>(x));
      }
      f.signed_monomial(e, s.row);
    } else {
      f.abs_multipower(s.exponents, s.row);
    }
  }
  return f;
}

// ---------------------------------------------------------------------------
// execution

struct RunOptions {
  std::size_t threads = 1;
  /// Called with (replicate index, panel) for path dumps; may be empty.
  std::function<void(std::size_t, const PathPanel&)> path_sink;
};

/// Runs body(i, worker) for i in [0, n) on up to `threads` workers. Results
/// must go into slot i; the first exception (lowest index) is rethrown with
/// the replicate index attached.
inline void parallel_for(std::size_t n, std::size_t threads,
                         const std::function<void(std::size_t, std::size_t)>& body) {
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, n));
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&](std::size_t w) {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        body(i, w);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const std::exception& e) {
      throw Error("replicate " + std::to_string(i) + ": " + e.what());
    }
  }
}

struct Record {
  std::size_t index = 0;
  std::string status = "ok";
  std::vector<double> values;
};

struct Check {
  std::string name;
  double value = 0.0;
  std::string requirement;
  bool pass = false;
};

struct ExperimentReport {
  std::string experiment;
  json config;
  std::uint64_t hash = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> columns;
  std::vector<Record> records;
  json summary;
  std::vector<Check> checks;
  bool passed = false;
  double runtime_seconds = 0.0;
};

namespace detail {

/// Per-worker cache of samplers/simulators, created lazily.
template <class T>
class WorkerCache {
 public:
  explicit WorkerCache(std::size_t workers) : slots_(std::max<std::size_t>(workers, 1)) {}
  /// Rebuilt whenever stale(existing) says so.
  template <class Make, class Stale>
  T& get(std::size_t worker, Make&& make, Stale&& stale) {
    auto& s = slots_.at(worker);
    if (!s || stale(*s)) s = make();
    return *s;
  }

 private:
  std::vector<std::unique_ptr<T>> slots_;
};

inline void add_check(ExperimentReport& r, std::string name, double value, std::string requirement, bool pass) {
  r.checks.push_back({std::move(name), value, std::move(requirement), pass});
}

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline double tol(const ExperimentConfig& c, const std::string& key) {
  auto it = c.tolerances.find(key);
  if (it == c.tolerances.end()) throw ConfigError("missing tolerance '" + key + "'");
  return it->second;
}

inline bool has_tol(const ExperimentConfig& c, const std::string& key) { return c.tolerances.count(key) > 0; }

/// Normalized increments of one replicate at one point, for either
/// simulator. Stationary increments are multiplied by |sigma_a|.
class IncrementSource {
 public:
  IncrementSource(const ExperimentConfig& c, std::size_t workers) : c_(c), stat_(workers), spde_(workers) {
    if (c.simulator == "stationary") {
      if (c.sigma_kind != "constant") throw ConfigError("the stationary sampler needs a constant sigma");
      if (c.design.points.size() != 1) throw ConfigError("the stationary sampler observes a single point");
    }
  }

  /// Increments and (for spde) the panel.
  std::pair<IncrementPanel, std::optional<PathPanel>> draw(const SamplingDesign& design, std::size_t id,
                                                            std::size_t worker, bool keep_field = false) {
    const RngStream rng{c_.seed, id};
    if (c_.simulator == "stationary") {
      const std::size_t n = design.steps();
      auto& s = stat_.get(
          worker, [&] { return std::make_unique<StationarySampler>(c_.alpha, n); },
          [&](const StationarySampler& x) { return x.size() != n; });
      NormalSource normal(rng);
      auto z = s.sample(normal);
      const double scale = std::abs(c_.sigma_a);
      for (auto& v : z) v *= scale;
      return {increments_from_normalized(z, c_.alpha, design.delta_n), std::nullopt};
    }
    SpdeOptions opt;
    opt.keep_final_field = keep_field;
    auto& sim = spde_.get(
        worker, [&] { return std::make_unique<SpdeSimulator>(make_model(c_), design, opt); },
        [&](const SpdeSimulator& x) {
          return x.design().delta_n != design.delta_n || x.design().horizon != design.horizon;
        });
    auto panel = sim.run(rng);
    auto incr = extract_increments(panel, design, c_.alpha);
    return {std::move(incr), std::move(panel)};
  }

 private:
  const ExperimentConfig& c_;
  WorkerCache<StationarySampler> stat_;
  WorkerCache<SpdeSimulator> spde_;
};

inline json summary_json(const SampleSummary& s) {
  return {{"n", s.n}, {"mean", s.mean}, {"variance", s.variance}, {"se_mean", s.se_mean}};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// experiments

/// E|V^n_f(T) - V_f(T)| over a ladder of n = 2^j and its log-log slope.
inline ExperimentReport run_lln(const ExperimentConfig& c, const RunOptions& opt = {}) {
  ExperimentReport rep;
  const auto f = make_function(c);
  const std::size_t M = f.outputs();
  GaussianLimits gl(c.alpha, f);
  const std::size_t R = c.replicates;
  const std::size_t levels = c.ladder.size();
  if (levels < 2) throw ConfigError("lln needs at least two ladder levels");
  rep.columns = {"level", "n"};
  for (std::size_t m = 0; m < M; ++m) rep.columns.push_back("abs_error_" + std::to_string(m));
  rep.records.resize(levels * R);
  const double T = c.design.horizon;
  detail::IncrementSource src(c, opt.threads);
  std::vector<SamplingDesign> designs;
  for (int j : c.ladder) {
    SamplingDesign d = c.design;
    d.delta_n = T / std::ldexp(1.0, j);
    d.validate();
    designs.push_back(d);
  }
  const double w = c.sigma_a * c.sigma_a;
  std::vector<std::vector<double>> target(levels);
  for (std::size_t lv = 0; lv < levels; ++lv) {
    const auto path = VariancePath::constant(f.points(), w, T, 1);
    const std::vector<double> t{T};
    target[lv] = gl.limit_lln(path, t)[0];
  }
  parallel_for(levels * R, opt.threads, [&](std::size_t i, std::size_t worker) {
    const std::size_t lv = i / R;
    const auto& d = designs[lv];
    auto [incr, panel] = src.draw(d, i, worker);
    if (panel && opt.path_sink) opt.path_sink(i, *panel);
    std::vector<double> t{T};
    std::vector<double> vf = target[lv];
    if (panel && !make_model(c).sigma.is_constant()) {
      vf = gl.limit_lln(variance_path(*panel, make_model(c).sigma), t)[0];
    }
    const auto vn = variation_functional(f, incr, d, t)[0];
    Record r;
    r.index = i;
    r.values = {static_cast<double>(lv), static_cast<double>(d.steps())};
    for (std::size_t m = 0; m < M; ++m) r.values.push_back(std::abs(vn[m] - vf[m]));
    rep.records[i] = std::move(r);
  });
  // summary from records
  json levels_json = json::array();
  std::vector<std::vector<double>> mean_err(M, std::vector<double>(levels));
  std::vector<double> logn(levels);
  for (std::size_t lv = 0; lv < levels; ++lv) {
    json lj;
    lj["n"] = designs[lv].steps();
    logn[lv] = std::log(static_cast<double>(designs[lv].steps()));
    for (std::size_t m = 0; m < M; ++m) {
      std::vector<double> e;
      for (const auto& r : rep.records) {
        if (static_cast<std::size_t>(r.values[0]) == lv) e.push_back(r.values[2 + m]);
      }
      const auto s = summarize(e);
      mean_err[m][lv] = s.mean;
      lj["mean_abs_error"].push_back(s.mean);
      lj["se"].push_back(s.se_mean);
    }
    levels_json.push_back(lj);
  }
  rep.summary["levels"] = levels_json;
  const double target_slope = detail::tol(c, "slope_target");
  const double slope_tol = detail::tol(c, "slope_tol");
  for (std::size_t m = 0; m < M; ++m) {
    std::vector<double> le(levels);
    for (std::size_t lv = 0; lv < levels; ++lv) le[lv] = std::log(mean_err[m][lv]);
    const auto fit = fit_line(logn, le);
    rep.summary["slope"].push_back(fit.slope);
    detail::add_check(rep, "slope_" + std::to_string(m), fit.slope,
                      "within " + detail::fmt(slope_tol) + " of " + detail::fmt(target_slope),
                      std::abs(fit.slope - target_slope) <= slope_tol);
  }
  if (detail::has_tol(c, "final_error_max")) {
    const double e = mean_err[0].back();
    detail::add_check(rep, "final_error_0", e, "< " + detail::fmt(detail::tol(c, "final_error_max")),
                      e < detail::tol(c, "final_error_max"));
  }
  return rep;
}

/// Studentized CLT statistic at T (and T/2) across replicates; KS against
/// N(0, 1), variance ratio, mean, and the correlation of the two halves.
inline ExperimentReport run_clt(const ExperimentConfig& c, const RunOptions& opt = {}) {
  if (!(c.alpha < 1.0)) {
    throw DomainError("the central limit theorem is only established for 0 < alpha < 1; alpha = 1 is refused");
  }
  ExperimentReport rep;
  const auto f = make_function(c);
  if (auto odd = f.check_even()) throw DomainError("component " + std::to_string(*odd) + " is not even");
  GaussianLimits gl(c.alpha, f);
  const auto model = make_model(c);
  const SamplingDesign& d = c.design;
  d.validate();
  const double T = d.horizon;
  const double dn = d.delta_n;
  const std::vector<double> tg{T / 2.0, T};
  // constant sigma: limits are deterministic
  std::optional<LimitLaw> fixed;
  if (model.sigma.is_constant()) {
    fixed = gl.limit_covariance(VariancePath::constant(f.points(), c.sigma_a * c.sigma_a, T, 2), tg);
  }
  rep.columns = {"stat", "stat_first_half", "stat_second_half", "raw", "C", "Vn", "Vf"};
  rep.records.resize(c.replicates);
  detail::IncrementSource src(c, opt.threads);
  parallel_for(c.replicates, opt.threads, [&](std::size_t i, std::size_t worker) {
    auto [incr, panel] = src.draw(d, i, worker);
    if (panel && opt.path_sink) opt.path_sink(i, *panel);
    const auto vn = variation_functional(f, incr, d, tg);
    LimitLaw law = fixed ? *fixed : gl.limit_covariance(variance_path(*panel, model.sigma), tg);
    const auto stat = clt_statistic(vn, law.lln, dn);
    const double c_half = law.covariance[0](0, 0);
    const double c_full = law.covariance[1](0, 0);
    Record r;
    r.index = i;
    r.values = {stat[1][0] / std::sqrt(c_full),
                stat[0][0] / std::sqrt(c_half),
                (stat[1][0] - stat[0][0]) / std::sqrt(c_full - c_half),
                stat[1][0],
                c_full,
                vn[1][0],
                law.lln[1][0]};
    rep.records[i] = std::move(r);
  });
  std::vector<double> s, a, b;
  for (const auto& r : rep.records) {
    s.push_back(r.values[0]);
    a.push_back(r.values[1]);
    b.push_back(r.values[2]);
  }
  const auto sum = summarize(s);
  const auto ks = ks_test_normal(s);
  const auto corr = correlation(a, b);
  rep.summary["statistic"] = detail::summary_json(sum);
  rep.summary["ks_statistic"] = ks.statistic;
  rep.summary["ks_p_value"] = ks.p_value;
  rep.summary["variance_ratio"] = sum.variance;
  rep.summary["half_correlation"] = corr.r;
  rep.summary["half_correlation_se"] = 1.0 / std::sqrt(static_cast<double>(s.size()));
  if (fixed) rep.summary["C"] = fixed->covariance[1](0, 0);
  using detail::tol;
  detail::add_check(rep, "ks_p_value", ks.p_value, "> " + detail::fmt(tol(c, "ks_p_min")),
                    ks.p_value > tol(c, "ks_p_min"));
  detail::add_check(rep, "variance_ratio", sum.variance, "within " + detail::fmt(tol(c, "var_ratio_tol")) + " of 1",
                    std::abs(sum.variance - 1.0) <= tol(c, "var_ratio_tol"));
  detail::add_check(rep, "mean_in_se", sum.mean / sum.se_mean, "|.| <= " + detail::fmt(tol(c, "mean_se_max")),
                    std::abs(sum.mean) <= tol(c, "mean_se_max") * sum.se_mean);
  const double cse = 1.0 / std::sqrt(static_cast<double>(s.size()));
  detail::add_check(rep, "half_correlation_in_se", corr.r / cse, "|.| <= " + detail::fmt(tol(c, "corr_se_max")),
                    std::abs(corr.r) <= tol(c, "corr_se_max") * cse);
  return rep;
}

/// Coverage study of the sigma_0 estimator (parabolic Anderson, SPDE
/// simulator) or of the integrated-power estimator (any simulator).
inline ExperimentReport run_estimation(const ExperimentConfig& c, const RunOptions& opt = {}) {
  ExperimentReport rep;
  const SamplingDesign& d = c.design;
  d.validate();
  const double p = c.estimator_p;
  double truth = 0.0;
  if (c.estimator_target == "sigma0") {
    if (c.sigma_kind != "linear" || c.simulator != "spde") {
      throw ConfigError("sigma0 estimation needs the spde simulator with a linear sigma");
    }
    truth = c.sigma_a;
  } else {
    if (c.sigma_kind != "constant") throw ConfigError("integrated_power calibration needs a constant sigma");
    truth = std::pow(std::abs(c.sigma_a), p) * d.horizon;
  }
  rep.columns = {"estimate", "se", "ci_low", "ci_high", "covered"};
  rep.records.resize(c.replicates);
  detail::IncrementSource src(c, opt.threads);
  parallel_for(c.replicates, opt.threads, [&](std::size_t i, std::size_t worker) {
    Record r;
    r.index = i;
    try {
      auto [incr, panel] = src.draw(d, i, worker);
      if (panel && opt.path_sink) opt.path_sink(i, *panel);
      EstimateReport e;
      if (c.estimator_target == "sigma0") {
        e = estimate_sigma0(p, panel->column(0), d, c.alpha, c.level);
      } else {
        e = estimate_integrated_power(p, incr, c.level);
      }
      const bool covered = e.ci_low <= truth && truth <= e.ci_high;
      r.values = {e.estimate, e.se, e.ci_low, e.ci_high, covered ? 1.0 : 0.0};
    } catch (const DegeneratePath& e) {
      r.status = "degenerate";
      r.values.assign(5, NAN);
    }
    rep.records[i] = std::move(r);
  });
  std::vector<double> est, cov;
  std::size_t degenerate = 0;
  for (const auto& r : rep.records) {
    if (r.status != "ok") {
      ++degenerate;
      continue;
    }
    est.push_back(r.values[0]);
    cov.push_back(r.values[4]);
  }
  rep.summary["truth"] = truth;
  rep.summary["degenerate"] = degenerate;
  rep.summary["ok"] = est.size();
  if (!est.empty()) {
    const auto s = summarize(est);
    CompensatedSum sq;
    for (double e : est) sq.add((e - truth) * (e - truth));
    const double coverage = compensated_total(cov) / static_cast<double>(cov.size());
    rep.summary["estimate"] = detail::summary_json(s);
    rep.summary["bias"] = s.mean - truth;
    rep.summary["rel_bias"] = truth != 0.0 ? (s.mean - truth) / truth : NAN;
    rep.summary["rmse"] = std::sqrt(sq.value() / static_cast<double>(est.size()));
    rep.summary["coverage"] = coverage;
    if (detail::has_tol(c, "rel_bias_max") && truth != 0.0) {
      const double rb = (s.mean - truth) / truth;
      detail::add_check(rep, "rel_bias", rb, "|.| <= " + detail::fmt(detail::tol(c, "rel_bias_max")),
                        std::abs(rb) <= detail::tol(c, "rel_bias_max"));
    }
    if (detail::has_tol(c, "coverage_low") || detail::has_tol(c, "coverage_high")) {
      const double lo = detail::has_tol(c, "coverage_low") ? detail::tol(c, "coverage_low") : 0.0;
      const double hi = detail::has_tol(c, "coverage_high") ? detail::tol(c, "coverage_high") : 1.0;
      detail::add_check(rep, "coverage", coverage, "in [" + detail::fmt(lo) + ", " + detail::fmt(hi) + "]",
                        coverage >= lo && coverage <= hi);
    }
  } else {
    detail::add_check(rep, "usable_replicates", 0.0, "> 0", false);
  }
  return rep;
}

/// Exact identities over an alpha grid: correlation mass vs Gamma_r,
/// partial sums, the full series, Toeplitz PSD, and Monte Carlo against the
/// closed-form Gaussian functionals.
inline ExperimentReport run_identities(const ExperimentConfig& c, const RunOptions& opt = {}) {
  ExperimentReport rep;
  using detail::tol;
  rep.columns = {"alpha", "r", "pi_mass", "gamma_r", "abs_error"};
  const std::size_t per_alpha = 51;
  rep.records.resize(c.alphas.size() * per_alpha);
  for (double a : c.alphas) {
    if (!(a > 0.0 && a < 1.0)) throw ConfigError("identity alphas must lie in (0, 1)");
  }
  parallel_for(rep.records.size(), opt.threads, [&](std::size_t i, std::size_t) {
    const double a = c.alphas[i / per_alpha];
    const std::size_t r = i % per_alpha;
    const auto pm = pi_mass(a, r);
    const double g = gamma_r(a, r);
    rep.records[i] = Record{i, "ok", {a, static_cast<double>(r), pm.value, g, std::abs(pm.value - g)}};
  });
  double pi_err = 0.0;
  for (const auto& r : rep.records) pi_err = std::max(pi_err, r.values[4]);
  rep.summary["pi_mass_max_error"] = pi_err;
  detail::add_check(rep, "pi_mass_max_error", pi_err, "<= " + detail::fmt(tol(c, "pi_mass_max")),
                    pi_err <= tol(c, "pi_mass_max"));

  double ps_rel = 0.0, total_err = 0.0, min_eig = INFINITY;
  std::vector<double> grid = c.alphas;
  for (double a : grid) {
    const std::size_t R = 1000000;
    const double s = gamma_partial_sum(a, R);
    const double cf = gamma_partial_sum_closed_form(a, R);
    ps_rel = std::max(ps_rel, std::abs(s - cf) / std::abs(cf));
    total_err = std::max(total_err, std::abs(gamma_series_total(a, R) - 0.5));
    const auto table = make_autocovariance_table(a, 255);
    Eigen::MatrixXd toe(256, 256);
    for (int i = 0; i < 256; ++i) {
      for (int j = 0; j < 256; ++j) toe(i, j) = table[static_cast<std::size_t>(std::abs(i - j))];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(toe, Eigen::EigenvaluesOnly);
    min_eig = std::min(min_eig, es.eigenvalues().minCoeff());
  }
  rep.summary["partial_sum_max_rel_error"] = ps_rel;
  rep.summary["series_total_max_error"] = total_err;
  rep.summary["toeplitz_min_eigenvalue"] = min_eig;
  detail::add_check(rep, "partial_sum_rel_error", ps_rel, "<= " + detail::fmt(tol(c, "partial_sum_rel_max")),
                    ps_rel <= tol(c, "partial_sum_rel_max"));
  detail::add_check(rep, "series_total_error", total_err, "<= " + detail::fmt(tol(c, "series_total_tol")),
                    total_err <= tol(c, "series_total_tol"));
  detail::add_check(rep, "toeplitz_min_eigenvalue", min_eig, ">= " + detail::fmt(tol(c, "toeplitz_min_eig")),
                    min_eig >= tol(c, "toeplitz_min_eig"));

  // closed forms against the Monte Carlo backend
  double worst_rho = 0.0, worst_mu = 0.0;
  LimitOptions mc;
  mc.backend = LimitOptions::Backend::MonteCarlo;
  mc.mc_pairs = c.mc_pairs;
  mc.seed = c.seed;
  const std::vector<double> w{c.sigma_a * c.sigma_a};
  for (double a : {0.25, 0.5, 0.75}) {
    EvaluationFunction sq(1, 1);
    sq.signed_monomial({2});
    GaussianLimits g(a, sq, mc);
    for (std::size_t r = 0; r <= 10; ++r) {
      const auto e = g.rho(0, 0, r, w);
      const double exact = 2.0 * std::pow(gamma_r(a, r), 2) * w[0] * w[0];
      worst_rho = std::max(worst_rho, std::abs(e.value - exact) / e.se);
    }
  }
  for (double p : {1.0, 2.0, 3.0, 4.0}) {
    EvaluationFunction ap(1, 1);
    ap.abs_power(p);
    GaussianLimits g(0.5, ap, mc);
    const auto e = g.mu(0, w);
    const double exact = abs_moment(p) * std::pow(w[0], p / 2.0);
    worst_mu = std::max(worst_mu, std::abs(e.value - exact) / e.se);
  }
  rep.summary["rho_mc_max_z"] = worst_rho;
  rep.summary["mu_mc_max_z"] = worst_mu;
  detail::add_check(rep, "rho_mc_max_z", worst_rho, "<= " + detail::fmt(tol(c, "mc_se_max")),
                    worst_rho <= tol(c, "mc_se_max"));
  detail::add_check(rep, "mu_mc_max_z", worst_mu, "<= " + detail::fmt(tol(c, "mc_se_max")),
                    worst_mu <= tol(c, "mc_se_max"));
  return rep;
}

/// Hoelder exponents: temporal slope on the exact sampler and, when
/// spde_replicates > 0, temporal and spatial slopes on the SPDE scheme with
/// the configured model.
inline ExperimentReport run_scaling(const ExperimentConfig& c, const RunOptions& opt = {}) {
  ExperimentReport rep;
  using detail::tol;
  rep.columns = {"alpha", "method", "slope", "expected", "r_squared"};
  // method codes: 0 exact temporal, 1 spde temporal, 2 spde spatial
  const std::size_t n = c.scaling_steps;
  const double dn = c.design.delta_n;
  std::vector<Record> recs(c.alphas.size() * 3);
  for (std::size_t ai = 0; ai < c.alphas.size(); ++ai) {
    const double a = c.alphas[ai];
    const double expected_t = 0.5 - a / 4.0;
    std::vector<PathPanel> panels(c.replicates);
    parallel_for(c.replicates, opt.threads, [&](std::size_t i, std::size_t) {
      const auto z = simulate_stationary_increments(a, n, RngStream{c.seed, ai * 1000003ULL + i});
      panels[i] = panel_from_increments(z, dn);
    });
    const auto fit = moment_scaling_check(panels, c.time_lags);
    recs[3 * ai] = Record{3 * ai, "ok", {a, 0.0, fit.slope, expected_t, fit.r_squared}};
    if (c.spde_replicates > 0) {
      ExperimentConfig sc = c;
      sc.alpha = a;
      const auto model = make_model(sc);
      SamplingDesign d = c.design;
      std::vector<PathPanel> sp(c.spde_replicates);
      parallel_for(c.spde_replicates, opt.threads, [&](std::size_t i, std::size_t) {
        SpdeOptions so;
        so.keep_final_field = true;
        sp[i] = simulate_spde(model, d, RngStream{c.seed ^ 0x5ca1eULL, ai * 1000003ULL + i}, so);
        if (opt.path_sink) opt.path_sink(i, sp[i]);
      });
      const auto ft = moment_scaling_check(sp, c.time_lags);
      std::vector<std::vector<double>> fields;
      for (auto& p : sp) fields.push_back(std::move(p.final_field));
      const auto fs = spatial_scaling_check(fields, c.space_lags);
      recs[3 * ai + 1] = Record{3 * ai + 1, "ok", {a, 1.0, ft.slope, expected_t, ft.r_squared}};
      recs[3 * ai + 2] = Record{3 * ai + 2, "ok", {a, 2.0, fs.slope, 1.0 - a / 2.0, fs.r_squared}};
    } else {
      recs[3 * ai + 1] = Record{3 * ai + 1, "skipped", {a, 1.0, NAN, expected_t, NAN}};
      recs[3 * ai + 2] = Record{3 * ai + 2, "skipped", {a, 2.0, NAN, 1.0 - a / 2.0, NAN}};
    }
  }
  rep.records = std::move(recs);
  static const char* names[] = {"temporal_exact", "temporal_spde", "spatial_spde"};
  static const char* tols[] = {"temporal_tol", "spde_temporal_tol", "spatial_tol"};
  for (const auto& r : rep.records) {
    if (r.status != "ok") continue;
    const auto method = static_cast<std::size_t>(r.values[1]);
    const double dev = std::abs(r.values[2] - r.values[3]);
    json row = {{"alpha", r.values[0]}, {"method", names[method]}, {"slope", r.values[2]}, {"expected", r.values[3]}};
    rep.summary["slopes"].push_back(row);
    detail::add_check(rep, std::string(names[method]) + "_alpha_" + detail::fmt(r.values[0]), r.values[2],
                      "within " + detail::fmt(tol(c, tols[method])) + " of " + detail::fmt(r.values[3]),
                      dev <= tol(c, tols[method]));
  }
  return rep;
}

/// Path generation only; per-replicate summary values of the first point.
inline ExperimentReport run_simulate(const ExperimentConfig& c, const RunOptions& opt = {}) {
  ExperimentReport rep;
  const SamplingDesign& d = c.design;
  d.validate();
  rep.columns = {"final", "mean", "min", "max"};
  rep.records.resize(c.replicates);
  detail::IncrementSource src(c, opt.threads);
  parallel_for(c.replicates, opt.threads, [&](std::size_t i, std::size_t worker) {
    PathPanel panel;
    if (c.simulator == "spde") {
      auto drawn = src.draw(d, i, worker);
      panel = std::move(*drawn.second);
    } else {
      auto drawn = src.draw(d, i, worker);
      panel = panel_from_increments(drawn.first.values, d.delta_n, drawn.first.tau);
    }
    if (opt.path_sink) opt.path_sink(i, panel);
    const auto col = panel.column(0);
    const auto s = summarize(col);
    rep.records[i] = Record{i, "ok", {col.back(), s.mean, *std::min_element(col.begin(), col.end()),
                                      *std::max_element(col.begin(), col.end())}};
  });
  std::vector<double> fin;
  for (const auto& r : rep.records) fin.push_back(r.values[0]);
  rep.summary["final"] = detail::summary_json(summarize(fin));
  return rep;
}

inline ExperimentReport run_experiment(const ExperimentConfig& c, const RunOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentReport rep;
  if (c.experiment == "lln") {
    rep = run_lln(c, opt);
  } else if (c.experiment == "clt") {
    rep = run_clt(c, opt);
  } else if (c.experiment == "estimate") {
    rep = run_estimation(c, opt);
  } else if (c.experiment == "identities") {
    rep = run_identities(c, opt);
  } else if (c.experiment == "scaling") {
    rep = run_scaling(c, opt);
  } else if (c.experiment == "simulate") {
    rep = run_simulate(c, opt);
  } else {
    throw ConfigError("unknown experiment '" + c.experiment + "'");
  }
  rep.experiment = c.experiment;
  rep.config = to_json(c);
  rep.hash = config_hash(c);
  rep.seed = c.seed;
  rep.passed = std::all_of(rep.checks.begin(), rep.checks.end(), [](const Check& k) { return k.pass; });
  rep.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

// ---------------------------------------------------------------------------
// output

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string replicates_csv(const ExperimentReport& r) {
  std::ostringstream os;
  os << "replicate,status";
  for (const auto& c : r.columns) os << ',' << c;
  os << '\n';
  for (const auto& rec : r.records) {
    os << rec.index << ',' << rec.status;
    for (double v : rec.values) os << ',' << format_double(v);
    os << '\n';
  }
  return os.str();
}

/// Everything except wall-clock fields: identical for identical config and
/// seed whatever the worker count.
inline json report_payload(const ExperimentReport& r) {
  json j;
  j["experiment"] = r.experiment;
  j["config"] = r.config;
  j["summary"] = r.summary;
  j["passed"] = r.passed;
  j["checks"] = json::array();
  for (const auto& c : r.checks) {
    j["checks"].push_back({{"name", c.name}, {"value", c.value}, {"requirement", c.requirement}, {"pass", c.pass}});
  }
  j["provenance"] = {{"config_hash", hex64(r.hash)},
                     {"seed", r.seed},
                     {"version", kVersion},
                     {"fftw", std::string(fftw_version)},
                     {"boost", BOOST_LIB_VERSION},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)}};
  j["replicate_count"] = r.records.size();
  return j;
}

inline json report_json(const ExperimentReport& r) {
  json j = report_payload(r);
  j["runtime_seconds"] = r.runtime_seconds;
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  j["generated_at"] = buf;
  return j;
}

inline void write_report(const ExperimentReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "report.json");
    out << report_json(r).dump(2) << '\n';
  }
  {
    std::ofstream out(dir / "replicates.csv", std::ios::binary);
    out << replicates_csv(r);
  }
}

/// Summary recomputed from records must match: used by verify.
inline bool payload_matches(const json& stored, const ExperimentReport& fresh) {
  json a = stored;
  a.erase("runtime_seconds");
  a.erase("generated_at");
  return a == report_payload(fresh);
}

}  // namespace shevar

#endif  // SHEVAR_HARNESS_HPP_
