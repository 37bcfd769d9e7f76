#pragma once

// Experiment configuration: one JSON document, every field optional, unknown
// keys rejected. Errors name the offending field path.

#include <cstdint>
#include <limits>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cachebar/cache_model.hpp"
#include "cachebar/errors.hpp"
#include "cachebar/pmf.hpp"

namespace cachebar {

using json = nlohmann::ordered_json;

struct GeometryConfig {
  std::uint64_t cache_bytes = 8ull << 20;
  std::uint32_t ways = 16;
  std::uint32_t line_size = 64;
  std::uint32_t page_size = 4096;
};

struct BudgetConfig {
  std::uint32_t w = 16;
  std::uint32_t m = 3;
  double epsilon = 0.01;
  std::uint32_t starts = 8;
  std::uint32_t anneal_iters = 6000;
  std::uint32_t polish_iters = 6000;
  // "optimize", "uniform" (fair uniform), "degenerate:<q>", "file:<path>", or
  // an explicit array in `pmf_values`.
  std::string pmf = "optimize";
  std::vector<double> pmf_values;
  std::optional<std::uint32_t> expect_support_max;
};

struct ModelSection {
  bool flush_on_demote = true;
  bool flush_on_merge = true;
  bool strict_flush_reload = true;
};

struct FlushReloadSection {
  bool defense = true;
  std::uint64_t trials = 10000;
  std::uint32_t fr_interval = 2500;
  std::uint64_t cycles_per_tick = 2500000;
  bool sender_idle = false;
};

struct PrimeProbeSection {
  bool defense = true;
  std::uint64_t trials = 1000;
  std::vector<std::uint32_t> demands;  // empty: all of {0..w}
  std::optional<std::uint32_t> q_v;   // both set: fixed budgets
  std::optional<std::uint32_t> q_a;
  double noise = 0.0;
  std::uint32_t miss_threshold = 120;
  std::uint32_t drop_threshold = 1000;
  std::optional<std::uint32_t> attacker_pages;
  double tv_tolerance = 0.02;
};

struct ClassifySection {
  std::uint64_t train_trials = 100;
  std::uint64_t test_trials = 100;
  double noise = 0.0;
  double smoothing = 1.0;
  std::string attacker_weights = "sum";  // "sum" of m draws, or "single" draw
  std::optional<std::uint32_t> aggregate_lo;  // default: fairness floor
  std::optional<std::uint32_t> aggregate_hi;  // default: w
  std::vector<double> noise_sweep{0.0, 0.1, 0.2};  // extra noise levels reported side by side
};

struct FootprintSection {
  std::string workload = "idle";  // idle | busy | path to a trace file
  std::uint32_t domains = 8;
  std::uint32_t shared_pages = 32;
  std::uint32_t ticks = 30;
  std::uint32_t busy_stride = 4;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "cachebar-out";
  GeometryConfig geometry;
  BudgetConfig budget;
  ModelSection model;
  FlushReloadSection flush_reload;
  PrimeProbeSection prime_probe;
  ClassifySection classify;
  FootprintSection footprint;
};

namespace cfgdetail {

inline void check_keys(const json& j, const std::string& path, std::set<std::string> allowed) {
  if (!j.is_object()) throw ConfigError("config: " + (path.empty() ? "<root>" : path) + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.contains(it.key()))
      throw ConfigError("config: " + (path.empty() ? "" : path + ".") + it.key() + ": unknown field");
}

inline std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

template <class T>
void read(const json& j, const std::string& path, const std::string& key, T& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  const std::string where = "config: " + join(path, key) + ": ";
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw ConfigError(where + "expected a boolean");
    out = v.get<bool>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer() || (v.is_number_integer() && v.get<std::int64_t>() < 0))
      throw ConfigError(where + "expected a nonnegative integer");
    const auto u = v.get<std::uint64_t>();
    if (u > std::numeric_limits<T>::max()) throw ConfigError(where + "value too large");
    out = static_cast<T>(u);
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw ConfigError(where + "expected a number");
    out = v.get<T>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) throw ConfigError(where + "expected a string");
    out = v.get<std::string>();
  } else {
    static_assert(sizeof(T) == 0, "unsupported config field type");
  }
}

template <class T>
void read_opt(const json& j, const std::string& path, const std::string& key, std::optional<T>& out) {
  if (!j.contains(key)) return;
  if (j.at(key).is_null()) {
    out.reset();
    return;
  }
  T v{};
  read(j, path, key, v);
  out = v;
}

template <class T>
json opt_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

}  // namespace cfgdetail

inline ExperimentConfig config_from_json(const json& j) {
  using namespace cfgdetail;
  ExperimentConfig c;
  check_keys(j, "", {"seed", "output_dir", "geometry", "budget", "model", "flush_reload",
                     "prime_probe", "classify", "footprint"});
  read(j, "", "seed", c.seed);
  read(j, "", "output_dir", c.output_dir);
  if (j.contains("geometry")) {
    const json& g = j["geometry"];
    check_keys(g, "geometry", {"cache_bytes", "ways", "line_size", "page_size"});
    read(g, "geometry", "cache_bytes", c.geometry.cache_bytes);
    read(g, "geometry", "ways", c.geometry.ways);
    read(g, "geometry", "line_size", c.geometry.line_size);
    read(g, "geometry", "page_size", c.geometry.page_size);
  }
  if (j.contains("budget")) {
    const json& b = j["budget"];
    check_keys(b, "budget", {"w", "m", "epsilon", "starts", "anneal_iters", "polish_iters", "pmf",
                             "expect_support_max"});
    read(b, "budget", "w", c.budget.w);
    read(b, "budget", "m", c.budget.m);
    read(b, "budget", "epsilon", c.budget.epsilon);
    read(b, "budget", "starts", c.budget.starts);
    read(b, "budget", "anneal_iters", c.budget.anneal_iters);
    read(b, "budget", "polish_iters", c.budget.polish_iters);
    if (b.contains("pmf")) {
      if (b["pmf"].is_array()) {
        c.budget.pmf = "explicit";
        for (const auto& v : b["pmf"]) {
          if (!v.is_number()) throw ConfigError("config: budget.pmf: expected numbers");
          c.budget.pmf_values.push_back(v.get<double>());
        }
      } else {
        read(b, "budget", "pmf", c.budget.pmf);
      }
    }
    read_opt(b, "budget", "expect_support_max", c.budget.expect_support_max);
  }
  if (j.contains("model")) {
    const json& m = j["model"];
    check_keys(m, "model", {"flush_on_demote", "flush_on_merge", "strict_flush_reload"});
    read(m, "model", "flush_on_demote", c.model.flush_on_demote);
    read(m, "model", "flush_on_merge", c.model.flush_on_merge);
    read(m, "model", "strict_flush_reload", c.model.strict_flush_reload);
  }
  if (j.contains("flush_reload")) {
    const json& f = j["flush_reload"];
    check_keys(f, "flush_reload", {"defense", "trials", "fr_interval", "cycles_per_tick", "sender_idle"});
    read(f, "flush_reload", "defense", c.flush_reload.defense);
    read(f, "flush_reload", "trials", c.flush_reload.trials);
    read(f, "flush_reload", "fr_interval", c.flush_reload.fr_interval);
    read(f, "flush_reload", "cycles_per_tick", c.flush_reload.cycles_per_tick);
    read(f, "flush_reload", "sender_idle", c.flush_reload.sender_idle);
  }
  if (j.contains("prime_probe")) {
    const json& p = j["prime_probe"];
    check_keys(p, "prime_probe", {"defense", "trials", "demands", "q_v", "q_a", "noise",
                                  "miss_threshold", "drop_threshold", "attacker_pages", "tv_tolerance"});
    read(p, "prime_probe", "defense", c.prime_probe.defense);
    read(p, "prime_probe", "trials", c.prime_probe.trials);
    if (p.contains("demands")) {
      if (!p["demands"].is_array()) throw ConfigError("config: prime_probe.demands: expected an array");
      for (const auto& v : p["demands"]) {
        if (!v.is_number_unsigned()) throw ConfigError("config: prime_probe.demands: expected nonnegative integers");
        c.prime_probe.demands.push_back(v.get<std::uint32_t>());
      }
    }
    read_opt(p, "prime_probe", "q_v", c.prime_probe.q_v);
    read_opt(p, "prime_probe", "q_a", c.prime_probe.q_a);
    read(p, "prime_probe", "noise", c.prime_probe.noise);
    read(p, "prime_probe", "miss_threshold", c.prime_probe.miss_threshold);
    read(p, "prime_probe", "drop_threshold", c.prime_probe.drop_threshold);
    read_opt(p, "prime_probe", "attacker_pages", c.prime_probe.attacker_pages);
    read(p, "prime_probe", "tv_tolerance", c.prime_probe.tv_tolerance);
  }
  if (j.contains("classify")) {
    const json& k = j["classify"];
    check_keys(k, "classify", {"train_trials", "test_trials", "noise", "smoothing", "attacker_weights",
                               "aggregate_lo", "aggregate_hi", "noise_sweep"});
    read(k, "classify", "train_trials", c.classify.train_trials);
    read(k, "classify", "test_trials", c.classify.test_trials);
    read(k, "classify", "noise", c.classify.noise);
    read(k, "classify", "smoothing", c.classify.smoothing);
    read(k, "classify", "attacker_weights", c.classify.attacker_weights);
    read_opt(k, "classify", "aggregate_lo", c.classify.aggregate_lo);
    read_opt(k, "classify", "aggregate_hi", c.classify.aggregate_hi);
    if (k.contains("noise_sweep")) {
      if (!k["noise_sweep"].is_array()) throw ConfigError("config: classify.noise_sweep: expected an array");
      c.classify.noise_sweep.clear();
      for (const auto& v : k["noise_sweep"]) {
        if (!v.is_number()) throw ConfigError("config: classify.noise_sweep: expected numbers");
        c.classify.noise_sweep.push_back(v.get<double>());
      }
    }
  }
  if (j.contains("footprint")) {
    const json& f = j["footprint"];
    check_keys(f, "footprint", {"workload", "domains", "shared_pages", "ticks", "busy_stride"});
    read(f, "footprint", "workload", c.footprint.workload);
    read(f, "footprint", "domains", c.footprint.domains);
    read(f, "footprint", "shared_pages", c.footprint.shared_pages);
    read(f, "footprint", "ticks", c.footprint.ticks);
    read(f, "footprint", "busy_stride", c.footprint.busy_stride);
  }
  return c;
}

inline json config_to_json(const ExperimentConfig& c) {
  using cfgdetail::opt_json;
  json j;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["geometry"] = {{"cache_bytes", c.geometry.cache_bytes},
                   {"ways", c.geometry.ways},
                   {"line_size", c.geometry.line_size},
                   {"page_size", c.geometry.page_size}};
  json b = {{"w", c.budget.w},
            {"m", c.budget.m},
            {"epsilon", c.budget.epsilon},
            {"starts", c.budget.starts},
            {"anneal_iters", c.budget.anneal_iters},
            {"polish_iters", c.budget.polish_iters}};
  b["pmf"] = c.budget.pmf == "explicit" ? json(c.budget.pmf_values) : json(c.budget.pmf);
  b["expect_support_max"] = opt_json(c.budget.expect_support_max);
  j["budget"] = b;
  j["model"] = {{"flush_on_demote", c.model.flush_on_demote},
                {"flush_on_merge", c.model.flush_on_merge},
                {"strict_flush_reload", c.model.strict_flush_reload}};
  j["flush_reload"] = {{"defense", c.flush_reload.defense},
                       {"trials", c.flush_reload.trials},
                       {"fr_interval", c.flush_reload.fr_interval},
                       {"cycles_per_tick", c.flush_reload.cycles_per_tick},
                       {"sender_idle", c.flush_reload.sender_idle}};
  json p = {{"defense", c.prime_probe.defense}, {"trials", c.prime_probe.trials}};
  p["demands"] = c.prime_probe.demands;
  p["q_v"] = opt_json(c.prime_probe.q_v);
  p["q_a"] = opt_json(c.prime_probe.q_a);
  p["noise"] = c.prime_probe.noise;
  p["miss_threshold"] = c.prime_probe.miss_threshold;
  p["drop_threshold"] = c.prime_probe.drop_threshold;
  p["attacker_pages"] = opt_json(c.prime_probe.attacker_pages);
  p["tv_tolerance"] = c.prime_probe.tv_tolerance;
  j["prime_probe"] = p;
  json k = {{"train_trials", c.classify.train_trials},
            {"test_trials", c.classify.test_trials},
            {"noise", c.classify.noise},
            {"smoothing", c.classify.smoothing},
            {"attacker_weights", c.classify.attacker_weights}};
  k["aggregate_lo"] = opt_json(c.classify.aggregate_lo);
  k["aggregate_hi"] = opt_json(c.classify.aggregate_hi);
  k["noise_sweep"] = c.classify.noise_sweep;
  j["classify"] = k;
  j["footprint"] = {{"workload", c.footprint.workload},
                    {"domains", c.footprint.domains},
                    {"shared_pages", c.footprint.shared_pages},
                    {"ticks", c.footprint.ticks},
                    {"busy_stride", c.footprint.busy_stride}};
  return j;
}

// Checks cross-field preconditions before anything runs.
inline void validate(const ExperimentConfig& c) {
  auto bad = [](const std::string& path, const std::string& why) {
    throw ConfigError("config: " + path + ": " + why);
  };
  try {
    derive_geometry(c.geometry.cache_bytes, c.geometry.ways, c.geometry.line_size, c.geometry.page_size);
  } catch (const ConfigError& e) {
    bad("geometry", e.what());
  }
  if (c.budget.w < 2) bad("budget.w", "must be >= 2");
  if (c.budget.m < 1) bad("budget.m", "must be >= 1");
  if (!(c.budget.epsilon > 0.0 && c.budget.epsilon < 1.0)) bad("budget.epsilon", "must be in (0,1)");
  if (c.budget.starts < 1) bad("budget.starts", "must be >= 1");
  const std::string& pmf = c.budget.pmf;
  if (!(pmf == "optimize" || pmf == "uniform" || pmf == "explicit" || pmf.rfind("degenerate:", 0) == 0 ||
        pmf.rfind("file:", 0) == 0))
    bad("budget.pmf", "expected optimize, uniform, degenerate:<q>, file:<path> or an array");
  if (c.flush_reload.trials == 0) bad("flush_reload.trials", "must be positive");
  if (c.flush_reload.fr_interval == 0) bad("flush_reload.fr_interval", "must be positive");
  if (c.flush_reload.cycles_per_tick == 0) bad("flush_reload.cycles_per_tick", "must be positive");
  const auto& p = c.prime_probe;
  if (p.trials == 0) bad("prime_probe.trials", "must be positive");
  for (auto d : p.demands)
    if (d > c.budget.w) bad("prime_probe.demands", "demand exceeds w");
  if (p.q_v.has_value() != p.q_a.has_value()) bad("prime_probe", "set both q_v and q_a, or neither");
  if (p.q_v && *p.q_v > c.budget.w) bad("prime_probe.q_v", "exceeds w");
  if (p.q_a && *p.q_a > c.budget.w) bad("prime_probe.q_a", "exceeds w");
  if (p.noise < 0.0 || p.noise > 1.0) bad("prime_probe.noise", "must be in [0,1]");
  if (p.miss_threshold >= p.drop_threshold) bad("prime_probe.miss_threshold", "must be below drop_threshold");
  if (p.attacker_pages && *p.attacker_pages > 2 * c.budget.w) bad("prime_probe.attacker_pages", "must be <= 2w");
  if (!(p.tv_tolerance > 0.0)) bad("prime_probe.tv_tolerance", "must be positive");
  const auto& k = c.classify;
  if (k.train_trials == 0) bad("classify.train_trials", "must be positive");
  if (k.test_trials == 0) bad("classify.test_trials", "must be positive");
  if (k.noise < 0.0 || k.noise > 1.0) bad("classify.noise", "must be in [0,1]");
  for (double v : k.noise_sweep)
    if (v < 0.0 || v > 1.0) bad("classify.noise_sweep", "values must be in [0,1]");
  if (!(k.smoothing > 0.0)) bad("classify.smoothing", "must be positive");
  if (k.attacker_weights != "sum" && k.attacker_weights != "single")
    bad("classify.attacker_weights", "expected sum or single");
  if (k.aggregate_lo && k.aggregate_hi && *k.aggregate_lo > *k.aggregate_hi)
    bad("classify.aggregate_lo", "exceeds aggregate_hi");
  const auto& f = c.footprint;
  if (f.domains == 0) bad("footprint.domains", "must be positive");
  if (f.shared_pages == 0) bad("footprint.shared_pages", "must be positive");
}

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

// A PMF file is a JSON array of w+1 probabilities, or an object with a
// "pmf" array.
inline BudgetPmf load_pmf_file(const std::string& path) {
  const json j = load_json_file(path);
  const json& arr = j.is_object() && j.contains("pmf") ? j["pmf"] : j;
  if (!arr.is_array()) throw ConfigError(path + ": expected an array of probabilities");
  std::vector<double> p;
  for (const auto& v : arr) {
    if (!v.is_number()) throw ConfigError(path + ": expected numbers");
    p.push_back(v.get<double>());
  }
  return BudgetPmf(p);
}

}  // namespace cachebar
