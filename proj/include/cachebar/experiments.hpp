#pragma once

// Named experiments wired from the modules, and their reports.
//
// A report carries the resolved config, result tables (cells pre-rendered as
// text so reruns are byte-identical), a summary, and the list of embedded
// assertions that failed.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cachebar/attack_lab.hpp"
#include "cachebar/budget_optimizer.hpp"
#include "cachebar/config.hpp"
#include "cachebar/noninterference.hpp"
#include "cachebar/workload.hpp"

namespace cachebar {

inline constexpr const char* kVersion = "1.0.0";

struct Table {
  std::string name;  // file stem
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  friend bool operator==(const Table&, const Table&) = default;
};

struct Report {
  std::string experiment;
  json config;
  std::vector<Table> tables;
  json summary = json::object();
  json provenance = json::object();
  std::vector<std::string> failures;  // embedded assertions that did not hold
  std::map<std::string, std::string> artifacts;  // extra files: name -> contents

  bool passed() const { return failures.empty(); }
  friend bool operator==(const Report&, const Report&) = default;
};

inline std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string to_csv(const Table& t) {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  line(t.columns);
  for (const auto& r : t.rows) line(r);
  return out;
}

inline json report_to_json(const Report& r) {
  json j;
  j["experiment"] = r.experiment;
  j["config"] = r.config;
  json tables = json::array();
  for (const auto& t : r.tables) tables.push_back({{"name", t.name}, {"columns", t.columns}, {"rows", t.rows}});
  j["tables"] = tables;
  j["summary"] = r.summary;
  j["provenance"] = r.provenance;
  j["failures"] = r.failures;
  j["artifacts"] = r.artifacts;
  return j;
}

inline Report report_from_json(const json& j) {
  Report r;
  try {
    r.experiment = j.at("experiment").get<std::string>();
    r.config = j.at("config");
    for (const auto& t : j.at("tables"))
      r.tables.push_back({t.at("name").get<std::string>(), t.at("columns").get<std::vector<std::string>>(),
                          t.at("rows").get<std::vector<std::vector<std::string>>>()});
    r.summary = j.at("summary");
    r.provenance = j.at("provenance");
    r.failures = j.at("failures").get<std::vector<std::string>>();
    r.artifacts = j.at("artifacts").get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("report: ") + e.what());
  }
  return r;
}

inline Table confusion_table(const std::string& name, const ConfusionMatrix& cm) {
  // Row i is the true class, column j the predicted class, both in class order.
  Table t{name, {}, {}};
  for (const char* c : kClassNames) t.columns.push_back(c);
  for (std::size_t i = 0; i < kClasses; ++i) {
    std::vector<std::string> row;
    for (double v : cm.m[i]) row.push_back(fmt(v, 2));
    t.rows.push_back(row);
  }
  return t;
}

inline json confusion_json(const ConfusionMatrix& cm) {
  json rows = json::array();
  for (const auto& r : cm.m) rows.push_back(std::vector<double>(r.begin(), r.end()));
  return rows;
}

// ---- budget PMF resolution -------------------------------------------------

inline OptimizerOptions optimizer_options(const ExperimentConfig& c) {
  OptimizerOptions o;
  o.seed = c.seed;
  o.starts = c.budget.starts;
  o.anneal_iters = c.budget.anneal_iters;
  o.polish_iters = c.budget.polish_iters;
  return o;
}

inline BudgetPmf resolve_pmf(const ExperimentConfig& c) {
  const auto& b = c.budget;
  BudgetPmf p;
  if (b.pmf == "optimize") {
    p = optimize(b.w, b.m, b.epsilon, optimizer_options(c)).pmf;
  } else if (b.pmf == "uniform") {
    p = BudgetPmf::uniform(b.w, BudgetPmf::fairness_floor(b.w, b.m));
  } else if (b.pmf == "explicit") {
    p = BudgetPmf(b.pmf_values);
  } else if (b.pmf.rfind("degenerate:", 0) == 0) {
    const std::string q = b.pmf.substr(11);
    try {
      p = BudgetPmf::degenerate(b.w, static_cast<std::uint32_t>(std::stoul(q)));
    } catch (const std::logic_error&) {
      throw ConfigError("config: budget.pmf: bad degenerate point '" + q + "'");
    }
  } else {
    p = load_pmf_file(b.pmf.substr(5));
  }
  if (p.w() != b.w) throw ConfigError("config: budget.pmf: has " + std::to_string(p.w() + 1) + " entries, expected w+1");
  return p;
}

inline std::vector<double> attacker_weights(const ExperimentConfig& c, const BudgetPmf& p) {
  return c.classify.attacker_weights == "single" ? p.probs() : attacker_sum_pmf(p, c.budget.m);
}

inline std::vector<std::uint32_t> support_of(const std::vector<double>& p) {
  std::vector<std::uint32_t> s;
  for (std::size_t q = 0; q < p.size(); ++q)
    if (p[q] > 0.0) s.push_back(static_cast<std::uint32_t>(q));
  return s;
}

inline json pmf_json(const BudgetPmf& p) { return p.probs(); }

// ---- verbs -----------------------------------------------------------------

inline Report run_check_model(const ExperimentConfig& c) {
  Report r;
  r.experiment = "check-model";
  ModelConfig mc{c.model.flush_on_demote, c.model.flush_on_merge, c.model.strict_flush_reload};
  const ExploreResult res = explore(mc);
  r.summary["verdict"] = res.verified ? "Verified" : "Violation";
  r.summary["states"] = res.states;
  Table t{"trace", {"step", "actor", "action", "state"}, {}};
  if (res.counterexample) {
    const Trace& tr = *res.counterexample;
    r.summary["trace_length"] = tr.size();
    for (std::size_t i = 0; i < tr.steps.size(); ++i) {
      const Step& s = tr.steps[i];
      t.rows.push_back({std::to_string(i + 1), to_string(s.actor), to_string(s.action),
                        s.kind == StepKind::violation ? "VIOLATION" : s.state.describe()});
    }
    r.artifacts["trace.txt"] = format_trace(tr);
    if (mc.strict_flush_reload) {
      const LifecycleReplay lr = replay_on_lifecycle(tr, mc);
      r.summary["lifecycle_replay_leak"] = lr.leak;
    }
    r.failures.push_back("non-interference violated: attacker Reload observed a cached line (" +
                         std::to_string(tr.size()) + "-step trace)");
  }
  r.tables.push_back(t);
  return r;
}

inline Report run_optimize(const ExperimentConfig& c) {
  Report r;
  r.experiment = "optimize";
  const auto& b = c.budget;
  const BudgetOptimizer opt(b.w, b.m, b.epsilon, optimizer_options(c));
  const OptimizationResult res = opt.run();
  const OptimizationResult base = opt.evaluate(BudgetPmf::uniform(b.w, opt.fairness_floor()));
  r.summary["u"] = res.u;
  r.summary["security_term"] = res.security_term;
  r.summary["emd_term"] = res.emd_term;
  r.summary["gamma"] = res.gamma;
  r.summary["delta"] = res.delta;
  r.summary["epsilon"] = res.epsilon;
  r.summary["constraint_residual"] = res.constraint_residual;
  r.summary["uniform_baseline_u"] = base.u;
  r.summary["support"] = res.pmf.support();
  r.summary["pmf"] = pmf_json(res.pmf);

  Table pmf{"pmf", {"q", "p"}, {}};
  for (std::uint32_t q = 0; q <= b.w; ++q) pmf.rows.push_back({std::to_string(q), fmt(res.pmf[q], 9)});
  r.tables.push_back(pmf);
  Table rows{"eviction_rows", {"d"}, {}};
  for (std::uint32_t x = 0; x <= b.w; ++x) rows.columns.push_back("x" + std::to_string(x));
  const auto table = eviction_table(res.pmf.probs(), attacker_sum_pmf(res.pmf, b.m));
  for (std::uint32_t d = 0; d <= b.w; ++d) {
    std::vector<std::string> row{std::to_string(d)};
    for (double v : table[d]) row.push_back(fmt(v, 9));
    rows.rows.push_back(row);
  }
  r.tables.push_back(rows);
  r.artifacts["pmf.json"] = json{{"w", b.w}, {"m", b.m}, {"epsilon", b.epsilon}, {"pmf", pmf_json(res.pmf)}}.dump(2) + "\n";

  if (res.constraint_residual > kPmfTolerance) r.failures.push_back("emd constraint violated");
  if (!res.pmf.is_fair(b.m)) r.failures.push_back("fairness constraint violated");
  if (res.u > base.u + 1e-12) r.failures.push_back("optimizer worse than the fair uniform baseline");
  if (b.expect_support_max) {
    const auto s = res.pmf.support();
    if (!s.empty() && s.back() > *b.expect_support_max)
      r.failures.push_back("support reaches q=" + std::to_string(s.back()) + ", above expected maximum " +
                           std::to_string(*b.expect_support_max));
  }
  return r;
}

inline Report run_simulate_fr(const ExperimentConfig& c) {
  Report r;
  r.experiment = "simulate-fr";
  const auto& f = c.flush_reload;
  const FlushReloadResult res = flush_reload_experiment(
      {f.defense, f.trials, f.fr_interval, f.cycles_per_tick, f.sender_idle, c.seed});
  const double gap = std::abs(res.shared_hit_rate - res.unshared_hit_rate);
  r.summary["shared_hit_rate"] = res.shared_hit_rate;
  r.summary["unshared_hit_rate"] = res.unshared_hit_rate;
  r.summary["gap"] = gap;
  r.summary["ticks"] = res.ticks;
  r.tables.push_back({"flush_reload",
                      {"defense", "trials", "shared_hit_rate", "unshared_hit_rate"},
                      {{f.defense ? "on" : "off", std::to_string(f.trials), fmt(res.shared_hit_rate),
                        fmt(res.unshared_hit_rate)}}});
  const bool separable_expected = !f.defense && !f.sender_idle;
  if (separable_expected && gap <= 0.9) r.failures.push_back("undefended channel not separable");
  if (!separable_expected && gap >= 0.01) r.failures.push_back("channel separable (gap " + fmt(gap) + ")");
  return r;
}

inline PrimeProbeConfig lab_config(const ExperimentConfig& c, bool defense, double noise) {
  PrimeProbeConfig p;
  p.w = c.budget.w;
  p.defense = defense;
  p.noise = noise;
  p.attacker_pages = c.prime_probe.attacker_pages;
  p.miss_threshold = c.prime_probe.miss_threshold;
  p.drop_threshold = c.prime_probe.drop_threshold;
  return p;
}

inline Report run_simulate_pp(const ExperimentConfig& c) {
  Report r;
  r.experiment = "simulate-pp";
  const auto& p = c.prime_probe;
  const std::uint32_t w = c.budget.w;
  std::vector<std::uint32_t> demands = p.demands;
  if (demands.empty())
    for (std::uint32_t d = 0; d <= w; ++d) demands.push_back(d);
  const PrimeProbeLab lab(lab_config(c, p.defense, p.noise));
  const bool fixed = p.q_v.has_value();
  std::optional<BudgetPmf> pmf;
  std::vector<double> qa_dist;
  if (!fixed && p.defense) {
    pmf = resolve_pmf(c);
    qa_dist = attacker_sum_pmf(*pmf, c.budget.m);
    r.summary["pmf"] = pmf_json(*pmf);
  }

  Table trials{"trials", {"d", "q_v", "q_a", "x", "dropped"}, {}};
  Table hist{"x_distribution", {"d", "x", "empirical", "analytic"}, {}};
  std::uint64_t bound_violations = 0, dropped = 0;
  double worst_tv = 0.0;
  for (std::size_t i = 0; i < demands.size(); ++i) {
    const std::uint32_t d = demands[i];
    const std::uint64_t seed = Rng::mix(c.seed, d);
    std::vector<TrialRecord> recs;
    Row analytic;
    if (!p.defense) {
      recs = lab.trials(p.trials, d, w, w, seed);
      analytic = observed_row(w, w, w, d, p.noise);
    } else if (fixed) {
      recs = lab.trials(p.trials, d, *p.q_v, *p.q_a, seed);
      analytic = observed_row(w, *p.q_v, *p.q_a, d, p.noise);
    } else {
      recs = lab.random_budget_trials(p.trials, d, *pmf, c.budget.m, seed);
      analytic = eviction_row(pmf->probs(), qa_dist, d);
    }
    std::vector<std::uint32_t> xs;
    for (const auto& t : recs) {
      trials.rows.push_back({std::to_string(t.d), std::to_string(t.q_v), std::to_string(t.q_a),
                             std::to_string(t.x), t.dropped ? "1" : "0"});
      if (t.dropped) {
        ++dropped;
        continue;
      }
      xs.push_back(t.x);
      if (p.noise == 0.0 && t.x > std::min(t.d, t.q_v)) ++bound_violations;
    }
    const Row emp = empirical_pmf(xs, w + 1);
    for (std::uint32_t x = 0; x <= w; ++x)
      if (emp[x] > 0 || analytic[x] > 0) hist.rows.push_back({std::to_string(d), std::to_string(x), fmt(emp[x]), fmt(analytic[x])});
    if (!xs.empty()) worst_tv = std::max(worst_tv, total_variation(emp, analytic));
  }
  r.tables.push_back(trials);
  r.tables.push_back(hist);
  r.summary["trials_per_demand"] = p.trials;
  r.summary["dropped"] = dropped;
  r.summary["bound_violations"] = bound_violations;
  r.summary["worst_tv"] = worst_tv;
  r.summary["drop_threshold_cycles"] = p.drop_threshold;
  if (bound_violations) r.failures.push_back("observed evictions exceeded min(d, q_v)");
  // Below about (w+1)/tol^2 trials the sampling error alone exceeds the tolerance.
  const double tol = std::max(p.tv_tolerance, std::sqrt((w + 1.0) / static_cast<double>(p.trials)));
  r.summary["tv_tolerance"] = tol;
  if (worst_tv > tol && dropped == 0)
    r.failures.push_back("empirical x distribution differs from the analytic row (TV " + fmt(worst_tv) + ")");
  return r;
}

// Trials for every (d, q_v, q_a) in the given budget sets.
inline std::vector<TrialRecord> sweep(const PrimeProbeLab& lab, std::uint32_t w,
                                      const std::vector<std::uint32_t>& qvs,
                                      const std::vector<std::uint32_t>& qas, std::uint64_t n,
                                      std::uint64_t seed) {
  std::vector<TrialRecord> out;
  for (std::uint32_t qa : qas)
    for (std::uint32_t qv : qvs)
      for (std::uint32_t d = 0; d <= w; ++d) {
        const std::uint64_t cell = (std::uint64_t{qa} * 64 + qv) * 64 + d;
        auto recs = lab.trials(n, d, qv, qa, Rng::mix(seed, cell));
        out.insert(out.end(), recs.begin(), recs.end());
      }
  return out;
}

struct ClassifyOutcome {
  ConfusionMatrix baseline;  // no defense
  double baseline_accuracy = 0.0;
  Evaluation defended;
  Aggregate aggregate;
  double aggregate_accuracy = 0.0;
  BudgetPmf pmf;
};

inline ClassifyOutcome classify_pipeline(const ExperimentConfig& c) {
  const auto& k = c.classify;
  const std::uint32_t w = c.budget.w;
  if (w != kClassW) throw ConfigError("config: budget.w: demand classes are defined for w=16");
  ClassifyOutcome o;
  const std::uint64_t train_seed = Rng::mix(c.seed, 1), test_seed = Rng::mix(c.seed, 2);

  const PrimeProbeLab plain(lab_config(c, false, k.noise));
  const std::vector<std::uint32_t> full{w};
  const NBClassifier nb0 = train(sweep(plain, w, full, full, k.train_trials, train_seed), k.smoothing);
  const Evaluation e0 = evaluate(nb0, sweep(plain, w, full, full, k.test_trials, test_seed));
  o.baseline = e0.per_pair.at({w, w});
  o.baseline_accuracy = o.baseline.accuracy();

  o.pmf = resolve_pmf(c);
  const std::vector<double> qa_w = attacker_weights(c, o.pmf);
  const auto qvs = support_of(o.pmf.probs());
  const auto qas = support_of(qa_w);
  const PrimeProbeLab lab(lab_config(c, true, k.noise));
  const NBClassifier nb = train(sweep(lab, w, qvs, qas, k.train_trials, train_seed), k.smoothing);
  o.defended = evaluate(nb, sweep(lab, w, qvs, qas, k.test_trials, test_seed));
  AggregateOptions ao;
  ao.lo = k.aggregate_lo.value_or(BudgetPmf::fairness_floor(w, c.budget.m));
  ao.hi = k.aggregate_hi.value_or(w);
  o.aggregate = aggregate_confusion(o.defended.per_pair, o.pmf.probs(), qa_w, ao);
  o.aggregate_accuracy = o.aggregate.matrix.accuracy();
  return o;
}

inline Report run_classify(const ExperimentConfig& c) {
  Report r;
  r.experiment = "classify";
  const ClassifyOutcome o = classify_pipeline(c);
  r.tables.push_back(confusion_table("confusion_nodefense", o.baseline));
  r.tables.push_back(confusion_table("confusion_defended", o.aggregate.matrix));
  std::set<std::uint32_t> qvs, qas;
  for (const auto& [key, acc] : o.defended.accuracy) {
    qvs.insert(key.first);
    qas.insert(key.second);
  }
  Table acc{"accuracy_per_budget", {"q_a"}, {}};
  for (auto qv : qvs) acc.columns.push_back("q_v=" + std::to_string(qv));
  for (auto qa : qas) {
    std::vector<std::string> row{std::to_string(qa)};
    for (auto qv : qvs) {
      auto it = o.defended.accuracy.find({qv, qa});
      row.push_back(it == o.defended.accuracy.end() ? "" : fmt(it->second, 2));
    }
    acc.rows.push_back(row);
  }
  r.tables.push_back(acc);
  json records = json::array();
  for (const auto& [key, a] : o.defended.accuracy)
    records.push_back({{"q_v", key.first}, {"q_a", key.second}, {"accuracy", a}});
  r.summary["accuracy_per_budget"] = records;
  Table sweep_tab{"noise_sweep", {"noise", "nodefense_accuracy", "defended_accuracy"}, {}};
  json sweep_recs = json::array();
  for (double noise : c.classify.noise_sweep) {
    ExperimentConfig cn = c;
    cn.classify.noise = noise;
    cn.budget.pmf = "explicit";
    cn.budget.pmf_values = o.pmf.probs();
    const ClassifyOutcome on = noise == c.classify.noise ? o : classify_pipeline(cn);
    sweep_tab.rows.push_back({fmt(noise, 3), fmt(on.baseline_accuracy, 4), fmt(on.aggregate_accuracy, 4)});
    sweep_recs.push_back({{"noise", noise},
                          {"nodefense_accuracy", on.baseline_accuracy},
                          {"defended_accuracy", on.aggregate_accuracy}});
  }
  if (!sweep_tab.rows.empty()) r.tables.push_back(sweep_tab);
  r.summary["noise_sweep"] = sweep_recs;
  r.summary["drop_threshold_cycles"] = c.prime_probe.drop_threshold;
  const auto adj = o.baseline.adjacent_mass();
  r.summary["nodefense_accuracy"] = o.baseline_accuracy;
  r.summary["nodefense_adjacent_mass"] = std::vector<double>(adj.begin(), adj.end());
  r.summary["defended_accuracy"] = o.aggregate_accuracy;
  r.summary["aggregate_covered_mass"] = o.aggregate.covered_mass;
  r.summary["pmf"] = pmf_json(o.pmf);
  r.summary["confusion_nodefense"] = confusion_json(o.baseline);
  r.summary["confusion_defended"] = confusion_json(o.aggregate.matrix);
  if (!o.baseline.row_stochastic() || !o.aggregate.matrix.row_stochastic())
    r.failures.push_back("confusion rows do not sum to 1");
  if (!(o.aggregate_accuracy < o.baseline_accuracy))
    r.failures.push_back("defended accuracy not below undefended accuracy");
  return r;
}

inline Workload footprint_workload(const ExperimentConfig& c) {
  const auto& f = c.footprint;
  if (f.workload == "idle") return synthetic_workload(f.domains, f.shared_pages, f.ticks, 0);
  if (f.workload == "busy") return synthetic_workload(f.domains, f.shared_pages, f.ticks, f.busy_stride);
  std::ifstream in(f.workload);
  if (!in) throw ConfigError("config: footprint.workload: cannot open " + f.workload);
  return parse_workload(in);
}

// Structured snapshot of pages, PTEs and the counter table.
inline json lifecycle_to_json(const PageLifecycle& life) {
  json pages = json::array();
  for (const auto& [id, pg] : life.pages()) {
    json j = {{"id", id},
              {"state", to_string(pg.state)},
              {"kind", pg.kind == PageKind::copy ? "copy" : "original"},
              {"tracked", pg.tracked},
              {"content", pg.content}};
    j["owner"] = pg.owner ? json(*pg.owner) : json(nullptr);
    j["original"] = pg.original_ref ? json(*pg.original_ref) : json(nullptr);
    j["copies"] = pg.copy_list;
    pages.push_back(j);
  }
  json ptes = json::array();
  for (const auto& [key, pte] : life.ptes())
    ptes.push_back({{"domain", pte.domain},
                    {"vpage", pte.vpage},
                    {"ppage", pte.ppage},
                    {"coa", pte.coa_bit},
                    {"nc", pte.nc_bit},
                    {"accessed", pte.accessed_bit}});
  json counters = json::array();
  for (const auto& [page, row] : life.counters().rows())
    for (const auto& [d, n] : row) counters.push_back({{"page", page}, {"domain", d}, {"count", n}});
  return {{"pages", pages}, {"ptes", ptes}, {"counters", counters}, {"originals", life.original_list()}};
}

inline Report run_footprint(const ExperimentConfig& c) {
  Report r;
  r.experiment = "footprint";
  const auto& g = c.geometry;
  const Workload wl = footprint_workload(c);
  const FootprintReport f =
      footprint_report(wl, derive_geometry(g.cache_bytes, g.ways, g.line_size, g.page_size));
  r.summary["events"] = wl.size();
  r.summary["shared_pages"] = f.shared_pages;
  r.summary["nosharing_pages"] = f.nosharing_pages;
  r.summary["cachebar_pages"] = f.cachebar_pages;
  r.tables.push_back({"footprint",
                      {"workload", "shared_pages", "cachebar_pages", "nosharing_pages"},
                      {{c.footprint.workload, std::to_string(f.shared_pages), std::to_string(f.cachebar_pages),
                        std::to_string(f.nosharing_pages)}}});
  CacheState cache(derive_geometry(g.cache_bytes, g.ways, g.line_size, g.page_size));
  PageLifecycle life(cache);
  for (const Event& e : wl) apply(life, e);
  r.artifacts["state.json"] = lifecycle_to_json(life).dump(2) + "\n";
  if (!(f.shared_pages <= f.cachebar_pages && f.cachebar_pages <= f.nosharing_pages))
    r.failures.push_back("footprint ordering shared <= cachebar <= nosharing violated");
  return r;
}

inline const std::vector<std::string>& verbs() {
  static const std::vector<std::string> v{"check-model", "optimize",  "simulate-fr",
                                          "simulate-pp", "classify", "footprint"};
  return v;
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

inline Report run(const std::string& verb, const ExperimentConfig& c) {
  validate(c);
  Report r;
  if (verb == "check-model") r = run_check_model(c);
  else if (verb == "optimize") r = run_optimize(c);
  else if (verb == "simulate-fr") r = run_simulate_fr(c);
  else if (verb == "simulate-pp") r = run_simulate_pp(c);
  else if (verb == "classify") r = run_classify(c);
  else if (verb == "footprint") r = run_footprint(c);
  else throw ConfigError("unknown verb '" + verb + "'");
  r.config = config_to_json(c);
  r.provenance = {{"seed", c.seed}, {"version", kVersion}, {"timestamp", utc_timestamp()}};
  return r;
}

// Writes <dir>/<table>.csv for every table, the extra artifacts, and
// <dir>/report.json. Returns the paths written.
inline std::vector<std::string> emit_report(const Report& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
  std::vector<std::string> written;
  auto write = [&](const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << text;
    if (!out) throw std::runtime_error("write failed: " + p.string());
    written.push_back(p.string());
  };
  for (const auto& t : r.tables) write(dir / (t.name + ".csv"), to_csv(t));
  for (const auto& [name, text] : r.artifacts) write(dir / name, text);
  write(dir / "report.json", report_to_json(r).dump(2) + "\n");
  return written;
}

}  // namespace cachebar
