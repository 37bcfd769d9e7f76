#pragma once

// Simulated adversaries: a Flush-Reload covert channel and Prime-Probe trials
// against one cache set, plus the naive Bayes attacker that classifies the
// victim's demand from observed probe misses.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cachebar/budget_optimizer.hpp"
#include "cachebar/cache_model.hpp"
#include "cachebar/cacheability.hpp"
#include "cachebar/errors.hpp"
#include "cachebar/pmf.hpp"
#include "cachebar/rng.hpp"

namespace cachebar {

// ---- Flush-Reload ---------------------------------------------------------

struct FlushReloadConfig {
  bool defense = true;
  std::uint64_t trials = 10000;
  std::uint32_t fr_interval = 2500;  // cycles per trial, for the tick schedule
  std::uint64_t cycles_per_tick = 2500000;  // accessed-daemon period in cycles
  bool sender_idle = false;
  std::uint64_t seed = 1;
};

struct FlushReloadResult {
  double shared_hit_rate = 0.0;    // trials where the sender touched the shared line
  double unshared_hit_rate = 0.0;  // trials where it touched a private line instead
  std::uint64_t shared_trials = 0;
  std::uint64_t unshared_trials = 0;
  std::uint64_t ticks = 0;
};

inline FlushReloadResult flush_reload_experiment(const FlushReloadConfig& cfg) {
  constexpr DomainId kReceiver = 1, kSender = 2;
  constexpr VPage kShared = 0, kPrivate = 1;
  if (cfg.trials == 0) throw ConfigError("flush_reload: trials must be positive");
  if (cfg.fr_interval == 0 || cfg.cycles_per_tick == 0)
    throw ConfigError("flush_reload: intervals must be positive");

  const CacheGeometry g = CacheGeometry::make(16, 16, 64, 256);
  CacheBarConfig cbc;
  cbc.cacheability = false;
  CacheBar cb(g, cbc);
  PageLifecycle& life = cb.lifecycle();
  const PageId shared = life.allocate_page_id();
  const PageId priv = life.allocate_page_id();

  // Without the defense the shared page is simply a cache line both domains
  // reach; with it, mappings go through the copy-on-access lifecycle.
  CacheState plain(g);
  if (cfg.defense) {
    cb.map(kReceiver, kShared, shared);
    cb.map(kSender, kShared, shared);
    cb.map(kSender, kPrivate, priv);
  }

  Rng rng(cfg.seed);
  FlushReloadResult r;
  std::uint64_t shared_hits = 0, unshared_hits = 0, cycles = 0;
  for (std::uint64_t t = 0; t < cfg.trials; ++t) {
    const bool bit = rng.bernoulli(0.5);
    bool hit = false;
    if (cfg.defense) {
      cb.access(kReceiver, kShared, AccessKind::clflush);
      if (!cfg.sender_idle) cb.access(kSender, bit ? kShared : kPrivate, AccessKind::read);
      hit = cb.access(kReceiver, kShared, AccessKind::read).cache_hit;
    } else {
      plain.flush_block({shared, 0});
      if (!cfg.sender_idle) plain.access(kSender, {bit ? shared : priv, 0});
      hit = plain.access(kReceiver, {shared, 0}).hit;
    }
    (bit ? shared_hits : unshared_hits) += hit ? 1 : 0;
    (bit ? r.shared_trials : r.unshared_trials) += 1;
    cycles += cfg.fr_interval;
    if (cfg.defense && cycles >= cfg.cycles_per_tick) {
      cycles -= cfg.cycles_per_tick;
      cb.tick();
      ++r.ticks;
    }
  }
  if (r.shared_trials) r.shared_hit_rate = static_cast<double>(shared_hits) / r.shared_trials;
  if (r.unshared_trials)
    r.unshared_hit_rate = static_cast<double>(unshared_hits) / r.unshared_trials;
  return r;
}

// ---- Prime-Probe ----------------------------------------------------------

enum class DemandClass : std::uint8_t { none, one, few, some, lots, most };
inline constexpr std::size_t kClasses = 6;
inline constexpr std::uint32_t kClassW = 16;
inline constexpr std::array<const char*, kClasses> kClassNames{"NONE", "ONE", "FEW",
                                                                "SOME", "LOTS", "MOST"};

inline DemandClass class_of(std::uint32_t d) {
  if (d == 0) return DemandClass::none;
  if (d == 1) return DemandClass::one;
  if (d <= 4) return DemandClass::few;
  if (d <= 8) return DemandClass::some;
  if (d <= 12) return DemandClass::lots;
  if (d <= 16) return DemandClass::most;
  throw ConfigError("demand outside {0..16}");
}

struct TrialRecord {
  std::uint32_t d = 0;
  std::uint32_t q_v = 0;
  std::uint32_t q_a = 0;
  std::uint32_t x = 0;
  bool dropped = false;
};

struct PrimeProbeConfig {
  std::uint32_t w = 16;
  bool defense = true;  // false: no cacheability limits (budgets ignored)
  double noise = 0.0;   // probability of a +-1 miscount
  std::optional<std::uint32_t> attacker_pages;  // default: q_a (w without defense)
  std::uint32_t miss_threshold = 120;   // cycles
  std::uint32_t drop_threshold = 1000;  // cycles; larger probe readings discarded
  LatencyModel latency{};
};

// One target cache set, one attacker and one victim domain.
class PrimeProbeLab {
 public:
  static constexpr DomainId kAttacker = 1, kVictim = 2;

  explicit PrimeProbeLab(PrimeProbeConfig cfg) : cfg_(cfg) {
    if (cfg_.w < 1) throw ConfigError("prime_probe: w must be >= 1");
    if (cfg_.noise < 0.0 || cfg_.noise > 1.0) throw ConfigError("prime_probe: noise outside [0,1]");
    if (cfg_.attacker_pages && *cfg_.attacker_pages > 2 * cfg_.w)
      throw ConfigError("prime_probe: attacker_pages must be <= 2w");
  }

  const PrimeProbeConfig& config() const { return cfg_; }

  // Fixed budgets for every trial.
  std::vector<TrialRecord> trials(std::uint64_t n, std::uint32_t d, std::uint32_t q_v,
                                  std::uint32_t q_a, std::uint64_t seed) const {
    check_cell(d, q_v, q_a);
    Session s(cfg_, seed);
    std::vector<TrialRecord> out;
    out.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) out.push_back(s.trial(d, q_v, q_a));
    return out;
  }

  // Budgets redrawn before every trial: q_v from the PMF, q_a as the clamped
  // sum of m attacker draws.
  std::vector<TrialRecord> random_budget_trials(std::uint64_t n, std::uint32_t d,
                                                const BudgetPmf& pmf, std::uint32_t m,
                                                std::uint64_t seed) const {
    if (pmf.w() != cfg_.w) throw ConfigError("prime_probe: pmf size does not match w");
    if (m == 0) throw ConfigError("prime_probe: m must be >= 1");
    Session s(cfg_, seed);
    Rng draw(Rng::mix(seed, 0xb0d6e7));
    std::vector<TrialRecord> out;
    out.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      const std::uint32_t q_v = pmf.sample(draw);
      std::uint32_t q_a = 0;
      for (std::uint32_t k = 0; k < m; ++k) q_a += pmf.sample(draw);
      q_a = std::min(q_a, cfg_.w);
      check_cell(d, q_v, q_a);
      out.push_back(s.trial(d, q_v, q_a));
    }
    return out;
  }

 private:
  void check_cell(std::uint32_t d, std::uint32_t q_v, std::uint32_t q_a) const {
    if (d > cfg_.w || q_v > cfg_.w || q_a > cfg_.w)
      throw ConfigError("prime_probe: d, q_v, q_a must lie in {0..w}");
  }

  class Session {
   public:
    Session(const PrimeProbeConfig& cfg, std::uint64_t seed)
        : cfg_(cfg), cb_(geometry(cfg.w), cb_config(cfg, seed)), noise_(Rng::mix(seed, 0x7015e)) {
      PageLifecycle& life = cb_.lifecycle();
      const std::uint32_t colors = cb_.geometry().colors();
      // Pages of color 0 all land in the target set for block 0.
      for (std::uint32_t i = 0; i < 2 * cfg.w; ++i) {
        cb_.map(kAttacker, i, life.allocate_page_id(0, colors));
      }
      for (std::uint32_t i = 0; i < cfg.w; ++i) {
        cb_.map(kVictim, i, life.allocate_page_id(0, colors));
      }
    }

    TrialRecord trial(std::uint32_t d, std::uint32_t q_v, std::uint32_t q_a) {
      TrialRecord rec{d, q_v, q_a, 0, false};
      if (cfg_.defense) {
        cb_.set_budget(kAttacker, q_a);
        cb_.set_budget(kVictim, q_v);
        cb_.reset_queue(kVictim, 0);
      } else {
        for (std::uint32_t i = 0; i < cfg_.w; ++i)
          cb_.cache().flush_page(cb_.lifecycle().pte(kVictim, i).ppage);
      }
      const std::uint32_t k =
          cfg_.attacker_pages.value_or(cfg_.defense ? q_a : cfg_.w);
      for (std::uint32_t i = 0; i < k; ++i) cb_.access(kAttacker, i, AccessKind::read);
      for (std::uint32_t i = 0; i < d; ++i) cb_.access(kVictim, i, AccessKind::read);
      // Probe newest first so refills only displace victim lines.
      std::uint32_t misses = 0;
      for (std::uint32_t i = k; i-- > 0;) {
        const std::uint32_t lat = cb_.access(kAttacker, i, AccessKind::read).latency;
        if (lat >= cfg_.drop_threshold) rec.dropped = true;
        else if (lat >= cfg_.miss_threshold) ++misses;
      }
      if (cfg_.noise > 0.0 && noise_.bernoulli(cfg_.noise)) {
        if (noise_.bernoulli(0.5)) ++misses;
        else if (misses > 0) --misses;
        misses = std::min(misses, cfg_.w);
      }
      rec.x = misses;
      return rec;
    }

   private:
    static CacheGeometry geometry(std::uint32_t w) { return CacheGeometry::make(w, 4, 64, 128); }
    static CacheBarConfig cb_config(const PrimeProbeConfig& cfg, std::uint64_t seed) {
      CacheBarConfig c;
      c.cacheability = cfg.defense;
      c.latency = cfg.latency;
      c.seed = seed;
      return c;
    }

    PrimeProbeConfig cfg_;
    CacheBar cb_;
    Rng noise_;
  };

  PrimeProbeConfig cfg_;
};

// P[X = x] of the observed miss count for fixed budgets, including the
// optional +-1 miscount (clamped to {0..w}).
inline Row observed_row(std::uint32_t w, std::uint32_t q_v, std::uint32_t q_a, std::uint32_t d,
                        double noise) {
  Row row(w + 1, 0.0);
  const std::uint32_t x = evictions_given(w, q_v, q_a, d);
  row[x] += 1.0 - noise;
  row[std::min(x + 1, w)] += noise / 2;
  row[x > 0 ? x - 1 : 0] += noise / 2;
  return row;
}

// ---- naive Bayes ----------------------------------------------------------

// Single-feature naive Bayes over the miss count, one model per attacker
// budget, uniform class priors, additive smoothing.
class NBClassifier {
 public:
  explicit NBClassifier(std::uint32_t w = kClassW, double smoothing = 1.0)
      : w_(w), alpha_(smoothing) {
    if (smoothing <= 0.0) throw ConfigError("naive bayes: smoothing must be positive");
  }

  // Adds (possibly fractional) evidence: `weight` observations of x for class c.
  void add(std::uint32_t q_a, DemandClass c, std::uint32_t x, double weight = 1.0) {
    if (x > w_) throw ConfigError("naive bayes: observation outside {0..w}");
    auto& m = counts_[q_a];
    if (m.empty()) m.assign(kClasses, std::vector<double>(w_ + 1, 0.0));
    m[static_cast<std::size_t>(c)][x] += weight;
    finalized_ = false;
  }

  // Freezes the class-conditional PMFs; every class must have evidence.
  void finalize() {
    logp_.clear();
    for (const auto& [q_a, m] : counts_) {
      auto& lp = logp_[q_a];
      lp.assign(kClasses, std::vector<double>(w_ + 1, 0.0));
      for (std::size_t c = 0; c < kClasses; ++c) {
        double n = 0.0;
        for (double v : m[c]) n += v;
        if (n <= 0.0)
          throw LogicError("naive bayes: class " + std::string(kClassNames[c]) +
                           " has no training data for q_a=" + std::to_string(q_a));
        for (std::uint32_t x = 0; x <= w_; ++x)
          lp[c][x] = std::log((m[c][x] + alpha_) / (n + alpha_ * (w_ + 1)));
      }
    }
    finalized_ = true;
  }

  bool has(std::uint32_t q_a) const { return logp_.contains(q_a); }

  double conditional(std::uint32_t q_a, DemandClass c, std::uint32_t x) const {
    return std::exp(logp_.at(q_a)[static_cast<std::size_t>(c)].at(x));
  }

  // Ties go to the smaller class.
  DemandClass predict(std::uint32_t q_a, std::uint32_t x) const {
    if (!finalized_) throw LogicError("naive bayes: predict before finalize");
    auto it = logp_.find(q_a);
    if (it == logp_.end()) throw LogicError("naive bayes: no model for q_a=" + std::to_string(q_a));
    std::size_t best = 0;
    for (std::size_t c = 1; c < kClasses; ++c)
      if (it->second[c][x] > it->second[best][x]) best = c;
    return static_cast<DemandClass>(best);
  }

  std::vector<std::uint32_t> attacker_budgets() const {
    std::vector<std::uint32_t> out;
    for (const auto& [q, m] : logp_) out.push_back(q);
    return out;
  }

  std::uint32_t w() const { return w_; }

 private:
  std::uint32_t w_;
  double alpha_;
  std::map<std::uint32_t, std::vector<std::vector<double>>> counts_;
  std::map<std::uint32_t, std::vector<std::vector<double>>> logp_;
  bool finalized_ = false;
};

inline NBClassifier train(const std::vector<TrialRecord>& records, double smoothing = 1.0) {
  NBClassifier nb(kClassW, smoothing);
  for (const auto& r : records)
    if (!r.dropped) nb.add(r.q_a, class_of(r.d), r.x);
  nb.finalize();
  return nb;
}

// ---- confusion matrices ---------------------------------------------------

struct ConfusionMatrix {
  std::array<std::array<double, kClasses>, kClasses> m{};  // [true][predicted]

  // Mean of the diagonal, i.e. accuracy averaged over classes.
  double accuracy() const {
    double s = 0.0;
    for (std::size_t c = 0; c < kClasses; ++c) s += m[c][c];
    return s / kClasses;
  }

  // Mass on the true class or a neighbouring one, per true class.
  std::array<double, kClasses> adjacent_mass() const {
    std::array<double, kClasses> out{};
    for (std::size_t c = 0; c < kClasses; ++c)
      for (std::size_t p = 0; p < kClasses; ++p)
        if ((p > c ? p - c : c - p) <= 1) out[c] += m[c][p];
    return out;
  }

  bool row_stochastic(double tol = 1e-9) const {
    for (const auto& row : m) {
      double s = 0.0;
      for (double v : row) s += v;
      if (std::abs(s - 1.0) > tol && s != 0.0) return false;
    }
    return true;
  }
};

using PairKey = std::pair<std::uint32_t, std::uint32_t>;  // (q_v, q_a)

struct Evaluation {
  std::map<PairKey, ConfusionMatrix> per_pair;
  std::map<PairKey, double> accuracy;
};

// Confusion matrix per (q_v, q_a) over non-dropped test records. Rows of
// classes absent from a pair's test set stay zero.
inline Evaluation evaluate(const NBClassifier& nb, const std::vector<TrialRecord>& records) {
  std::map<PairKey, std::array<std::array<double, kClasses>, kClasses>> counts;
  for (const auto& r : records) {
    if (r.dropped) continue;
    const auto t = static_cast<std::size_t>(class_of(r.d));
    const auto p = static_cast<std::size_t>(nb.predict(r.q_a, r.x));
    counts[{r.q_v, r.q_a}][t][p] += 1.0;
  }
  Evaluation e;
  for (const auto& [key, c] : counts) {
    ConfusionMatrix cm;
    for (std::size_t t = 0; t < kClasses; ++t) {
      double n = 0.0;
      for (double v : c[t]) n += v;
      if (n > 0)
        for (std::size_t p = 0; p < kClasses; ++p) cm.m[t][p] = c[t][p] / n;
    }
    e.per_pair[key] = cm;
    e.accuracy[key] = cm.accuracy();
  }
  return e;
}

struct AggregateOptions {
  std::uint32_t lo = 4;   // budgets summed over lo <= q_v, q_a <= hi
  std::uint32_t hi = 14;
};

struct Aggregate {
  ConfusionMatrix matrix;
  double covered_mass = 0.0;  // total weight inside the budget range
};

// Sum over the budget range of P[Qa=q_a] P[Qv=q_v] times the pair's matrix,
// divided by the covered weight (1 when the range spans both supports).
inline Aggregate aggregate_confusion(const std::map<PairKey, ConfusionMatrix>& per_pair,
                                     const std::vector<double>& victim_pmf,
                                     const std::vector<double>& attacker_pmf,
                                     AggregateOptions opt = {}) {
  Aggregate a;
  for (std::uint32_t qv = opt.lo; qv <= opt.hi && qv < victim_pmf.size(); ++qv)
    for (std::uint32_t qa = opt.lo; qa <= opt.hi && qa < attacker_pmf.size(); ++qa) {
      const double wgt = victim_pmf[qv] * attacker_pmf[qa];
      if (wgt == 0.0) continue;
      auto it = per_pair.find({qv, qa});
      if (it == per_pair.end())
        throw LogicError("aggregate: missing matrix for q_v=" + std::to_string(qv) +
                         " q_a=" + std::to_string(qa));
      a.covered_mass += wgt;
      for (std::size_t t = 0; t < kClasses; ++t)
        for (std::size_t p = 0; p < kClasses; ++p) a.matrix.m[t][p] += wgt * it->second.m[t][p];
    }
  if (a.covered_mass <= 0.0) throw LogicError("aggregate: no probability mass in budget range");
  for (auto& row : a.matrix.m)
    for (double& v : row) v /= a.covered_mass;
  return a;
}

// Classifier trained on exact class-conditional distributions instead of
// samples: each (d, q_v) cell of q_a contributes `weight` observations spread
// over its observed-miss row.
inline NBClassifier train_analytic(std::uint32_t w, const std::vector<std::uint32_t>& victim_budgets,
                                   const std::vector<std::uint32_t>& attacker_budgets, double noise,
                                   double weight, double smoothing = 1.0) {
  NBClassifier nb(w, smoothing);
  for (std::uint32_t qa : attacker_budgets)
    for (std::uint32_t qv : victim_budgets)
      for (std::uint32_t d = 0; d <= w; ++d) {
        const Row row = observed_row(w, qv, qa, d, noise);
        for (std::uint32_t x = 0; x <= w; ++x)
          if (row[x] > 0) nb.add(qa, class_of(d), x, weight * row[x]);
      }
  nb.finalize();
  return nb;
}

// Exact confusion matrix of a classifier for one (q_v, q_a) pair, with
// demands uniform within each class.
inline ConfusionMatrix analytic_confusion(const NBClassifier& nb, std::uint32_t q_v,
                                          std::uint32_t q_a, double noise) {
  ConfusionMatrix cm;
  std::array<double, kClasses> n{};
  for (std::uint32_t d = 0; d <= nb.w(); ++d) {
    const auto t = static_cast<std::size_t>(class_of(d));
    n[t] += 1.0;
    const Row row = observed_row(nb.w(), q_v, q_a, d, noise);
    for (std::uint32_t x = 0; x <= nb.w(); ++x)
      cm.m[t][static_cast<std::size_t>(nb.predict(q_a, x))] += row[x];
  }
  for (std::size_t t = 0; t < kClasses; ++t)
    for (double& v : cm.m[t]) v /= n[t];
  return cm;
}

}  // namespace cachebar
