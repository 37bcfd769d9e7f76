#pragma once

// Budget distribution design against Prime-Probe.
//
// The victim draws q0 from a PMF p, each of m colluding attacker domains draws
// from the same p, and the attacker holds qa = min(w, q1 + ... + qm) lines of a
// set. A victim with demand d evicts X = max(0, qa + min(q0, d) - w) attacker
// lines (demand beyond q0 back-fills its own lines). The security term sums the
// L1 distances between the eviction rows of every pair of demands; the
// performance term is the earth mover's distance of p from "always w".

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "cachebar/errors.hpp"
#include "cachebar/pmf.hpp"
#include "cachebar/rng.hpp"

namespace cachebar {

using Row = std::vector<double>;
using EvictionTable = std::vector<Row>;  // [d][x]

// Attacker-visible evictions for fixed budgets.
inline std::uint32_t evictions_given(std::uint32_t w, std::uint32_t q_v, std::uint32_t q_a,
                                     std::uint32_t d) {
  const std::uint32_t used = q_a + std::min(q_v, d);
  return used > w ? used - w : 0;
}

// Distribution of min(w, sum of m iid draws from p).
inline std::vector<double> attacker_sum_pmf(const std::vector<double>& p, std::uint32_t m) {
  if (m == 0) throw ConfigError("attacker_sum_pmf: m must be >= 1");
  if (p.empty()) throw ConfigError("attacker_sum_pmf: empty pmf");
  const std::size_t w = p.size() - 1;
  // Convolve in the clamped domain: once a partial sum reaches w it stays there.
  std::vector<double> acc(w + 1, 0.0);
  acc[0] = 1.0;
  for (std::uint32_t i = 0; i < m; ++i) {
    std::vector<double> next(w + 1, 0.0);
    for (std::size_t s = 0; s <= w; ++s) {
      if (acc[s] == 0.0) continue;
      if (s == w) {
        next[w] += acc[s];
        continue;
      }
      for (std::size_t q = 0; q <= w; ++q) next[std::min(s + q, w)] += acc[s] * p[q];
    }
    acc = std::move(next);
  }
  return acc;
}

inline std::vector<double> attacker_sum_pmf(const BudgetPmf& p, std::uint32_t m) {
  return attacker_sum_pmf(p.probs(), m);
}

// P_d[X = x] for x in {0..w}.
inline Row eviction_row(const std::vector<double>& victim, const std::vector<double>& attacker,
                        std::uint32_t d) {
  const std::uint32_t w = static_cast<std::uint32_t>(victim.size() - 1);
  if (attacker.size() != victim.size()) throw ConfigError("eviction_row: size mismatch");
  if (d > w) throw ConfigError("eviction_row: demand outside {0..w}");
  // prefix[k] = P[Qa <= k - 1]
  std::vector<double> prefix(w + 2, 0.0);
  for (std::uint32_t k = 0; k <= w; ++k) prefix[k + 1] = prefix[k] + attacker[k];
  Row row(w + 1, 0.0);
  for (std::uint32_t q0 = 0; q0 <= w; ++q0) {
    const double pv = victim[q0];
    if (pv == 0.0) continue;
    const std::uint32_t used = std::min(q0, d);
    row[0] += pv * prefix[w - used + 1];
    for (std::uint32_t x = 1; x <= used; ++x) row[x] += pv * attacker[x + w - used];
  }
  return row;
}

inline Row eviction_distribution(const BudgetPmf& victim, const std::vector<double>& attacker_sum,
                                 std::uint32_t d) {
  return eviction_row(victim.probs(), attacker_sum, d);
}

inline EvictionTable eviction_table(const std::vector<double>& victim,
                                    const std::vector<double>& attacker) {
  const std::uint32_t w = static_cast<std::uint32_t>(victim.size() - 1);
  EvictionTable t;
  t.reserve(w + 1);
  for (std::uint32_t d = 0; d <= w; ++d) t.push_back(eviction_row(victim, attacker, d));
  return t;
}

inline double pairwise_l1(const EvictionTable& t) {
  double s = 0.0;
  for (std::size_t d = 0; d < t.size(); ++d)
    for (std::size_t e = d + 1; e < t.size(); ++e)
      for (std::size_t x = 0; x < t[d].size(); ++x) s += std::abs(t[d][x] - t[e][x]);
  return s;
}

// Victim and attackers share one PMF.
inline double security_objective(const std::vector<double>& p, std::uint32_t m) {
  return pairwise_l1(eviction_table(p, attacker_sum_pmf(p, m)));
}
inline double security_objective(const BudgetPmf& p, std::uint32_t m) {
  return security_objective(p.probs(), m);
}

inline double emd_objective(const std::vector<double>& p) {
  const double w = static_cast<double>(p.size() - 1);
  double s = 0.0;
  for (std::size_t q = 0; q < p.size(); ++q) s += (w - static_cast<double>(q)) * p[q];
  return s;
}
inline double emd_objective(const BudgetPmf& p) { return emd_objective(p.probs()); }

// Worst values of the two terms, used as normalizers.
inline double gamma_normalizer(std::uint32_t w, std::uint32_t m) {
  return security_objective(BudgetPmf::degenerate(w, w), m);
}
inline double delta_normalizer(std::uint32_t w) {
  return emd_objective(BudgetPmf::degenerate(w, 0));
}

struct OptimizerOptions {
  std::uint64_t seed = 1;
  std::uint32_t starts = 8;
  std::uint32_t anneal_iters = 6000;
  std::uint32_t polish_iters = 6000;
  double penalty = 1e3;  // weight on the violated emd constraint
  std::uint32_t patience = 200;  // failed polish moves before halving the step
};

struct OptimizationResult {
  BudgetPmf pmf;
  double u = 0.0;
  double security_term = 0.0;  // unnormalized
  double emd_term = 0.0;       // unnormalized
  double gamma = 0.0;
  double delta = 0.0;
  double epsilon = 0.0;
  std::uint32_t w = 0;
  std::uint32_t m = 0;
  double constraint_residual = 0.0;  // max(0, emd/(delta(1+eps)) - u)
  std::uint64_t evaluations = 0;
};

struct ObjectiveTerms {
  double sec = 0.0;   // security / gamma
  double perf = 0.0;  // emd / (delta (1 + eps))
};

class BudgetOptimizer {
 public:
  BudgetOptimizer(std::uint32_t w, std::uint32_t m, double epsilon, OptimizerOptions opt = {})
      : w_(w), m_(m), eps_(epsilon), opt_(opt) {
    if (w < 2) throw ConfigError("optimize: w must be >= 2");
    if (m < 1) throw ConfigError("optimize: m must be >= 1");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("optimize: epsilon must be in (0,1)");
    floor_ = BudgetPmf::fairness_floor(w, m);
    if (floor_ > w) throw ConfigError("optimize: fairness floor exceeds w");
    gamma_ = gamma_normalizer(w, m);
    delta_ = delta_normalizer(w);
  }

  std::uint32_t fairness_floor() const { return floor_; }

  ObjectiveTerms terms(const std::vector<double>& p) const {
    ++evals_;
    return {security_objective(p, m_) / gamma_, emd_objective(p) / (delta_ * (1.0 + eps_))};
  }

  // Feasible points score u itself; infeasible ones pay a steep penalty.
  double score(const ObjectiveTerms& t) const {
    return t.sec + opt_.penalty * std::max(0.0, t.perf - t.sec);
  }

  OptimizationResult run() const {
    evals_ = 0;
    const std::uint32_t k = w_ - floor_ + 1;
    Rng rng(opt_.seed);
    std::vector<double> best_feasible;
    double best_u = std::numeric_limits<double>::infinity();
    auto consider = [&](const std::vector<double>& p, const ObjectiveTerms& t) {
      if (t.perf <= t.sec && t.sec < best_u) {
        best_u = t.sec;
        best_feasible = p;
      }
    };

    for (std::uint32_t s = 0; s < opt_.starts; ++s) {
      std::vector<double> z = initial_point(s, k, rng);
      anneal(z, rng, consider);
      polish(z, rng, consider);
    }
    // The all-w point is always feasible (perf = 0), so best_feasible is set.
    if (best_feasible.empty()) {
      best_feasible = to_pmf(std::vector<double>(k, 0.0));
      best_feasible[w_] = 1.0;
    }
    return finish(best_feasible);
  }

  OptimizationResult evaluate(const BudgetPmf& p) const { return finish(p.probs()); }

 private:
  std::vector<double> to_pmf(const std::vector<double>& z) const {
    std::vector<double> p(w_ + 1, 0.0);
    for (std::size_t i = 0; i < z.size(); ++i) p[floor_ + i] = z[i];
    return p;
  }

  static void normalize(std::vector<double>& z) {
    double s = 0.0;
    for (double v : z) s += v;
    for (double& v : z) v /= s;
  }

  // Deterministic seeds cover the obvious shapes; the rest are random.
  std::vector<double> initial_point(std::uint32_t s, std::uint32_t k, Rng& rng) const {
    std::vector<double> z(k, 0.0);
    switch (s) {
      case 0:
        std::fill(z.begin(), z.end(), 1.0);
        break;
      case 1:
        z.front() = 0.5;
        z.back() = 0.5;
        break;
      case 2:
        z.back() = 1.0;
        break;
      default:
        for (double& v : z) v = -std::log(1.0 - rng.uniform());
        break;
    }
    normalize(z);
    return z;
  }

  // Moves mass from one coordinate to another (or two others).
  void propose(std::vector<double>& z, double step, Rng& rng) const {
    const std::size_t k = z.size();
    if (k == 1) return;
    std::size_t i = rng.below(k);
    while (z[i] == 0.0) i = rng.below(k);
    std::size_t j = rng.below(k - 1);
    if (j >= i) ++j;
    const double amount = rng.bernoulli(0.05) ? z[i] : std::min(z[i], step * rng.uniform());
    z[i] -= amount;
    if (k > 2 && rng.bernoulli(0.3)) {
      std::size_t l = rng.below(k - 1);
      if (l >= i) ++l;
      const double f = rng.uniform();
      z[j] += amount * f;
      z[l] += amount * (1.0 - f);
    } else {
      z[j] += amount;
    }
    if (z[i] < 1e-15) z[i] = 0.0;
    normalize(z);
  }

  template <class F>
  void anneal(std::vector<double>& z, Rng& rng, F& consider) const {
    std::vector<double> p = to_pmf(z);
    ObjectiveTerms t = terms(p);
    double f = score(t);
    consider(p, t);
    const double t0 = 0.02, t1 = 1e-6;
    for (std::uint32_t it = 0; it < opt_.anneal_iters; ++it) {
      const double frac = static_cast<double>(it) / opt_.anneal_iters;
      const double temp = t0 * std::pow(t1 / t0, frac);
      const double step = 0.3 * std::pow(1e-3 / 0.3, frac);
      std::vector<double> cand = z;
      propose(cand, step, rng);
      const std::vector<double> cp = to_pmf(cand);
      const ObjectiveTerms ct = terms(cp);
      const double cf = score(ct);
      consider(cp, ct);
      if (cf <= f || rng.uniform() < std::exp((f - cf) / temp)) {
        z = std::move(cand);
        f = cf;
      }
    }
  }

  // Mixes an infeasible point toward "always w" (perf = 0) until the emd
  // constraint holds, landing on the constraint boundary.
  std::vector<double> repair(std::vector<double> z, ObjectiveTerms& t) const {
    if (t.perf <= t.sec) return z;
    auto mix = [&](double s) {
      std::vector<double> y = z;
      for (double& v : y) v *= 1.0 - s;
      y.back() += s;
      return y;
    };
    double lo = 0.0, hi = 1.0;
    for (int i = 0; i < 40; ++i) {
      const double mid = 0.5 * (lo + hi);
      const ObjectiveTerms mt = terms(to_pmf(mix(mid)));
      (mt.perf <= mt.sec ? hi : lo) = mid;
    }
    std::vector<double> y = mix(hi);
    t = terms(to_pmf(y));
    return y;
  }

  // Local descent over feasible points only, repairing each candidate onto
  // the boundary so the walk can slide along it.
  template <class F>
  void polish(std::vector<double>& z, Rng& rng, F& consider) const {
    ObjectiveTerms t = terms(to_pmf(z));
    z = repair(z, t);
    double f = t.sec;
    double step = 1e-2;
    std::uint32_t since = 0;
    for (std::uint32_t it = 0; it < opt_.polish_iters && step > 1e-12; ++it) {
      std::vector<double> cand = z;
      propose(cand, step, rng);
      ObjectiveTerms ct = terms(to_pmf(cand));
      cand = repair(std::move(cand), ct);
      consider(to_pmf(cand), ct);
      if (ct.perf <= ct.sec && ct.sec < f) {
        z = std::move(cand);
        f = ct.sec;
        since = 0;
      } else if (++since > opt_.patience) {
        step *= 0.5;
        since = 0;
      }
    }
  }

  OptimizationResult finish(const std::vector<double>& p) const {
    std::vector<double> clean = p;
    for (std::size_t q = 0; q < floor_ && q < clean.size(); ++q) clean[q] = 0.0;
    normalize(clean);
    OptimizationResult r;
    r.pmf = BudgetPmf(clean);
    r.security_term = security_objective(clean, m_);
    r.emd_term = emd_objective(clean);
    r.gamma = gamma_;
    r.delta = delta_;
    r.epsilon = eps_;
    r.w = w_;
    r.m = m_;
    r.u = r.security_term / gamma_;
    r.constraint_residual = std::max(0.0, r.emd_term / (delta_ * (1.0 + eps_)) - r.u);
    r.evaluations = evals_;
    return r;
  }

  std::uint32_t w_, m_;
  double eps_;
  OptimizerOptions opt_;
  std::uint32_t floor_ = 0;
  double gamma_ = 0.0, delta_ = 0.0;
  mutable std::uint64_t evals_ = 0;
};

inline OptimizationResult optimize(std::uint32_t w, std::uint32_t m, double epsilon,
                                   OptimizerOptions opt = {}) {
  return BudgetOptimizer(w, m, epsilon, opt).run();
}

}  // namespace cachebar
