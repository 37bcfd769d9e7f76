#pragma once

// Probability mass functions over per-set line budgets {0..w}.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "cachebar/errors.hpp"
#include "cachebar/rng.hpp"

namespace cachebar {

inline constexpr double kPmfTolerance = 1e-9;

class BudgetPmf {
 public:
  BudgetPmf() = default;

  // Validates nonnegativity and normalization; does not renormalize.
  explicit BudgetPmf(std::vector<double> p) : p_(std::move(p)) {
    if (p_.size() < 2) throw ConfigError("pmf: need w+1 >= 2 entries");
    double sum = 0.0;
    for (std::size_t q = 0; q < p_.size(); ++q) {
      if (!(p_[q] >= 0.0) || !std::isfinite(p_[q]))
        throw ConfigError("pmf: entry " + std::to_string(q) + " is negative or not finite");
      sum += p_[q];
    }
    if (std::abs(sum - 1.0) > kPmfTolerance)
      throw ConfigError("pmf: entries sum to " + std::to_string(sum) + ", expected 1");
  }

  static BudgetPmf degenerate(std::uint32_t w, std::uint32_t q) {
    if (q > w) throw ConfigError("pmf: degenerate point outside {0..w}");
    std::vector<double> p(w + 1, 0.0);
    p[q] = 1.0;
    return BudgetPmf(std::move(p));
  }

  // Uniform over {lo..w}.
  static BudgetPmf uniform(std::uint32_t w, std::uint32_t lo = 0) {
    if (lo > w) throw ConfigError("pmf: empty uniform support");
    std::vector<double> p(w + 1, 0.0);
    for (std::uint32_t q = lo; q <= w; ++q) p[q] = 1.0 / (w - lo + 1);
    return BudgetPmf(std::move(p));
  }

  std::uint32_t w() const { return static_cast<std::uint32_t>(p_.size() - 1); }
  double operator[](std::size_t q) const { return p_.at(q); }
  const std::vector<double>& probs() const { return p_; }

  // Inverse-CDF draw. The last positive entry absorbs rounding slack.
  std::uint32_t sample(Rng& rng) const {
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t last = 0;
    for (std::size_t q = 0; q < p_.size(); ++q) {
      if (p_[q] <= 0.0) continue;
      last = q;
      acc += p_[q];
      if (u < acc) return static_cast<std::uint32_t>(q);
    }
    return static_cast<std::uint32_t>(last);
  }

  std::vector<std::uint32_t> support() const {
    std::vector<std::uint32_t> s;
    for (std::size_t q = 0; q < p_.size(); ++q)
      if (p_[q] > 0.0) s.push_back(static_cast<std::uint32_t>(q));
    return s;
  }

  double mean() const {
    double s = 0.0;
    for (std::size_t q = 0; q < p_.size(); ++q) s += static_cast<double>(q) * p_[q];
    return s;
  }

  // No mass strictly below w/(m+1).
  bool is_fair(std::uint32_t m) const { return mass_below(fairness_floor(w(), m)) == 0.0; }

  double mass_below(std::uint32_t q) const {
    double s = 0.0;
    for (std::size_t i = 0; i < q && i < p_.size(); ++i) s += p_[i];
    return s;
  }

  // Smallest budget q with q >= w/(m+1), i.e. ceil(w/(m+1)).
  static std::uint32_t fairness_floor(std::uint32_t w, std::uint32_t m) {
    return (w + m) / (m + 1);
  }

  friend bool operator==(const BudgetPmf&, const BudgetPmf&) = default;

 private:
  std::vector<double> p_;
};

inline double total_variation(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = std::max(a.size(), b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = i < a.size() ? a[i] : 0.0;
    const double y = i < b.size() ? b[i] : 0.0;
    s += std::abs(x - y);
  }
  return 0.5 * s;
}

// Normalized histogram of samples over {0..n-1}.
inline std::vector<double> empirical_pmf(const std::vector<std::uint32_t>& xs, std::size_t n) {
  std::vector<double> h(n, 0.0);
  for (auto x : xs) h.at(x) += 1.0;
  if (!xs.empty())
    for (auto& v : h) v /= static_cast<double>(xs.size());
  return h;
}

}  // namespace cachebar
