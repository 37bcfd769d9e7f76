// Optimizes a small budget distribution and shows what a Prime-Probe
// attacker sees under it.

#include <cstdio>
#include <iostream>

#include "cachebar/attack_lab.hpp"
#include "cachebar/budget_optimizer.hpp"

using namespace cachebar;

int main() {
  const std::uint32_t w = 8, m = 2;
  OptimizerOptions opt;
  opt.starts = 4;
  const OptimizationResult r = optimize(w, m, 0.05, opt);
  std::cout << "w=" << w << " m=" << m << " u=" << r.u << " (uniform: "
            << BudgetOptimizer(w, m, 0.05, opt).evaluate(BudgetPmf::uniform(w, BudgetPmf::fairness_floor(w, m))).u
            << ")\n";
  for (std::uint32_t q = 0; q <= w; ++q)
    if (r.pmf[q] > 0) std::cout << "  P[Q=" << q << "] = " << r.pmf[q] << "\n";

  const auto attacker = attacker_sum_pmf(r.pmf, m);
  std::cout << "P[X=x | d]:\n";
  for (std::uint32_t d = 0; d <= w; d += 2) {
    std::printf("  d=%u:", d);
    for (double p : eviction_row(r.pmf.probs(), attacker, d)) std::printf(" %.3f", p);
    std::printf("\n");
  }
  return 0;
}
