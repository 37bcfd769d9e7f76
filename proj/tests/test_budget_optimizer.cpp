#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "cachebar/budget_optimizer.hpp"
#include "cachebar/rng.hpp"
#include "oracles.hpp"

using namespace cachebar;
using namespace oracle;

TEST(AttackerSum, DegenerateAtOne) {
  const auto s = attacker_sum_pmf(BudgetPmf::degenerate(16, 1), 2);
  EXPECT_EQ(s, BudgetPmf::degenerate(16, 2).probs());
}

TEST(AttackerSum, ClampsAtW) {
  for (std::uint32_t m : {1u, 2u, 5u}) EXPECT_EQ(attacker_sum_pmf(BudgetPmf::degenerate(8, 8), m)[8], 1.0);
  EXPECT_DOUBLE_EQ(attacker_sum_pmf(BudgetPmf::degenerate(8, 5), 2)[8], 1.0);
}

TEST(AttackerSum, ZeroDomainsRejected) {
  EXPECT_THROW(attacker_sum_pmf(BudgetPmf::degenerate(8, 8), 0), ConfigError);
}

TEST(AttackerSum, MatchesEnumeration) {
  Rng rng(17);
  for (std::uint32_t w = 2; w <= 8; ++w)
    for (std::uint32_t m = 1; m <= 3; ++m)
      for (int i = 0; i < 10; ++i) {
        const auto p = random_fair_pmf(w, m, rng);
        const auto got = attacker_sum_pmf(p, m), want = brute_attacker_sum(p, m);
        for (std::uint32_t q = 0; q <= w; ++q) ASSERT_NEAR(got[q], want[q], 1e-12);
      }
}

TEST(EvictionRow, MatchesEnumeration) {
  Rng rng(23);
  for (std::uint32_t w = 2; w <= 8; ++w)
    for (std::uint32_t m = 1; m <= 3; ++m)
      for (int i = 0; i < 10; ++i) {
        const auto p = random_fair_pmf(w, m, rng);
        const auto a = attacker_sum_pmf(p, m);
        for (std::uint32_t d = 0; d <= w; ++d) {
          const Row got = eviction_row(p, a, d), want = brute_row(p, m, d);
          for (std::uint32_t x = 0; x <= w; ++x) ASSERT_NEAR(got[x], want[x], 1e-12);
        }
      }
}

TEST(EvictionRow, FullBudgetsRevealDemand) {
  const BudgetPmf p = BudgetPmf::degenerate(16, 16);
  const auto a = attacker_sum_pmf(p, 3);
  for (std::uint32_t d = 0; d <= 16; ++d) EXPECT_EQ(eviction_distribution(p, a, d)[d], 1.0);
}

TEST(EvictionRow, IdleAttackerSeesNothing) {
  const BudgetPmf v = BudgetPmf::uniform(8, 2);
  const auto a = BudgetPmf::degenerate(8, 0).probs();
  for (std::uint32_t d = 0; d <= 8; ++d) EXPECT_NEAR(eviction_distribution(v, a, d)[0], 1.0, 1e-12);
}

TEST(EvictionRow, DegenerateBudgetsGiveSinglePoint) {
  for (std::uint32_t w : {4u, 8u, 16u})
    for (std::uint32_t q = 0; q <= w; ++q)
      for (std::uint32_t m = 1; m <= 3; ++m) {
        const BudgetPmf p = BudgetPmf::degenerate(w, q);
        const auto a = attacker_sum_pmf(p, m);
        const std::uint32_t qa = std::min(w, m * q);
        for (std::uint32_t d = 0; d <= w; ++d) {
          const Row r = eviction_distribution(p, a, d);
          const std::uint32_t used = qa + std::min(q, d);
          const std::uint32_t x = used > w ? used - w : 0;
          EXPECT_EQ(r[x], 1.0);
          EXPECT_EQ(evictions_given(w, q, qa, d), x);
        }
      }
}

TEST(EvictionRow, RowsNormalizedAndBoundedByDemand) {
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const std::uint32_t w = 2 + static_cast<std::uint32_t>(rng.below(15));
    const std::uint32_t m = 1 + static_cast<std::uint32_t>(rng.below(3));
    const auto p = random_fair_pmf(w, m, rng);
    const auto t = eviction_table(p, attacker_sum_pmf(p, m));
    for (std::uint32_t d = 0; d <= w; ++d) {
      EXPECT_NEAR(sum(t[d]), 1.0, 1e-12);
      for (std::uint32_t x = d + 1; x <= w; ++x) EXPECT_EQ(t[d][x], 0.0);
    }
  }
}

TEST(Security, GammaClosedForm) {
  for (std::uint32_t w : {2u, 4u, 8u, 16u})
    for (std::uint32_t m : {1u, 3u}) EXPECT_EQ(gamma_normalizer(w, m), double(w) * (w + 1));
  EXPECT_EQ(security_objective(BudgetPmf::degenerate(16, 16), 3), 272.0);
}

TEST(Security, Bounded) {
  Rng rng(9);
  for (int i = 0; i < 30; ++i) {
    const auto p = random_fair_pmf(8, 2, rng);
    const double s = security_objective(p, 2);
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 72.0 + 1e-9);
  }
}

TEST(Security, IdenticalRowsScoreZero) {
  EXPECT_EQ(security_objective(BudgetPmf::degenerate(16, 0), 3), 0.0);
}

TEST(Emd, Examples) {
  EXPECT_EQ(emd_objective(BudgetPmf::degenerate(16, 16)), 0.0);
  EXPECT_EQ(emd_objective(BudgetPmf::degenerate(16, 0)), 16.0);
  EXPECT_EQ(delta_normalizer(16), 16.0);
  EXPECT_NEAR(emd_objective(BudgetPmf::uniform(16)), 8.0, 1e-12);
}

TEST(Pmf, Validation) {
  EXPECT_THROW(BudgetPmf(std::vector<double>{0.5, 0.6}), ConfigError);
  EXPECT_THROW(BudgetPmf(std::vector<double>{1.1, -0.1}), ConfigError);
  EXPECT_EQ(BudgetPmf::fairness_floor(16, 3), 4u);
  EXPECT_EQ(BudgetPmf::fairness_floor(4, 1), 2u);
  EXPECT_EQ(BudgetPmf::fairness_floor(16, 2), 6u);
  EXPECT_TRUE(BudgetPmf::uniform(16, 4).is_fair(3));
  EXPECT_FALSE(BudgetPmf::uniform(16, 3).is_fair(3));
}

TEST(Pmf, SamplingFrequencies) {
  const BudgetPmf p(std::vector<double>{0.1, 0.0, 0.5, 0.4});
  Rng rng(3);
  std::vector<std::uint32_t> xs;
  for (int i = 0; i < 100000; ++i) xs.push_back(p.sample(rng));
  EXPECT_LT(total_variation(empirical_pmf(xs, 4), p.probs()), 0.01);
}

TEST(Optimize, RejectsBadInputs) {
  EXPECT_THROW(optimize(1, 1, 0.01), ConfigError);
  EXPECT_THROW(optimize(16, 0, 0.01), ConfigError);
  EXPECT_THROW(optimize(16, 3, 0.0), ConfigError);
  EXPECT_THROW(optimize(16, 3, 1.0), ConfigError);
}

TEST(Optimize, SmallCaseMatchesGrid) {
  const OptimizationResult r = optimize(4, 1, 0.01);
  const double coarse = grid_optimum(4, 1, 0.01, 100);
  const double fine = grid_optimum(4, 1, 0.01, 1000);
  // The coarse grid cannot land on the constraint boundary, so it sits a
  // little above the true optimum; the optimizer must not be worse than it.
  EXPECT_LE(r.u, coarse + 1e-3);
  EXPECT_NEAR(r.u, fine, 1e-3);
  EXPECT_LE(r.u, fine + 1e-9);
  EXPECT_LE(r.constraint_residual, 1e-9);
}

TEST(Optimize, ResultInvariants) {
  for (auto [w, m] : {std::pair{4u, 1u}, {6u, 2u}, {8u, 3u}}) {
    OptimizerOptions o;
    o.starts = 4;
    const BudgetOptimizer opt(w, m, 0.05, o);
    const OptimizationResult r = opt.run();
    EXPECT_TRUE(r.pmf.is_fair(m));
    EXPECT_EQ(r.pmf.mass_below(BudgetPmf::fairness_floor(w, m)), 0.0);
    EXPECT_DOUBLE_EQ(r.u, r.security_term / r.gamma);
    EXPECT_GE(r.u + 1e-9, r.emd_term / (r.delta * (1 + r.epsilon)));
    const OptimizationResult base = opt.evaluate(BudgetPmf::uniform(w, opt.fairness_floor()));
    EXPECT_LE(r.u, base.u);
  }
}

TEST(Optimize, Deterministic) {
  OptimizerOptions o;
  o.starts = 3;
  o.seed = 99;
  const auto a = optimize(8, 2, 0.01, o), b = optimize(8, 2, 0.01, o);
  EXPECT_EQ(a.pmf, b.pmf);
  EXPECT_EQ(a.u, b.u);
}
