#include <gtest/gtest.h>

#include "cachebar/cacheability.hpp"

using namespace cachebar;

namespace {

// 2 lines per page, 2 colors: even page ids are color 0.
CacheGeometry geom(std::uint32_t ways) { return CacheGeometry::make(ways, 4, 64, 128); }

CacheBarConfig fixed_budgets() {
  CacheBarConfig c;
  c.pmf.reset();
  return c;
}

}  // namespace

TEST(Fault, QueueEvictsLeastRecentPage) {
  CacheBar cb(geom(8), fixed_budgets());
  cb.set_budget(1, 4);
  for (VPage v = 0; v < 5; ++v) cb.map(1, v, 2 * v);
  for (VPage v = 0; v < 4; ++v) EXPECT_TRUE(cb.access(1, v, AccessKind::read).faulted);
  const AccessReport fifth = cb.access(1, 4, AccessKind::read);
  ASSERT_TRUE(fifth.faulted);
  EXPECT_EQ(fifth.fault.dequeued, std::vector<PageId>{0});
  EXPECT_EQ(cb.queue(1, 0).entries, (std::vector<PageId>{8, 6, 4, 2}));
  EXPECT_TRUE(cb.lifecycle().pte(1, 0).nc_bit);
  EXPECT_FALSE(cb.cache().contains_any(0));
  EXPECT_FALSE(cb.access(1, 1, AccessKind::read).faulted);
  EXPECT_TRUE(cb.access(1, 0, AccessKind::read).faulted);
  cb.check_invariants();
}

TEST(Fault, CoaThenNcInOneFault) {
  CacheBar cb(geom(8), fixed_budgets());
  cb.map(1, 0, 2);
  cb.map(2, 0, 2);
  const Pte& before = cb.lifecycle().pte(2, 0);
  ASSERT_TRUE(before.coa_bit);
  ASSERT_TRUE(before.nc_bit);
  const FaultResolution r = cb.handle_fault(2, 0);
  EXPECT_TRUE(r.coa);
  EXPECT_TRUE(r.nc);
  EXPECT_TRUE(r.enqueued);
  EXPECT_EQ(cb.lifecycle().state(2), PageState::accessed);
  EXPECT_FALSE(cb.lifecycle().pte(2, 0).coa_bit);
  EXPECT_FALSE(cb.lifecycle().pte(2, 0).nc_bit);
}

TEST(Fault, CopyIsEnqueuedNotTheOriginal) {
  CacheBar cb(geom(8), fixed_budgets());
  cb.map(1, 0, 2);
  cb.map(2, 0, 2);
  cb.access(2, 0, AccessKind::read);
  const AccessReport r = cb.access(1, 0, AccessKind::read);
  ASSERT_TRUE(r.fault.copied);
  const PageId c = *r.fault.copied;
  EXPECT_TRUE(cb.queue(1, page_color(cb.geometry(), c)).contains(c));
  EXPECT_FALSE(cb.queue(1, 0).contains(2));
  cb.check_invariants();
}

TEST(Fault, NeitherBitEscalates) {
  CacheBar cb(geom(8), fixed_budgets());
  cb.map(1, 0, 2);
  cb.access(1, 0, AccessKind::read);
  EXPECT_THROW(cb.handle_fault(1, 0), UnknownFaultError);
}

TEST(Fault, OnlyTheFaultingPteIsCleared) {
  CacheBar cb(geom(8), fixed_budgets());
  cb.map(1, 0, 2);
  cb.map(1, 1, 2);
  cb.access(1, 0, AccessKind::read);
  EXPECT_FALSE(cb.lifecycle().pte(1, 0).nc_bit);
  EXPECT_TRUE(cb.lifecycle().pte(1, 1).nc_bit);
  const AccessReport second = cb.access(1, 1, AccessKind::read);
  EXPECT_TRUE(second.faulted);
  EXPECT_EQ(cb.queue(1, 0).entries.size(), 1u);
}

TEST(Fault, ZeroBudgetServesUncached) {
  CacheBar cb(geom(8), fixed_budgets());
  cb.set_budget(1, 0);
  cb.map(1, 0, 2);
  const AccessReport r = cb.access(1, 0, AccessKind::read);
  EXPECT_TRUE(r.fault.uncached);
  EXPECT_FALSE(cb.cache().contains_any(2));
  EXPECT_TRUE(cb.access(1, 0, AccessKind::read).faulted);
  cb.check_invariants();
}

TEST(Fault, LatencyModel) {
  CacheBar cb(geom(8), fixed_budgets());
  cb.map(1, 0, 2);
  const LatencyModel lm;
  EXPECT_EQ(cb.access(1, 0, AccessKind::read).latency, lm.fault);
  EXPECT_EQ(cb.access(1, 0, AccessKind::read).latency, lm.hit);
  EXPECT_EQ(cb.access(1, 0, AccessKind::read, 1).latency, lm.miss);
}

TEST(Resort, OrdersByAccessedCount) {
  CacheBar cb(geom(8), fixed_budgets());
  // p1 = page 2 (one vpage), p2 = page 4 (three vpages), p3 = page 6 (two vpages).
  cb.map(1, 0, 2);
  for (VPage v = 1; v <= 3; ++v) cb.map(1, v, 4);
  cb.map(1, 4, 6);
  cb.map(1, 5, 6);
  for (VPage v = 0; v <= 5; ++v) cb.access(1, v, AccessKind::read);
  EXPECT_EQ(cb.queue(1, 0).entries, (std::vector<PageId>{6, 4, 2}));
  cb.lifecycle().clear_accessed_bits();
  for (VPage v : {1, 2, 3, 4}) cb.access(1, v, AccessKind::read);
  cb.resort_queue(1, 0);
  EXPECT_EQ(cb.queue(1, 0).entries, (std::vector<PageId>{4, 6, 2}));
  for (const auto& [k, pte] : cb.lifecycle().ptes()) EXPECT_FALSE(pte.accessed_bit);
  cb.resort_queue(1, 0);  // all counts now 0
  EXPECT_EQ(cb.queue(1, 0).entries, (std::vector<PageId>{4, 6, 2}));
}

TEST(Resort, EmptyQueue) {
  CacheBar cb(geom(8), fixed_budgets());
  cb.resort_queue(3, 1);
  EXPECT_TRUE(cb.queue(3, 1).entries.empty());
}

TEST(Redraw, DegenerateAtW) {
  CacheBarConfig cfg;
  cfg.pmf = BudgetPmf::degenerate(8, 8);
  CacheBar cb(geom(8), cfg);
  for (DomainId d = 0; d < 4; ++d) cb.add_domain(d);
  for (VPage v = 0; v < 8; ++v) {
    cb.map(0, v, 2 * v);
    cb.access(0, v, AccessKind::read);
  }
  for (int i = 0; i < 5; ++i) {
    cb.redraw_budgets();
    for (DomainId d = 0; d < 4; ++d) EXPECT_EQ(cb.budget(d), 8u);
  }
  EXPECT_EQ(cb.queue(0, 0).entries.size(), 8u);
}

TEST(Redraw, FrequenciesMatchPmf) {
  CacheBarConfig cfg;
  cfg.pmf = BudgetPmf(std::vector<double>{0, 0, 0.1, 0.2, 0.3, 0, 0, 0.15, 0.25});
  cfg.seed = 11;
  CacheBar cb(geom(8), cfg);
  cb.add_domain(1);
  std::vector<std::uint32_t> draws;
  for (int i = 0; i < 100000; ++i) draws.push_back(cb.redraw_budgets().q.at(1));
  EXPECT_LT(total_variation(empirical_pmf(draws, 9), cfg.pmf->probs()), 0.01);
}

TEST(Redraw, ShrinkFlushesLeastRecent) {
  CacheBar cb(geom(8), fixed_budgets());
  for (VPage v = 0; v < 8; ++v) {
    cb.map(1, v, 2 * v);
    cb.access(1, v, AccessKind::read);
  }
  ASSERT_EQ(cb.queue(1, 0).entries.size(), 8u);
  cb.set_budget(1, 4);
  EXPECT_EQ(cb.queue(1, 0).entries, (std::vector<PageId>{14, 12, 10, 8}));
  for (PageId p : {0, 2, 4, 6}) EXPECT_FALSE(cb.cache().contains_any(p));
  for (VPage v = 0; v < 4; ++v) EXPECT_TRUE(cb.lifecycle().pte(1, v).nc_bit);
  cb.check_invariants();
}

TEST(Redraw, EveryTenthDaemonRun) {
  CacheBarConfig cfg;
  cfg.pmf = BudgetPmf::uniform(8, 2);
  CacheBar cb(geom(8), cfg);
  cb.add_domain(1);
  for (int i = 1; i <= 30; ++i) EXPECT_EQ(cb.tick().redrew, i % 10 == 0);
}

TEST(Tick, EmitsIntervalLog) {
  CacheBar cb(geom(8), fixed_budgets());
  cb.add_domain(1);
  cb.add_domain(2);
  const auto r = cb.tick();
  ASSERT_EQ(r.log.size(), 2u);
  EXPECT_EQ(r.log[0].tick, 1u);
  EXPECT_EQ(r.log[0].q, 8u);
}

namespace {

// Attacker (domain 1) fills set 0 with w lines, then the victim (domain 2)
// touches d private color-0 pages under budget q_v.
std::size_t primed_fill(std::uint32_t w, std::uint32_t q_v, std::uint32_t d) {
  CacheBar cb(geom(w), fixed_budgets());
  cb.set_budget(1, w);
  cb.set_budget(2, q_v);
  for (VPage v = 0; v < w; ++v) {
    cb.map(1, v, 2 * v);
    cb.access(1, v, AccessKind::read);
  }
  EXPECT_EQ(cb.cache().lines_of(1, 0), w);
  std::vector<VPage> pages;
  for (VPage v = 0; v < d; ++v) {
    cb.map(2, v, 1000 + 2 * v);
    pages.push_back(v);
  }
  const std::size_t evicted = cb.victim_fill(2, pages);
  EXPECT_EQ(w - cb.cache().lines_of(1, 0), evicted);
  cb.check_invariants();
  return evicted;
}

}  // namespace

TEST(VictimFill, FullBudgetRevealsDemand) { EXPECT_EQ(primed_fill(16, 16, 5), 5u); }

TEST(VictimFill, BackFillCapsEvictions) {
  EXPECT_EQ(primed_fill(16, 4, 10), 4u);
  for (std::uint32_t q = 0; q <= 8; ++q)
    for (std::uint32_t d = 0; d <= 8; ++d) EXPECT_EQ(primed_fill(8, q, d), std::min(q, d));
}

TEST(VictimFill, NoDemand) { EXPECT_EQ(primed_fill(16, 16, 0), 0u); }

TEST(Independence, CacheableForOneDomainOnly) {
  CacheBar cb(geom(8), fixed_budgets());
  cb.set_budget(2, 0);
  cb.map(1, 0, 2);
  cb.map(2, 0, 2);
  cb.access(1, 0, AccessKind::read);
  cb.tick();
  cb.tick();  // page back to SHARED
  cb.access(1, 0, AccessKind::read);
  EXPECT_TRUE(cb.queue(1, 0).contains(2));
  EXPECT_FALSE(cb.queue(2, 0).contains(2));
  EXPECT_FALSE(cb.lifecycle().pte(1, 0).nc_bit);
  EXPECT_TRUE(cb.lifecycle().pte(2, 0).nc_bit);
  cb.check_invariants();
}

TEST(Config, PmfMustMatchWays) {
  CacheBarConfig cfg;
  cfg.pmf = BudgetPmf::degenerate(4, 4);
  EXPECT_THROW(CacheBar(geom(8), cfg), ConfigError);
}

TEST(Property, RandomEventsKeepQueueInvariants) {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    CacheBarConfig cfg;
    cfg.pmf = BudgetPmf::uniform(4, 1);
    cfg.seed = seed;
    CacheBar cb(CacheGeometry::make(4, 8, 64, 128), cfg);
    Rng rng(seed * 7919);
    std::uint64_t faults = 0, evictions = 0;
    for (int i = 0; i < 4000; ++i) {
      const DomainId d = static_cast<DomainId>(rng.below(3));
      const VPage v = rng.below(8);
      const auto op = rng.below(100);
      if (op < 15) {
        if (!cb.lifecycle().has_pte(d, v)) cb.map(d, v, rng.below(16));
      } else if (op < 20) {
        if (cb.lifecycle().has_pte(d, v)) cb.unmap(d, v);
      } else if (op < 92) {
        if (cb.lifecycle().has_pte(d, v)) {
          const auto r = cb.access(d, v, static_cast<AccessKind>(rng.below(3)),
                                   static_cast<std::uint32_t>(rng.below(2)));
          faults += r.faulted;
          evictions += r.fault.dequeued.size();
        }
      } else {
        cb.tick();
      }
      ASSERT_NO_THROW(cb.check_invariants()) << "seed " << seed << " event " << i;
    }
    EXPECT_GT(faults, 0u);
    EXPECT_GT(evictions, 0u);
  }
}
