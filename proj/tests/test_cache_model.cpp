#include <gtest/gtest.h>

#include <algorithm>
#include <deque>
#include <map>
#include <set>

#include "cachebar/cache_model.hpp"
#include "cachebar/rng.hpp"

using namespace cachebar;

TEST(Geometry, EightMegabyteSixteenWay) {
  const CacheGeometry g = derive_geometry(8ull << 20, 16, 64, 4096);
  EXPECT_EQ(g.sets, 8192u);
  EXPECT_EQ(g.lines_per_page(), 64u);
  EXPECT_EQ(g.colors(), 128u);
}

TEST(Geometry, DirectMapped) {
  const CacheGeometry g = derive_geometry(64 << 10, 1, 64, 4096);
  EXPECT_EQ(g.sets, 1024u);
  EXPECT_EQ(g.colors(), 16u);
}

TEST(Geometry, HugePagesRejected) {
  EXPECT_THROW(derive_geometry(8ull << 20, 16, 64, 2u << 20), ConfigError);
}

TEST(Geometry, NonPowerOfTwoRejected) {
  EXPECT_THROW(derive_geometry(3u << 20, 16, 64, 4096), ConfigError);
  EXPECT_THROW(derive_geometry(8ull << 20, 12, 64, 4096), ConfigError);
  EXPECT_THROW(derive_geometry(8ull << 20, 16, 48, 4096), ConfigError);
  EXPECT_THROW(derive_geometry(64, 16, 64, 4096), ConfigError);
  EXPECT_THROW(CacheGeometry::make(0, 4, 64, 64), ConfigError);
  EXPECT_THROW(CacheGeometry::make(4, 4, 128, 64), ConfigError);
}

TEST(Locate, BlocksOfOnePageUseDistinctSets) {
  const CacheGeometry g = derive_geometry(8ull << 20, 16, 64, 4096);
  EXPECT_NE(locate(g, {0, 0}).set_index, locate(g, {0, 1}).set_index);
  for (PageId p : {0ull, 5ull, 1234ull}) {
    std::set<std::uint32_t> sets;
    for (std::uint32_t b = 0; b < g.lines_per_page(); ++b) sets.insert(locate(g, {p, b}).set_index);
    EXPECT_EQ(sets.size(), g.lines_per_page());
  }
}

TEST(Locate, SameColorPagesCollide) {
  const CacheGeometry g = derive_geometry(8ull << 20, 16, 64, 4096);
  for (std::uint32_t b : {0u, 7u, 63u}) {
    EXPECT_EQ(locate(g, {3, b}).set_index, locate(g, {3 + g.colors(), b}).set_index);
    EXPECT_EQ(locate(g, {3, b}).color, page_color(g, 3));
  }
}

TEST(Locate, InRange) {
  const CacheGeometry g = CacheGeometry::make(4, 16, 64, 256);
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const BlockAddr b{rng.below(1u << 20), static_cast<std::uint32_t>(rng.below(g.lines_per_page()))};
    EXPECT_LT(locate(g, b).set_index, g.sets);
  }
}

TEST(Access, MissThenHit) {
  CacheState c(CacheGeometry::make(2, 1, 64, 64));
  const auto first = c.access(1, {0, 0});
  EXPECT_FALSE(first.hit);
  EXPECT_FALSE(first.evicted);
  EXPECT_TRUE(c.access(1, {0, 0}).hit);
}

TEST(Access, LruEviction) {
  CacheState c(CacheGeometry::make(2, 1, 64, 64));
  c.access(1, {1, 0});
  c.access(1, {2, 0});
  const auto r = c.access(2, {3, 0});
  ASSERT_TRUE(r.evicted);
  EXPECT_EQ(r.evicted->block, (BlockAddr{1, 0}));
  EXPECT_EQ(r.evicted->domain, 1u);
}

TEST(Access, OutOfRangeBlock) {
  CacheState c(CacheGeometry::make(2, 4, 64, 128));
  EXPECT_THROW(c.access(1, {0, 2}), LogicError);
}

// Brute-force LRU replay: a victim touching d fresh lines evicts min(d, w) of
// the attacker's primed lines.
TEST(Access, PrimedSetEvictions) {
  for (std::uint32_t w : {1u, 2u, 4u, 16u}) {
    const CacheGeometry g = CacheGeometry::make(w, 1, 64, 64);
    for (std::uint32_t d = 0; d <= 2 * w; ++d) {
      CacheState c(g);
      for (std::uint32_t i = 0; i < w; ++i) c.access(1, {i, 0});
      std::uint32_t evicted = 0;
      for (std::uint32_t i = 0; i < d; ++i) {
        const auto r = c.access(2, {1000 + i, 0});
        if (r.evicted && r.evicted->domain == 1) ++evicted;
      }
      EXPECT_EQ(evicted, std::min(d, w)) << "w=" << w << " d=" << d;
    }
  }
}

TEST(Flush, WholePage) {
  const CacheGeometry g = CacheGeometry::make(4, 16, 64, 256);
  CacheState c(g);
  for (std::uint32_t b = 0; b < g.lines_per_page(); ++b) c.access(1, {9, b});
  EXPECT_EQ(c.flush_page(9), g.lines_per_page());
  for (std::uint32_t b = 0; b < g.lines_per_page(); ++b) EXPECT_FALSE(c.access(1, {9, b}).hit);
}

TEST(Flush, UncachedBlock) {
  CacheState c(CacheGeometry::make(4, 16, 64, 256));
  EXPECT_EQ(c.flush_block({1, 1}), 0u);
}

TEST(Flush, LeavesOtherLinesInOrder) {
  const CacheGeometry g = CacheGeometry::make(4, 4, 64, 64);
  CacheState c(g);
  Rng rng(5);
  for (int i = 0; i < 40; ++i) c.access(static_cast<DomainId>(rng.below(3)), {rng.below(12), 0});
  std::vector<std::vector<CacheLine>> before;
  for (std::uint32_t s = 0; s < g.sets; ++s) {
    auto span = c.set_contents(s);
    before.emplace_back(span.begin(), span.end());
  }
  const std::size_t target = before[1].empty() ? 0 : 1;
  ASSERT_FALSE(before[target].empty());
  const BlockAddr victim = before[target][1 % before[target].size()].block;
  EXPECT_EQ(c.flush_block(victim), 1u);
  for (std::uint32_t s = 0; s < g.sets; ++s) {
    auto expect = before[s];
    std::erase_if(expect, [&](const CacheLine& l) { return l.block == victim; });
    auto span = c.set_contents(s);
    EXPECT_EQ(std::vector<CacheLine>(span.begin(), span.end()), expect);
  }
}

// Reference LRU: one stack per set, most recent at the back.
namespace {
struct StackLru {
  std::uint32_t ways;
  std::map<std::uint32_t, std::deque<CacheLine>> sets;

  AccessResult access(const CacheGeometry& g, DomainId d, BlockAddr b) {
    auto& s = sets[locate(g, b).set_index];
    AccessResult r;
    for (auto it = s.begin(); it != s.end(); ++it)
      if (it->block == b) {
        const CacheLine l = *it;
        s.erase(it);
        s.push_back(l);
        r.hit = true;
        r.filled_by = l.domain;
        return r;
      }
    if (s.size() == ways) {
      r.evicted = s.front();
      s.pop_front();
    }
    s.push_back({b, d});
    r.filled_by = d;
    return r;
  }
};
}  // namespace

TEST(Property, MatchesStackLruOracle) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    const std::uint32_t ways = 1 + static_cast<std::uint32_t>(rng.below(8));
    const CacheGeometry g = CacheGeometry::make(ways, 8, 64, 256);
    CacheState c(g);
    StackLru ref{ways, {}};
    for (int i = 0; i < 5000; ++i) {
      const DomainId d = static_cast<DomainId>(rng.below(3));
      const BlockAddr b{rng.below(40), static_cast<std::uint32_t>(rng.below(g.lines_per_page()))};
      if (rng.below(10) == 0) {
        c.flush_block(b);
        auto& s = ref.sets[locate(g, b).set_index];
        std::erase_if(s, [&](const CacheLine& l) { return l.block == b; });
        continue;
      }
      const AccessResult got = c.access(d, b);
      const AccessResult want = ref.access(g, d, b);
      ASSERT_EQ(got.hit, want.hit);
      ASSERT_EQ(got.evicted, want.evicted);
      ASSERT_EQ(got.filled_by, want.filled_by);
    }
    for (std::uint32_t s = 0; s < g.sets; ++s) {
      const auto span = c.set_contents(s);
      ASSERT_LE(span.size(), ways);
      std::set<BlockAddr> uniq;
      for (const auto& l : span) uniq.insert(l.block);
      ASSERT_EQ(uniq.size(), span.size());
    }
  }
}
