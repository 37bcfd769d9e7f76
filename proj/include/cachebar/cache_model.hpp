#pragma once

// Set-associative last-level cache with per-set LRU replacement.
//
// Sets are indexed by (page color, block index): every block of a page lands in
// a distinct set, and pages whose ids agree modulo the number of colors share
// the same group of sets. Lines remember the domain that filled them so the
// defender-side bookkeeping can attribute evictions.

#include <algorithm>
#include <bit>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cachebar/errors.hpp"

namespace cachebar {

using PageId = std::uint64_t;
using DomainId = std::uint32_t;

struct CacheGeometry {
  std::uint32_t ways = 0;
  std::uint32_t sets = 0;
  std::uint32_t line_size = 0;
  std::uint32_t page_size = 0;

  std::uint32_t lines_per_page() const { return page_size / line_size; }
  std::uint32_t colors() const { return sets / lines_per_page(); }

  // Validates the structural invariants; ways need not be a power of two here.
  static CacheGeometry make(std::uint32_t ways, std::uint32_t sets, std::uint32_t line_size,
                            std::uint32_t page_size) {
    if (ways < 1) throw ConfigError("geometry: ways must be >= 1");
    if (!std::has_single_bit(sets)) throw ConfigError("geometry: sets must be a power of two");
    if (!std::has_single_bit(line_size))
      throw ConfigError("geometry: line_size must be a power of two");
    if (!std::has_single_bit(page_size))
      throw ConfigError("geometry: page_size must be a power of two");
    if (page_size < line_size) throw ConfigError("geometry: page_size must be >= line_size");
    const std::uint32_t lpp = page_size / line_size;
    if (sets < lpp || sets % lpp != 0)
      throw ConfigError("geometry: sets (" + std::to_string(sets) +
                        ") not divisible by lines per page (" + std::to_string(lpp) + ")");
    return CacheGeometry{ways, sets, line_size, page_size};
  }

  friend bool operator==(const CacheGeometry&, const CacheGeometry&) = default;
};

// Geometry from total capacity. All inputs must be positive powers of two.
inline CacheGeometry derive_geometry(std::uint64_t cache_bytes, std::uint32_t ways,
                                     std::uint32_t line_size, std::uint32_t page_size) {
  if (!std::has_single_bit(cache_bytes) || !std::has_single_bit(ways) ||
      !std::has_single_bit(line_size) || !std::has_single_bit(page_size))
    throw ConfigError("derive_geometry: inputs must be positive powers of two");
  const std::uint64_t way_bytes = std::uint64_t{ways} * line_size;
  if (cache_bytes % way_bytes != 0)
    throw ConfigError("derive_geometry: cache size not divisible by ways * line_size");
  const std::uint64_t sets = cache_bytes / way_bytes;
  if (sets > UINT32_MAX) throw ConfigError("derive_geometry: too many sets");
  return CacheGeometry::make(ways, static_cast<std::uint32_t>(sets), line_size, page_size);
}

struct BlockAddr {
  PageId page = 0;
  std::uint32_t block = 0;  // index within the page, < lines_per_page

  friend auto operator<=>(const BlockAddr&, const BlockAddr&) = default;
};

struct SetLocation {
  std::uint32_t set_index = 0;
  std::uint32_t color = 0;
};

inline std::uint32_t page_color(const CacheGeometry& g, PageId page) {
  return static_cast<std::uint32_t>(page % g.colors());
}

inline SetLocation locate(const CacheGeometry& g, BlockAddr b) {
  const std::uint32_t color = page_color(g, b.page);
  return SetLocation{color * g.lines_per_page() + b.block, color};
}

struct CacheLine {
  BlockAddr block;
  DomainId domain = 0;  // domain whose access filled the line

  friend bool operator==(const CacheLine&, const CacheLine&) = default;
};

struct AccessResult {
  bool hit = false;
  std::optional<CacheLine> evicted;  // miss into a full set
  DomainId filled_by = 0;            // owner tag of the line after the access
};

class CacheState {
 public:
  explicit CacheState(CacheGeometry geometry) : geometry_(geometry), sets_(geometry.sets) {
    for (auto& s : sets_) s.reserve(geometry_.ways);
  }

  const CacheGeometry& geometry() const { return geometry_; }

  AccessResult access(DomainId domain, BlockAddr block) {
    check_block(block);
    auto& set = sets_[locate(geometry_, block).set_index];
    auto it = std::find_if(set.begin(), set.end(),
                           [&](const CacheLine& l) { return l.block == block; });
    AccessResult r;
    if (it != set.end()) {
      r.hit = true;
      r.filled_by = it->domain;
      std::rotate(set.begin(), it, it + 1);
      return r;
    }
    if (set.size() == geometry_.ways) {
      r.evicted = set.back();
      set.pop_back();
    }
    set.insert(set.begin(), CacheLine{block, domain});
    r.filled_by = domain;
    return r;
  }

  std::size_t flush_block(BlockAddr block) {
    check_block(block);
    auto& set = sets_[locate(geometry_, block).set_index];
    const auto n = std::erase_if(set, [&](const CacheLine& l) { return l.block == block; });
    return static_cast<std::size_t>(n);
  }

  std::size_t flush_page(PageId page) {
    std::size_t n = 0;
    for (std::uint32_t b = 0; b < geometry_.lines_per_page(); ++b) n += flush_block({page, b});
    return n;
  }

  bool contains(BlockAddr block) const {
    const auto& set = sets_[locate(geometry_, block).set_index];
    return std::any_of(set.begin(), set.end(),
                       [&](const CacheLine& l) { return l.block == block; });
  }

  bool contains_any(PageId page) const {
    for (std::uint32_t b = 0; b < geometry_.lines_per_page(); ++b)
      if (contains({page, b})) return true;
    return false;
  }

  // MRU first.
  std::span<const CacheLine> set_contents(std::uint32_t set_index) const {
    return sets_.at(set_index);
  }

  std::size_t lines_of(DomainId domain, std::uint32_t set_index) const {
    const auto& set = sets_.at(set_index);
    return static_cast<std::size_t>(
        std::count_if(set.begin(), set.end(), [&](const CacheLine& l) { return l.domain == domain; }));
  }

  void clear() {
    for (auto& s : sets_) s.clear();
  }

 private:
  void check_block(BlockAddr b) const {
    if (b.block >= geometry_.lines_per_page())
      throw LogicError("block index " + std::to_string(b.block) + " out of range");
  }

  CacheGeometry geometry_;
  std::vector<std::vector<CacheLine>> sets_;
};

}  // namespace cachebar
