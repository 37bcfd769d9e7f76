#pragma once

// Line-oriented workload traces and memory-footprint accounting.
//
//   map <domain> <vpage> <ppage>
//   unmap <domain> <vpage>
//   access <domain> <vpage> r|w|f [block]
//   tick
//
// Blank lines and text after '#' are ignored.

#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "cachebar/cache_model.hpp"
#include "cachebar/errors.hpp"
#include "cachebar/page_lifecycle.hpp"

namespace cachebar {

struct MapEvent {
  DomainId domain;
  VPage vpage;
  PageId ppage;
};
struct UnmapEvent {
  DomainId domain;
  VPage vpage;
};
struct AccessEvent {
  DomainId domain;
  VPage vpage;
  AccessKind kind;
  std::uint32_t block = 0;
};
struct TickEvent {};

using Event = std::variant<MapEvent, UnmapEvent, AccessEvent, TickEvent>;
using Workload = std::vector<Event>;

inline Workload parse_workload(std::istream& in) {
  Workload out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    std::string op;
    if (!(ss >> op)) continue;
    auto fail = [&](const std::string& why) {
      throw ConfigError("workload line " + std::to_string(lineno) + ": " + why);
    };
    auto finish = [&] {
      std::string extra;
      if (ss >> extra) fail("trailing token '" + extra + "'");
    };
    if (op == "map") {
      MapEvent e{};
      if (!(ss >> e.domain >> e.vpage >> e.ppage)) fail("expected: map <domain> <vpage> <ppage>");
      finish();
      out.emplace_back(e);
    } else if (op == "unmap") {
      UnmapEvent e{};
      if (!(ss >> e.domain >> e.vpage)) fail("expected: unmap <domain> <vpage>");
      finish();
      out.emplace_back(e);
    } else if (op == "access") {
      AccessEvent e{};
      std::string kind;
      if (!(ss >> e.domain >> e.vpage >> kind)) fail("expected: access <domain> <vpage> r|w|f");
      if (kind == "r") e.kind = AccessKind::read;
      else if (kind == "w") e.kind = AccessKind::write;
      else if (kind == "f") e.kind = AccessKind::clflush;
      else fail("access kind must be r, w or f");
      if (std::uint32_t b; ss >> b) e.block = b;
      else if (!ss.eof()) fail("bad block index");
      ss.clear();
      finish();
      out.emplace_back(e);
    } else if (op == "tick") {
      finish();
      out.emplace_back(TickEvent{});
    } else {
      fail("unknown event '" + op + "'");
    }
  }
  return out;
}

inline Workload parse_workload(const std::string& text) {
  std::istringstream in(text);
  return parse_workload(in);
}

inline std::string format_event(const Event& e) {
  return std::visit(
      [](const auto& ev) -> std::string {
        using T = std::decay_t<decltype(ev)>;
        if constexpr (std::is_same_v<T, MapEvent>)
          return "map " + std::to_string(ev.domain) + " " + std::to_string(ev.vpage) + " " +
                 std::to_string(ev.ppage);
        else if constexpr (std::is_same_v<T, UnmapEvent>)
          return "unmap " + std::to_string(ev.domain) + " " + std::to_string(ev.vpage);
        else if constexpr (std::is_same_v<T, AccessEvent>)
          return "access " + std::to_string(ev.domain) + " " + std::to_string(ev.vpage) + " " +
                 (ev.kind == AccessKind::read ? "r" : ev.kind == AccessKind::write ? "w" : "f") +
                 (ev.block ? " " + std::to_string(ev.block) : "");
        else
          return "tick";
      },
      e);
}

// Feeds events into a lifecycle, one tick() per tick event.
inline void apply(PageLifecycle& life, const Event& e) {
  std::visit(
      [&](const auto& ev) {
        using T = std::decay_t<decltype(ev)>;
        if constexpr (std::is_same_v<T, MapEvent>) life.map_page(ev.domain, ev.vpage, ev.ppage);
        else if constexpr (std::is_same_v<T, UnmapEvent>) life.unmap_page(ev.domain, ev.vpage);
        else if constexpr (std::is_same_v<T, AccessEvent>)
          life.handle_access(ev.domain, ev.vpage, ev.kind, ev.block);
        else life.tick();
      },
      e);
}

struct FootprintReport {
  std::size_t shared_pages = 0;     // every mapped page shared freely
  std::size_t nosharing_pages = 0;  // one private page per (page, domain)
  std::size_t cachebar_pages = 0;   // copy-on-access with daemon merging
};

// Page counts at the end of the trace under the three policies.
inline FootprintReport footprint_report(const Workload& wl, CacheGeometry g = CacheGeometry::make(16, 64, 64, 4096),
                                        LifecycleConfig cfg = {}) {
  std::map<std::pair<DomainId, VPage>, PageId> mapping;
  CacheState cache(g);
  PageLifecycle life(cache, cfg);
  for (const Event& e : wl) {
    if (auto* m = std::get_if<MapEvent>(&e)) mapping[{m->domain, m->vpage}] = m->ppage;
    if (auto* u = std::get_if<UnmapEvent>(&e)) mapping.erase({u->domain, u->vpage});
    apply(life, e);
  }
  std::set<PageId> pages;
  std::set<std::pair<PageId, DomainId>> per_domain;
  for (const auto& [k, p] : mapping) {
    pages.insert(p);
    per_domain.insert({p, k.first});
  }
  FootprintReport r;
  r.shared_pages = pages.size();
  r.nosharing_pages = per_domain.size();
  r.cachebar_pages = life.mapped_page_count();
  return r;
}

// N domains map the same `shared` pages (vpage i -> ppage i). Idle: the
// domains take turns touching each page once, far enough apart that every
// page is demoted before the next domain arrives. Busy: every `stride`-th
// domain touches every page each tick for `ticks` ticks.
inline Workload synthetic_workload(std::uint32_t domains, std::uint32_t shared, std::uint32_t ticks,
                                   std::uint32_t busy_stride) {
  if (domains == 0 || shared == 0) throw ConfigError("synthetic workload: empty");
  Workload wl;
  for (DomainId d = 0; d < domains; ++d)
    for (std::uint32_t p = 0; p < shared; ++p) wl.emplace_back(MapEvent{d, p, p});
  if (busy_stride == 0) {
    for (DomainId d = 0; d < domains; ++d) {
      for (std::uint32_t p = 0; p < shared; ++p) wl.emplace_back(AccessEvent{d, p, AccessKind::read, 0});
      wl.emplace_back(TickEvent{});
      wl.emplace_back(TickEvent{});
    }
    for (std::uint32_t t = 0; t < ticks; ++t) wl.emplace_back(TickEvent{});
    return wl;
  }
  for (std::uint32_t t = 0; t < ticks; ++t) {
    for (DomainId d = 0; d < domains; d += busy_stride)
      for (std::uint32_t p = 0; p < shared; ++p) wl.emplace_back(AccessEvent{d, p, AccessKind::read, 0});
    wl.emplace_back(TickEvent{});
  }
  return wl;
}

}  // namespace cachebar
