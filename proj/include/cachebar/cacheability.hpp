#pragma once

// Per-domain, per-color cacheable queues.
//
// A domain may keep at most q pages of each color domain-cacheable, i.e. at
// most q lines in each cache set. Pages outside the queue have the NC bit set
// in the domain's PTEs, so touching them faults; the fault handler enqueues the
// page and, if the queue overflows, evicts its least recently ranked page
// (setting NC again and flushing the page). Budgets are redrawn from a PMF
// every tenth run of the accessed daemon.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cachebar/cache_model.hpp"
#include "cachebar/errors.hpp"
#include "cachebar/page_lifecycle.hpp"
#include "cachebar/pmf.hpp"
#include "cachebar/rng.hpp"

namespace cachebar {

struct CacheableQueue {
  DomainId domain = 0;
  std::uint32_t color = 0;
  std::uint32_t capacity = 0;
  std::vector<PageId> entries;  // front = highest ranked

  bool contains(PageId p) const { return std::find(entries.begin(), entries.end(), p) != entries.end(); }
};

struct BudgetAssignment {
  std::map<DomainId, std::uint32_t> q;
  std::uint64_t draw_tick = 0;
};

// Modeled load latencies in cycles. A faulting access reports the sentinel.
struct LatencyModel {
  std::uint32_t hit = 40;
  std::uint32_t miss = 200;
  std::uint32_t fault = 4000;
};

struct CacheBarConfig {
  bool cacheability = true;  // false: COA only, every page cacheable
  LifecycleConfig lifecycle{};
  std::optional<BudgetPmf> pmf;  // none: every budget is w
  std::uint32_t redraw_period = 10;
  std::uint64_t seed = 1;
  LatencyModel latency{};
};

struct FaultResolution {
  bool coa = false;
  bool nc = false;
  std::optional<PageId> copied;
  bool enqueued = false;
  bool uncached = false;  // zero budget: served without caching
  std::vector<PageId> dequeued;
};

struct AccessReport {
  bool faulted = false;
  FaultResolution fault;
  bool cache_hit = false;
  std::uint32_t latency = 0;
  PageId ppage = 0;
  DomainId filled_by = 0;
};

struct IntervalRecord {
  std::uint64_t tick = 0;
  DomainId domain = 0;
  std::uint32_t q = 0;
  std::uint64_t evictions = 0;  // this domain's lines evicted by replacement
};

class CacheBar {
 public:
  CacheBar(CacheGeometry g, CacheBarConfig cfg = {})
      : cfg_(prepare(cfg, g)), cache_(g), life_(cache_, cfg_.lifecycle), rng_(cfg_.seed) {}

  CacheBar(const CacheBar&) = delete;
  CacheBar& operator=(const CacheBar&) = delete;

  const CacheBarConfig& config() const { return cfg_; }
  PageLifecycle& lifecycle() { return life_; }
  const PageLifecycle& lifecycle() const { return life_; }
  CacheState& cache() { return cache_; }
  const CacheState& cache() const { return cache_; }
  const CacheGeometry& geometry() const { return cache_.geometry(); }

  // ---- domains and budgets ----------------------------------------------

  void add_domain(DomainId d) {
    if (budgets_.q.contains(d)) return;
    budgets_.q[d] = cfg_.pmf ? cfg_.pmf->sample(rng_) : geometry().ways;
  }

  std::uint32_t budget(DomainId d) const {
    auto it = budgets_.q.find(d);
    if (it == budgets_.q.end()) throw LogicError("unknown domain " + std::to_string(d));
    return it->second;
  }

  const BudgetAssignment& budgets() const { return budgets_; }

  void set_budget(DomainId d, std::uint32_t q) {
    if (q > geometry().ways) throw ConfigError("budget exceeds associativity");
    add_domain(d);
    budgets_.q[d] = q;
    for (auto& [key, queue] : queues_)
      if (key.first == d) {
        queue.capacity = q;
        shrink(queue);
      }
  }

  const BudgetAssignment& redraw_budgets() {
    if (!cfg_.pmf) return budgets_;
    for (auto& [d, q] : budgets_.q) q = cfg_.pmf->sample(rng_);
    budgets_.draw_tick = life_.ticks();
    for (auto& [key, queue] : queues_) {
      queue.capacity = budgets_.q.at(key.first);
      shrink(queue);
    }
    return budgets_;
  }

  // ---- mapping -----------------------------------------------------------

  void map(DomainId d, VPage v, PageId p) {
    add_domain(d);
    life_.map_page(d, v, p);
  }

  void unmap(DomainId d, VPage v) {
    life_.unmap_page(d, v);
    drop_stale(d);
  }

  // ---- accesses ----------------------------------------------------------

  // Fault handler: COA first, then NC.
  FaultResolution handle_fault(DomainId d, VPage v) {
    const Pte& pte = life_.pte(d, v);
    const bool nc = cfg_.cacheability && pte.nc_bit;
    if (!pte.coa_bit && !nc)
      throw UnknownFaultError("fault on domain " + std::to_string(d) + " vpage " +
                              std::to_string(v) + " with neither COA nor NC set");
    FaultResolution r;
    if (pte.coa_bit) {
      r.coa = true;
      const PageId before = pte.ppage;
      const CoaResolution c = life_.resolve_coa(d, v);
      r.copied = c.copied;
      if (c.copied && life_.counters().count(d, before) == 0) drop_page(d, before);
    }
    if (cfg_.cacheability && life_.pte(d, v).nc_bit) {
      r.nc = true;
      Pte& cur = life_.pte_mut(d, v);
      CacheableQueue& q = queue_mut(d, page_color(geometry(), cur.ppage));
      if (q.capacity == 0) {
        r.uncached = true;
        return r;
      }
      std::erase(q.entries, cur.ppage);
      q.entries.insert(q.entries.begin(), cur.ppage);
      cur.nc_bit = false;
      r.enqueued = true;
      while (q.entries.size() > q.capacity) r.dequeued.push_back(dequeue_back(q));
    }
    return r;
  }

  AccessReport access(DomainId d, VPage v, AccessKind kind, std::uint32_t block = 0) {
    AccessReport r;
    const Pte& pte = life_.pte(d, v);
    if (pte.coa_bit || (cfg_.cacheability && pte.nc_bit)) {
      r.faulted = true;
      r.fault = handle_fault(d, v);
    }
    const PageId p = life_.pte(d, v).ppage;
    const bool cacheable = !cfg_.cacheability || !r.fault.uncached;
    if (cfg_.cacheability && cacheable && kind != AccessKind::clflush &&
        !queue(d, page_color(geometry(), p)).contains(p))
      throw InvariantViolation("cacheable access to a page outside the domain's queue");
    const AccessOutcome o = perform(d, v, kind, block, cacheable);
    r.cache_hit = o.cache_hit;
    r.ppage = o.ppage;
    r.filled_by = o.filled_by;
    r.latency = r.faulted ? cfg_.latency.fault : (o.cache_hit ? cfg_.latency.hit : cfg_.latency.miss);
    return r;
  }

  // Accesses the given same-color vpages once each (the victim's demand) and
  // returns how many lines of other domains were evicted.
  std::size_t victim_fill(DomainId d, const std::vector<VPage>& vpages, std::uint32_t block = 0) {
    std::size_t foreign = 0;
    for (VPage v : vpages) {
      const std::size_t before = foreign_evictions_[d];
      access(d, v, AccessKind::read, block);
      foreign += foreign_evictions_[d] - before;
    }
    return foreign;
  }

  // ---- queue maintenance -------------------------------------------------

  const CacheableQueue& queue(DomainId d, std::uint32_t color) {
    return queue_mut(d, color);
  }
  const std::map<std::pair<DomainId, std::uint32_t>, CacheableQueue>& queues() const {
    return queues_;
  }

  // Stable sort by the number of the domain's PTEs with the accessed bit set.
  void resort_queue(DomainId d, std::uint32_t color, bool clear_bits = true) {
    CacheableQueue& q = queue_mut(d, color);
    std::vector<std::pair<std::uint32_t, PageId>> ranked;
    for (PageId p : q.entries) {
      std::uint32_t count = 0;
      for (VPage v : life_.vpages_of(d, p)) {
        Pte& pte = life_.pte_mut(d, v);
        count += pte.accessed_bit ? 1 : 0;
        if (clear_bits) pte.accessed_bit = false;
      }
      ranked.emplace_back(count, p);
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; i < ranked.size(); ++i) q.entries[i] = ranked[i].second;
  }

  // Dequeues every page of the queue (each flushed).
  void reset_queue(DomainId d, std::uint32_t color) {
    CacheableQueue& q = queue_mut(d, color);
    while (!q.entries.empty()) dequeue_back(q);
  }

  struct TickResult {
    std::vector<Demotion> demotions;
    std::vector<MergeEvent> merges;
    bool redrew = false;
    std::vector<IntervalRecord> log;
  };

  // One accessed-daemon interval.
  TickResult tick() {
    TickResult r;
    if (cfg_.cacheability)
      for (auto& [key, q] : queues_) resort_queue(key.first, key.second, false);
    ++daemon_runs_;
    r.demotions = life_.tick_accessed_daemon();
    life_.clear_accessed_bits();
    if (cfg_.redraw_period > 0 && daemon_runs_ % cfg_.redraw_period == 0) {
      r.merges = life_.tick_copy_daemon();
      redraw_budgets();
      r.redrew = true;
    }
    for (const auto& [d, q] : budgets_.q) drop_stale(d);
    for (const auto& [d, q] : budgets_.q)
      r.log.push_back({daemon_runs_, d, q, own_evictions_[d]});
    own_evictions_.clear();
    return r;
  }

  std::uint64_t daemon_runs() const { return daemon_runs_; }

  // ---- checks ------------------------------------------------------------

  void check_invariants() const {
    life_.check_invariants();
    if (!cfg_.cacheability) return;
    for (const auto& [key, q] : queues_) {
      if (q.entries.size() > q.capacity) throw InvariantViolation("queue over capacity");
      if (q.capacity != budgets_.q.at(key.first))
        throw InvariantViolation("queue capacity differs from budget");
      for (PageId p : q.entries) {
        if (page_color(geometry(), p) != key.second) throw InvariantViolation("queue color mismatch");
        if (life_.counters().count(key.first, p) == 0)
          throw InvariantViolation("queue holds a page the domain does not map");
      }
    }
    // Pages outside a domain's queue keep NC set in all of its PTEs.
    for (const auto& [k, pte] : life_.ptes()) {
      auto it = queues_.find({pte.domain, page_color(geometry(), pte.ppage)});
      const bool queued = it != queues_.end() && it->second.contains(pte.ppage);
      if (!queued && !pte.nc_bit) throw InvariantViolation("cacheable PTE outside the queue");
    }
    // Lines a domain filled belong to pages in its queue.
    for (std::uint32_t s = 0; s < geometry().sets; ++s)
      for (const CacheLine& line : cache_.set_contents(s)) {
        auto it = queues_.find({line.domain, page_color(geometry(), line.block.page)});
        if (it == queues_.end() || !it->second.contains(line.block.page))
          throw InvariantViolation("line cached for a domain outside its queue");
      }
  }

 private:
  static CacheBarConfig prepare(CacheBarConfig cfg, const CacheGeometry& g) {
    cfg.lifecycle.nc_on_new_mappings = cfg.cacheability;
    if (cfg.pmf && cfg.pmf->w() != g.ways) throw ConfigError("budget pmf size does not match ways");
    return cfg;
  }

  AccessOutcome perform(DomainId d, VPage v, AccessKind kind, std::uint32_t block, bool cacheable) {
    const Pte& pte = life_.pte(d, v);
    const BlockAddr b{pte.ppage, block};
    std::optional<CacheLine> victim;
    if (cacheable && kind != AccessKind::clflush && !cache_.contains(b)) {
      const auto set = cache_.set_contents(locate(geometry(), b).set_index);
      if (set.size() == geometry().ways) victim = set.back();
    }
    const AccessOutcome o = life_.perform(d, v, kind, block, cacheable);
    if (victim) {
      ++cache_evictions_;
      ++own_evictions_[victim->domain];
      if (victim->domain != d) ++foreign_evictions_[d];
    }
    return o;
  }

  CacheableQueue& queue_mut(DomainId d, std::uint32_t color) {
    auto [it, inserted] = queues_.try_emplace({d, color});
    if (inserted) {
      add_domain(d);
      it->second.domain = d;
      it->second.color = color;
      it->second.capacity = budgets_.q.at(d);
    }
    return it->second;
  }

  // Removes the lowest-ranked page: NC on all the domain's PTEs, page flushed.
  PageId dequeue_back(CacheableQueue& q) {
    const PageId p = q.entries.back();
    q.entries.pop_back();
    for (VPage v : life_.vpages_of(q.domain, p)) life_.pte_mut(q.domain, v).nc_bit = true;
    cache_.flush_page(p);
    return p;
  }

  void shrink(CacheableQueue& q) {
    while (q.entries.size() > q.capacity) dequeue_back(q);
  }

  void drop_page(DomainId d, PageId p) {
    auto it = queues_.find({d, page_color(geometry(), p)});
    if (it == queues_.end()) return;
    auto& e = it->second.entries;
    if (std::find(e.begin(), e.end(), p) == e.end()) return;
    std::erase(e, p);
    cache_.flush_page(p);
  }

  // Queue entries for pages the domain no longer maps (copies merged away,
  // originals left behind by copy-on-access, unmapped pages).
  void drop_stale(DomainId d) {
    for (auto& [key, q] : queues_) {
      if (key.first != d) continue;
      std::vector<PageId> stale;
      for (PageId p : q.entries)
        if (life_.counters().count(d, p) == 0) stale.push_back(p);
      for (PageId p : stale) drop_page(d, p);
    }
  }

  CacheBarConfig cfg_;
  CacheState cache_;
  PageLifecycle life_;
  Rng rng_;
  BudgetAssignment budgets_;
  std::map<std::pair<DomainId, std::uint32_t>, CacheableQueue> queues_;
  std::uint64_t daemon_runs_ = 0;
  std::size_t cache_evictions_ = 0;
  std::map<DomainId, std::uint64_t> own_evictions_;
  std::map<DomainId, std::uint64_t> foreign_evictions_;
};

}  // namespace cachebar
