#pragma once

// Copy-on-access page lifecycle.
//
// Every physical page is UNMAPPED, EXCLUSIVE (one domain maps it), SHARED
// (several domains map it, nobody touched it recently) or ACCESSED (shared, and
// recently touched by `owner`). A second domain touching an ACCESSED page gets
// a private copy instead. Two periodic daemons undo this: the accessed daemon
// demotes idle ACCESSED pages back to SHARED and the copy daemon merges idle
// copies into their originals. Both flush the original page from the cache, or
// a Flush-Reload attacker could observe lines populated by the previous owner.
//
// Originals that have ever been shared are tracked in an ordered list; each
// keeps the ordered list of its copies. Pages never shared are untracked.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "cachebar/cache_model.hpp"
#include "cachebar/errors.hpp"

namespace cachebar {

using VPage = std::uint64_t;

enum class PageState { unmapped, exclusive, shared, accessed };
enum class PageKind { original, copy };
enum class AccessKind { read, write, clflush };

inline const char* to_string(PageState s) {
  switch (s) {
    case PageState::unmapped: return "UNMAPPED";
    case PageState::exclusive: return "EXCLUSIVE";
    case PageState::shared: return "SHARED";
    case PageState::accessed: return "ACCESSED";
  }
  return "?";
}

struct PhysicalPage {
  PageId id = 0;
  PageState state = PageState::unmapped;
  std::optional<DomainId> owner;  // set iff state == accessed
  PageKind kind = PageKind::original;
  std::optional<PageId> original_ref;  // copies only
  std::vector<PageId> copy_list;       // tracked originals only
  bool tracked = false;
  std::uint64_t content = 0;  // opaque content tag; merges require equal tags
  bool file_mapped = false;
  // Sticky "touched since the copy daemon last looked" flag. Folds the PTE
  // accessed bits the faster daemons clear in between.
  bool used_since_copy_check = false;
};

struct Pte {
  DomainId domain = 0;
  VPage vpage = 0;
  PageId ppage = 0;
  bool coa_bit = false;
  bool nc_bit = false;
  bool accessed_bit = false;
};

// counter[domain][page]: how many of the domain's virtual pages map the page.
class CounterTable {
 public:
  std::uint32_t count(DomainId d, PageId p) const {
    auto it = rows_.find(p);
    if (it == rows_.end()) return 0;
    auto jt = it->second.find(d);
    return jt == it->second.end() ? 0 : jt->second;
  }

  void increment(DomainId d, PageId p, std::uint32_t n = 1) { rows_[p][d] += n; }

  void decrement(DomainId d, PageId p, std::uint32_t n = 1) {
    auto& row = rows_.at(p);
    auto& c = row.at(d);
    if (c < n) throw LogicError("counter underflow");
    c -= n;
    if (c == 0) row.erase(d);
    if (row.empty()) rows_.erase(p);
  }

  std::size_t domain_count(PageId p) const {
    auto it = rows_.find(p);
    return it == rows_.end() ? 0 : it->second.size();
  }

  std::vector<DomainId> domains(PageId p) const {
    std::vector<DomainId> out;
    if (auto it = rows_.find(p); it != rows_.end())
      for (const auto& [d, c] : it->second) out.push_back(d);
    return out;
  }

  const std::map<PageId, std::map<DomainId, std::uint32_t>>& rows() const { return rows_; }

 private:
  std::map<PageId, std::map<DomainId, std::uint32_t>> rows_;
};

struct LifecycleConfig {
  bool flush_on_demote = true;
  bool flush_on_merge = true;
  // New and repointed PTEs start non-domain-cacheable (cacheable queues in use).
  bool nc_on_new_mappings = false;
  std::uint32_t copy_period = 10;  // copy daemon runs every copy_period ticks
};

struct CoaResolution {
  bool faulted = false;
  std::optional<PageId> copied;
  PageId ppage = 0;  // page the PTE maps after resolution
};

struct AccessOutcome {
  bool faulted = false;
  std::optional<PageId> copied;
  PageId ppage = 0;
  bool cache_hit = false;
  DomainId filled_by = 0;  // populating domain of the line (loads only)
  std::size_t flushed = 0;  // clflush only
};

struct Demotion {
  PageId page = 0;
  PageState from = PageState::accessed;
  PageState to = PageState::shared;
  std::size_t flushed_lines = 0;
};

struct MergeEvent {
  PageId copy = 0;
  PageId original = 0;
  std::size_t flushed_lines = 0;
};

class PageLifecycle {
 public:
  explicit PageLifecycle(CacheState& cache, LifecycleConfig cfg = {}) : cache_(cache), cfg_(cfg) {}

  PageLifecycle(const PageLifecycle&) = delete;
  PageLifecycle& operator=(const PageLifecycle&) = delete;

  const LifecycleConfig& config() const { return cfg_; }

  // ---- mapping -----------------------------------------------------------

  void map_page(DomainId d, VPage v, PageId p) {
    if (ptes_.contains({d, v}))
      throw LogicError("map_page: vpage " + std::to_string(v) + " of domain " +
                       std::to_string(d) + " already mapped");
    PhysicalPage& page = ensure_page(p);
    const bool new_domain = counters_.count(d, p) == 0;
    ptes_[{d, v}] = Pte{d, v, p, false, cfg_.nc_on_new_mappings, false};
    counters_.increment(d, p);
    rmap_[p].insert({d, v});

    switch (page.state) {
      case PageState::unmapped:
        page.state = PageState::exclusive;
        break;
      case PageState::exclusive:
        if (new_domain) to_shared(page, false);
        break;
      case PageState::shared:
        ptes_.at({d, v}).coa_bit = true;
        break;
      case PageState::accessed:
        if (d != *page.owner) ptes_.at({d, v}).coa_bit = true;
        break;
    }
  }

  void unmap_page(DomainId d, VPage v) {
    auto it = ptes_.find({d, v});
    if (it == ptes_.end())
      throw LogicError("unmap_page: no PTE for domain " + std::to_string(d) + " vpage " +
                       std::to_string(v));
    const PageId p = it->second.ppage;
    ptes_.erase(it);
    rmap_remove(p, d, v);
    counters_.decrement(d, p);
    settle(pages_.at(p));
  }

  // ---- accesses ----------------------------------------------------------

  // Fault-handler half of an access: resolves a pending COA fault, possibly by
  // copying. Does not touch the cache or the accessed bit.
  CoaResolution resolve_coa(DomainId d, VPage v) {
    Pte& pte = pte_mut(d, v);
    CoaResolution r{false, std::nullopt, pte.ppage};
    if (!pte.coa_bit) return r;
    r.faulted = true;
    PhysicalPage& page = pages_.at(pte.ppage);
    switch (page.state) {
      case PageState::shared:
        page.state = PageState::accessed;
        page.owner = d;
        pte.coa_bit = false;
        break;
      case PageState::accessed:
        if (*page.owner == d) {
          pte.coa_bit = false;
        } else {
          r.copied = copy_on_access(d, page);
          r.ppage = *r.copied;
        }
        break;
      case PageState::exclusive:
        pte.coa_bit = false;
        break;
      case PageState::unmapped:
        throw LogicError("resolve_coa: PTE maps an unmapped page");
    }
    return r;
  }

  // Data half of an access through an already-resolved PTE: sets the accessed
  // bit and performs the load or clflush. With cacheable == false the access
  // bypasses the cache entirely.
  AccessOutcome perform(DomainId d, VPage v, AccessKind kind, std::uint32_t block,
                        bool cacheable = true) {
    Pte& pte = pte_mut(d, v);
    pte.accessed_bit = true;
    pages_.at(pte.ppage).used_since_copy_check = true;
    AccessOutcome out;
    out.ppage = pte.ppage;
    const BlockAddr b{pte.ppage, block};
    if (kind == AccessKind::clflush) {
      out.flushed = cache_.flush_block(b);
    } else if (cacheable) {
      const AccessResult ar = cache_.access(d, b);
      out.cache_hit = ar.hit;
      out.filled_by = ar.filled_by;
    }
    return out;
  }

  // A full access: clflush takes exactly the same fault path as a load.
  AccessOutcome handle_access(DomainId d, VPage v, AccessKind kind, std::uint32_t block = 0) {
    const CoaResolution r = resolve_coa(d, v);
    AccessOutcome out = perform(d, v, kind, block);
    out.faulted = r.faulted;
    out.copied = r.copied;
    return out;
  }

  // ---- daemons -----------------------------------------------------------

  std::vector<Demotion> tick_accessed_daemon() {
    std::vector<Demotion> out;
    for (auto& [id, page] : pages_) {
      if (page.state != PageState::accessed) continue;
      const DomainId owner = *page.owner;
      bool owner_used = false;
      for (const auto& key : rmap_.at(id)) {
        const Pte& pte = ptes_.at(key);
        if (pte.domain == owner && pte.accessed_bit) owner_used = true;
      }
      if (counters_.domain_count(id) == 1) {
        to_exclusive(page);
        out.push_back({id, PageState::accessed, PageState::exclusive, 0});
      } else if (!owner_used) {
        const std::size_t flushed = to_shared(page, cfg_.flush_on_demote);
        out.push_back({id, PageState::accessed, PageState::shared, flushed});
      }
      for (const auto& key : rmap_.at(id)) ptes_.at(key).accessed_bit = false;
    }
    return out;
  }

  std::vector<MergeEvent> tick_copy_daemon() {
    std::vector<MergeEvent> out;
    const std::vector<PageId> originals = original_list_;
    for (PageId root : originals) {
      auto rit = pages_.find(root);
      if (rit == pages_.end() || !rit->second.tracked || rit->second.kind != PageKind::original)
        continue;
      const std::vector<PageId> copies = rit->second.copy_list;
      for (PageId c : copies) {
        const PhysicalPage& cp = pages_.at(c);
        if (cp.state != PageState::exclusive || cp.used_since_copy_check) continue;
        const std::size_t flushed = merge_into(c, root, cfg_.flush_on_merge);
        out.push_back({c, root, flushed});
      }
    }
    for (auto& [id, page] : pages_) page.used_since_copy_check = false;
    return out;
  }

  struct TickReport {
    std::vector<Demotion> demotions;
    std::vector<MergeEvent> merges;
    bool copy_daemon_ran = false;
  };

  // One Δ_accessed interval; the copy daemon piggybacks every copy_period ticks.
  TickReport tick() {
    TickReport r;
    ++ticks_;
    r.demotions = tick_accessed_daemon();
    if (cfg_.copy_period > 0 && ticks_ % cfg_.copy_period == 0) {
      r.merges = tick_copy_daemon();
      r.copy_daemon_ran = true;
    }
    return r;
  }

  std::uint64_t ticks() const { return ticks_; }

  void clear_accessed_bits() {
    for (auto& [k, pte] : ptes_) pte.accessed_bit = false;
  }

  // ---- deduplication -----------------------------------------------------

  // KSM-initiated merge of two pages with identical content; src disappears.
  // An untracked page is always merged into the tracked one, whichever order
  // the pages are given in.
  PageId ksm_merge(PageId src, PageId dst) {
    if (src == dst) throw LogicError("ksm_merge: src == dst");
    PhysicalPage& s = page_mut(src);
    PhysicalPage& t = page_mut(dst);
    if (s.state == PageState::unmapped || t.state == PageState::unmapped)
      throw LogicError("ksm_merge: both pages must be mapped");
    if (s.content != t.content) throw LogicError("ksm_merge: content tags differ");
    if (s.tracked && !t.tracked) std::swap(src, dst);
    merge_into(src, dst, cfg_.flush_on_merge);
    return dst;
  }

  // ---- queries -----------------------------------------------------------

  bool has_page(PageId p) const { return pages_.contains(p); }
  const PhysicalPage& page(PageId p) const {
    auto it = pages_.find(p);
    if (it == pages_.end()) throw LogicError("unknown page " + std::to_string(p));
    return it->second;
  }
  PageState state(PageId p) const { return page(p).state; }

  bool has_pte(DomainId d, VPage v) const { return ptes_.contains({d, v}); }
  const Pte& pte(DomainId d, VPage v) const {
    auto it = ptes_.find({d, v});
    if (it == ptes_.end())
      throw FaultError("no mapping for domain " + std::to_string(d) + " vpage " +
                       std::to_string(v));
    return it->second;
  }
  Pte& pte_mut(DomainId d, VPage v) {
    auto it = ptes_.find({d, v});
    if (it == ptes_.end())
      throw FaultError("no mapping for domain " + std::to_string(d) + " vpage " +
                       std::to_string(v));
    return it->second;
  }

  const std::map<std::pair<DomainId, VPage>, Pte>& ptes() const { return ptes_; }
  const std::map<PageId, PhysicalPage>& pages() const { return pages_; }
  const CounterTable& counters() const { return counters_; }
  const std::vector<PageId>& original_list() const { return original_list_; }
  CacheState& cache() { return cache_; }
  const CacheState& cache() const { return cache_; }

  // Virtual pages of domain d that map p.
  std::vector<VPage> vpages_of(DomainId d, PageId p) const {
    std::vector<VPage> out;
    if (auto it = rmap_.find(p); it != rmap_.end())
      for (const auto& [dd, v] : it->second)
        if (dd == d) out.push_back(v);
    return out;
  }

  std::size_t mapped_page_count() const {
    return static_cast<std::size_t>(std::count_if(pages_.begin(), pages_.end(), [](const auto& kv) {
      return kv.second.state != PageState::unmapped;
    }));
  }

  void set_content(PageId p, std::uint64_t tag) { ensure_page(p).content = tag; }
  void set_file_mapped(PageId p, bool file_mapped) { ensure_page(p).file_mapped = file_mapped; }

  // Fresh physical page id congruent to `residue` modulo `modulus`.
  PageId allocate_page_id(std::uint64_t residue = 0, std::uint64_t modulus = 1) {
    PageId id = next_id_;
    if (modulus > 1) id += (residue + modulus - id % modulus) % modulus;
    next_id_ = id + 1;
    return id;
  }

  // Throws InvariantViolation describing the first broken invariant.
  void check_invariants() const {
    auto fail = [](const std::string& msg) { throw InvariantViolation(msg); };
    std::map<std::pair<PageId, DomainId>, std::uint32_t> counted;
    for (const auto& [key, pte] : ptes_) {
      if (key.first != pte.domain || key.second != pte.vpage) fail("PTE key mismatch");
      ++counted[{pte.ppage, pte.domain}];
      auto it = rmap_.find(pte.ppage);
      if (it == rmap_.end() || !it->second.contains(key)) fail("rmap missing PTE");
    }
    for (const auto& [p, row] : counters_.rows())
      for (const auto& [d, c] : row)
        if (counted[{p, d}] != c) fail("counter mismatch for page " + std::to_string(p));
    for (const auto& [pd, c] : counted)
      if (counters_.count(pd.second, pd.first) != c) fail("counter missing");

    for (const auto& [id, page] : pages_) {
      const std::size_t nd = counters_.domain_count(id);
      const std::string tag = "page " + std::to_string(id) + ": ";
      if (page.owner.has_value() != (page.state == PageState::accessed))
        fail(tag + "owner set iff ACCESSED");
      switch (page.state) {
        case PageState::unmapped:
          if (nd != 0) fail(tag + "UNMAPPED but mapped");
          if (page.tracked) fail(tag + "UNMAPPED page still tracked");
          break;
        case PageState::exclusive:
          if (nd != 1) fail(tag + "EXCLUSIVE needs exactly one domain");
          break;
        case PageState::shared:
        case PageState::accessed:
          if (nd < 2) fail(tag + "SHARED/ACCESSED needs >= 2 domains");
          if (!page.tracked) fail(tag + "SHARED/ACCESSED page untracked");
          break;
      }
      if (page.state == PageState::shared)
        for (const auto& key : rmap_.at(id))
          if (!ptes_.at(key).coa_bit) fail(tag + "SHARED page with COA-clear PTE");
      if (page.state == PageState::accessed)
        for (const auto& key : rmap_.at(id))
          if (key.first != *page.owner && !ptes_.at(key).coa_bit)
            fail(tag + "non-owner has fault-free access to ACCESSED page");
      if (page.state == PageState::exclusive && page.tracked == false && page.kind == PageKind::copy)
        fail(tag + "untracked copy");
      if (!page.tracked) {
        if (!page.copy_list.empty() || page.original_ref) fail(tag + "untracked page has links");
      }
      if (page.kind == PageKind::copy) {
        if (!page.original_ref) fail(tag + "copy without original");
        const auto& orig = pages_.at(*page.original_ref);
        if (!orig.tracked || orig.kind != PageKind::original)
          fail(tag + "copy's original is not a tracked original");
        if (std::find(orig.copy_list.begin(), orig.copy_list.end(), id) == orig.copy_list.end())
          fail(tag + "copy missing from original's copy_list");
        if (page.file_mapped) fail(tag + "copies are anonymous");
      } else if (page.tracked) {
        if (std::find(original_list_.begin(), original_list_.end(), id) == original_list_.end())
          fail(tag + "tracked original missing from original_list");
        if (page.original_ref) fail(tag + "original with original_ref");
      }
    }
    for (PageId p : original_list_) {
      const auto& page = pages_.at(p);
      if (!page.tracked || page.kind != PageKind::original)
        fail("original_list holds a non-original");
    }
  }

 private:
  using PteKey = std::pair<DomainId, VPage>;

  PhysicalPage& ensure_page(PageId p) {
    auto [it, inserted] = pages_.try_emplace(p);
    if (inserted) it->second.id = p;
    next_id_ = std::max(next_id_, p + 1);
    return it->second;
  }

  PhysicalPage& page_mut(PageId p) {
    auto it = pages_.find(p);
    if (it == pages_.end()) throw LogicError("unknown page " + std::to_string(p));
    return it->second;
  }

  void rmap_remove(PageId p, DomainId d, VPage v) {
    auto& s = rmap_.at(p);
    s.erase({d, v});
    if (s.empty()) rmap_.erase(p);
  }

  void for_each_pte(PageId p, auto&& fn) {
    if (auto it = rmap_.find(p); it != rmap_.end())
      for (const auto& key : it->second) fn(ptes_.at(key));
  }

  void track(PhysicalPage& page) {
    if (page.tracked) return;
    page.tracked = true;
    if (page.kind == PageKind::original) original_list_.push_back(page.id);
  }

  // Removes a page from whichever list holds it. An original's first copy
  // takes over as the new original of the remaining copies.
  void untrack(PhysicalPage& page) {
    if (!page.tracked) return;
    if (page.kind == PageKind::copy) {
      auto& orig = pages_.at(*page.original_ref);
      std::erase(orig.copy_list, page.id);
    } else {
      auto pos = std::find(original_list_.begin(), original_list_.end(), page.id);
      if (!page.copy_list.empty()) {
        const PageId heir = page.copy_list.front();
        PhysicalPage& h = pages_.at(heir);
        h.kind = PageKind::original;
        h.original_ref.reset();
        h.copy_list.assign(page.copy_list.begin() + 1, page.copy_list.end());
        for (PageId c : h.copy_list) pages_.at(c).original_ref = heir;
        *pos = heir;
      } else {
        original_list_.erase(pos);
      }
    }
    page.tracked = false;
    page.kind = PageKind::original;
    page.original_ref.reset();
    page.copy_list.clear();
  }

  void to_exclusive(PhysicalPage& page) {
    page.state = PageState::exclusive;
    page.owner.reset();
    for_each_pte(page.id, [](Pte& pte) { pte.coa_bit = false; });
  }

  std::size_t to_shared(PhysicalPage& page, bool flush) {
    page.state = PageState::shared;
    page.owner.reset();
    track(page);
    for_each_pte(page.id, [](Pte& pte) { pte.coa_bit = true; });
    return flush ? cache_.flush_page(page.id) : 0;
  }

  // Re-derives the state of a mapped-or-not page from its counters after PTEs
  // left it.
  void settle(PhysicalPage& page) {
    const std::size_t nd = counters_.domain_count(page.id);
    if (nd == 0) {
      untrack(page);
      page.state = PageState::unmapped;
      page.owner.reset();
    } else if (nd == 1) {
      if (page.state == PageState::shared || page.state == PageState::accessed) to_exclusive(page);
    } else if (page.state == PageState::accessed && counters_.count(*page.owner, page.id) == 0) {
      // The owner left while others still share it.
      to_shared(page, cfg_.flush_on_demote);
    }
  }

  void repoint(const PteKey& key, PageId to) {
    Pte& pte = ptes_.at(key);
    const PageId from = pte.ppage;
    rmap_remove(from, key.first, key.second);
    counters_.decrement(key.first, from);
    pte.ppage = to;
    pte.coa_bit = false;
    if (cfg_.nc_on_new_mappings) pte.nc_bit = true;
    counters_.increment(key.first, to);
    rmap_[to].insert(key);
  }

  PageId copy_on_access(DomainId d, PhysicalPage& page) {
    const PageId root = page.kind == PageKind::copy ? *page.original_ref : page.id;
    std::optional<PageId> target;
    for (PageId c : pages_.at(root).copy_list) {
      if (c == page.id) continue;
      const auto doms = counters_.domains(c);
      if (doms.size() == 1 && doms.front() == d) {
        target = c;
        break;
      }
    }
    if (!target) {
      const PageId id = allocate_page_id();
      PhysicalPage& c = ensure_page(id);
      c.kind = PageKind::copy;
      c.original_ref = root;
      c.tracked = true;
      c.content = page.content;
      c.file_mapped = false;
      pages_.at(root).copy_list.push_back(id);
      target = id;
    }
    PhysicalPage& src = pages_.at(page.id);
    std::vector<PteKey> moving;
    for (const auto& key : rmap_.at(src.id))
      if (key.first == d) moving.push_back(key);
    for (const auto& key : moving) repoint(key, *target);
    pages_.at(*target).state = PageState::exclusive;
    pages_.at(*target).used_since_copy_check = true;

    const std::size_t nd = counters_.domain_count(src.id);
    if (nd == 1) {
      to_exclusive(src);
    } else {
      to_shared(src, cfg_.flush_on_demote);
    }
    return *target;
  }

  // Moves every mapping of src onto dst and retires src.
  std::size_t merge_into(PageId src_id, PageId dst_id, bool flush) {
    const std::size_t flushed = flush ? cache_.flush_page(dst_id) : 0;
    std::vector<PteKey> moving;
    if (auto it = rmap_.find(src_id); it != rmap_.end())
      moving.assign(it->second.begin(), it->second.end());
    for (const auto& key : moving) repoint(key, dst_id);

    PhysicalPage& src = pages_.at(src_id);
    untrack(src);
    src.state = PageState::unmapped;
    src.owner.reset();

    PhysicalPage& dst = pages_.at(dst_id);
    const std::size_t nd = counters_.domain_count(dst_id);
    if (nd == 1) {
      if (dst.state != PageState::exclusive) to_exclusive(dst);
    } else if (dst.state == PageState::accessed) {
      for (const auto& key : moving)
        if (key.first != *dst.owner) ptes_.at(key).coa_bit = true;
    } else {
      to_shared(dst, false);
    }
    return flushed;
  }

  CacheState& cache_;
  LifecycleConfig cfg_;
  std::map<PageId, PhysicalPage> pages_;
  std::map<PteKey, Pte> ptes_;
  std::map<PageId, std::set<PteKey>> rmap_;
  CounterTable counters_;
  std::vector<PageId> original_list_;
  PageId next_id_ = 0;
  std::uint64_t ticks_ = 0;
};

}  // namespace cachebar
