#pragma once

// Explicit-state exploration of the two-domain copy-on-access model.
//
// One shared physical page (frame 0) and one spare frame (frame 1) that holds a
// private copy when copy-on-access fires. Each frame carries a single "cached"
// bit. The attacker follows Flush then Reload on the page it maps; a Reload
// that finds its line already cached means the victim's activity leaked.
// The timer may demote an ACCESSED page or merge the copy back at any time.

#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cachebar/errors.hpp"
#include "cachebar/page_lifecycle.hpp"

namespace cachebar {

enum class Actor : std::uint8_t { victim, attacker, timer };
enum class ModelOwner : std::uint8_t { none, attacker, victim };
enum class ModelAction : std::uint8_t { access, flush, reload, demote, merge };

inline const char* to_string(Actor a) {
  switch (a) {
    case Actor::victim: return "victim";
    case Actor::attacker: return "attacker";
    case Actor::timer: return "timer";
  }
  return "?";
}

inline const char* to_string(ModelAction a) {
  switch (a) {
    case ModelAction::access: return "access";
    case ModelAction::flush: return "Flush";
    case ModelAction::reload: return "Reload";
    case ModelAction::demote: return "demote";
    case ModelAction::merge: return "merge";
  }
  return "?";
}

inline const char* to_string(ModelOwner o) {
  switch (o) {
    case ModelOwner::none: return "none";
    case ModelOwner::attacker: return "attacker";
    case ModelOwner::victim: return "victim";
  }
  return "?";
}

struct MCState {
  std::array<std::uint8_t, 2> pages{0, 0};
  std::uint8_t virt_a = 0;
  std::uint8_t virt_v = 0;
  PageState state = PageState::shared;  // of frame 0
  ModelOwner owner = ModelOwner::none;
  std::uint8_t attacker_phase = 0;  // 0: Flush next, 1: Reload next

  friend bool operator==(const MCState&, const MCState&) = default;

  std::uint32_t pack() const {
    return pages[0] | pages[1] << 1 | virt_a << 2 | virt_v << 3 |
           static_cast<std::uint32_t>(state) << 4 | static_cast<std::uint32_t>(owner) << 6 |
           static_cast<std::uint32_t>(attacker_phase) << 8;
  }

  std::string describe() const {
    return "pages=[" + std::to_string(pages[0]) + "," + std::to_string(pages[1]) +
           "] virt_a=" + std::to_string(virt_a) + " virt_v=" + std::to_string(virt_v) +
           " state=" + to_string(state) + " owner=" + to_string(owner);
  }
};

struct ModelConfig {
  bool flush_on_demote = true;
  bool flush_on_merge = true;
  bool strict_flush_reload = true;  // attacker alternates Flush, Reload
};

enum class StepKind { normal, violation, model_error };

struct Step {
  Actor actor = Actor::timer;
  ModelAction action = ModelAction::access;
  MCState state;  // resulting state
  StepKind kind = StepKind::normal;
};

struct Trace {
  MCState initial;
  std::vector<Step> steps;

  bool violating() const { return !steps.empty() && steps.back().kind == StepKind::violation; }
  std::size_t size() const { return steps.size(); }
};

struct ExploreResult {
  bool verified = false;
  std::size_t states = 0;  // reachable states (violations excluded)
  std::optional<Trace> counterexample;
};

namespace detail {

// Page-fault half shared by access, Flush and Reload of `who`.
// Returns false for a state the model should never reach.
inline bool fault_transition(MCState& s, ModelOwner who) {
  std::uint8_t& virt = who == ModelOwner::attacker ? s.virt_a : s.virt_v;
  if (virt == 1) return true;  // private copy, no sharing
  switch (s.state) {
    case PageState::shared:
      s.state = PageState::accessed;
      s.owner = who;
      return true;
    case PageState::accessed:
      if (s.owner == who) return true;
      // Copy-on-access into the spare frame; frame 0 stays with the other domain.
      virt = 1;
      s.pages[1] = 0;
      s.state = PageState::exclusive;
      s.owner = ModelOwner::none;
      return true;
    case PageState::exclusive: {
      // Exclusive means the other domain moved to the copy.
      const std::uint8_t other = who == ModelOwner::attacker ? s.virt_v : s.virt_a;
      return other == 1;
    }
    case PageState::unmapped:
      return false;
  }
  return false;
}

}  // namespace detail

inline MCState initial_state() { return MCState{}; }

inline std::vector<Step> successors(const MCState& s, const ModelConfig& cfg) {
  std::vector<Step> out;
  auto push = [&](Actor a, ModelAction act, MCState n, StepKind k = StepKind::normal) {
    out.push_back(Step{a, act, n, k});
  };

  {  // victim access
    MCState n = s;
    if (!detail::fault_transition(n, ModelOwner::victim)) {
      push(Actor::victim, ModelAction::access, n, StepKind::model_error);
    } else {
      n.pages[n.virt_v] = 1;
      push(Actor::victim, ModelAction::access, n);
    }
  }
  if (!cfg.strict_flush_reload || s.attacker_phase == 0) {
    MCState n = s;
    if (!detail::fault_transition(n, ModelOwner::attacker)) {
      push(Actor::attacker, ModelAction::flush, n, StepKind::model_error);
    } else {
      n.pages[n.virt_a] = 0;
      n.attacker_phase = 1;
      push(Actor::attacker, ModelAction::flush, n);
    }
  }
  if (!cfg.strict_flush_reload || s.attacker_phase == 1) {
    MCState n = s;
    if (!detail::fault_transition(n, ModelOwner::attacker)) {
      push(Actor::attacker, ModelAction::reload, n, StepKind::model_error);
    } else if (n.pages[n.virt_a] != 0) {
      push(Actor::attacker, ModelAction::reload, n, StepKind::violation);
    } else {
      n.pages[n.virt_a] = 1;
      n.attacker_phase = 0;
      push(Actor::attacker, ModelAction::reload, n);
    }
  }
  if (s.state == PageState::accessed) {
    MCState n = s;
    n.state = PageState::shared;
    n.owner = ModelOwner::none;
    if (cfg.flush_on_demote) n.pages[0] = 0;
    push(Actor::timer, ModelAction::demote, n);
  }
  if (s.virt_a == 1 || s.virt_v == 1) {
    MCState n = s;
    n.virt_a = 0;
    n.virt_v = 0;
    n.state = PageState::shared;
    n.owner = ModelOwner::none;
    if (cfg.flush_on_merge) n.pages[0] = 0;
    push(Actor::timer, ModelAction::merge, n);
  }
  return out;
}

// Breadth-first search; the first violation found is a shortest one.
inline ExploreResult explore(const ModelConfig& cfg, MCState init = initial_state()) {
  struct Parent {
    std::uint32_t prev;
    Step step;
  };
  std::unordered_map<std::uint32_t, std::optional<Parent>> seen;
  std::deque<MCState> frontier;
  seen.emplace(init.pack(), std::nullopt);
  frontier.push_back(init);

  auto rebuild = [&](const MCState& last, std::optional<Step> final_step) {
    Trace t;
    t.initial = init;
    std::vector<Step> rev;
    if (final_step) rev.push_back(*final_step);
    std::uint32_t key = last.pack();
    while (const auto& p = seen.at(key)) {
      rev.push_back(p->step);
      key = p->prev;
    }
    t.steps.assign(rev.rbegin(), rev.rend());
    return t;
  };

  while (!frontier.empty()) {
    const MCState s = frontier.front();
    frontier.pop_front();
    for (const Step& st : successors(s, cfg)) {
      if (st.kind == StepKind::model_error)
        throw LogicError("model reached an inconsistent state: " + st.state.describe());
      if (st.kind == StepKind::violation) {
        ExploreResult r;
        r.states = seen.size();
        r.counterexample = rebuild(s, st);
        return r;
      }
      if (seen.contains(st.state.pack())) continue;
      seen.emplace(st.state.pack(), Parent{s.pack(), st});
      frontier.push_back(st.state);
    }
  }
  ExploreResult r;
  r.verified = true;
  r.states = seen.size();
  return r;
}

// Re-executes a trace's actions from its initial state. Returns the replayed
// trace (states recomputed) or nullopt if some action is not enabled.
inline std::optional<Trace> replay(const MCState& init, const std::vector<Step>& steps,
                                   const ModelConfig& cfg) {
  Trace t;
  t.initial = init;
  MCState cur = init;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (i > 0 && t.steps.back().kind != StepKind::normal) return std::nullopt;
    std::optional<Step> match;
    for (const Step& st : successors(cur, cfg))
      if (st.actor == steps[i].actor && st.action == steps[i].action) match = st;
    if (!match) return std::nullopt;
    t.steps.push_back(*match);
    cur = match->state;
  }
  return t;
}

// Drops steps one at a time while the trace stays a violation; the result is
// 1-minimal and no longer than the input.
inline Trace minimize(const Trace& trace, const ModelConfig& cfg) {
  auto checked = replay(trace.initial, trace.steps, cfg);
  if (!checked || !checked->violating()) throw LogicError("minimize: trace is not a violation");
  Trace best = *checked;
  bool shrunk = true;
  while (shrunk) {
    shrunk = false;
    for (std::size_t i = 0; i + 1 < best.steps.size(); ++i) {
      std::vector<Step> cand = best.steps;
      cand.erase(cand.begin() + static_cast<std::ptrdiff_t>(i));
      auto r = replay(best.initial, cand, cfg);
      if (r && r->violating()) {
        best = *r;
        shrunk = true;
        break;
      }
    }
  }
  return best;
}

inline std::string format_trace(const Trace& t) {
  std::string out = "0: init -> " + t.initial.describe() + "\n";
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    const Step& s = t.steps[i];
    out += std::to_string(i + 1) + ": " + to_string(s.actor) + " " + to_string(s.action) + " -> ";
    out += s.kind == StepKind::violation ? "VIOLATION assert(pages[virt]==0)" : s.state.describe();
    out += "\n";
  }
  return out;
}

// Drives a model trace through the full page lifecycle and reports whether
// the attacker's final Reload hits a line it did not fill itself.
struct LifecycleReplay {
  bool leak = false;
  DomainId filled_by = 0;
  std::size_t events = 0;
};

inline LifecycleReplay replay_on_lifecycle(const Trace& t, const ModelConfig& cfg) {
  constexpr DomainId kAttacker = 1, kVictim = 2;
  CacheState cache(CacheGeometry::make(4, 4, 64, 64));
  LifecycleConfig lc;
  lc.flush_on_demote = cfg.flush_on_demote;
  lc.flush_on_merge = cfg.flush_on_merge;
  PageLifecycle life(cache, lc);
  const PageId frame0 = life.allocate_page_id();
  life.map_page(kAttacker, 0, frame0);
  life.map_page(kVictim, 0, frame0);

  LifecycleReplay r;
  for (const Step& s : t.steps) {
    ++r.events;
    switch (s.action) {
      case ModelAction::access:
        life.handle_access(kVictim, 0, AccessKind::read);
        break;
      case ModelAction::flush:
        life.handle_access(kAttacker, 0, AccessKind::clflush);
        break;
      case ModelAction::reload: {
        const AccessOutcome o = life.handle_access(kAttacker, 0, AccessKind::read);
        r.leak = o.cache_hit && o.filled_by != kAttacker;
        r.filled_by = o.filled_by;
        break;
      }
      case ModelAction::demote:
        // First pass clears the owner's accessed bit, second pass demotes.
        life.tick_accessed_daemon();
        life.tick_accessed_daemon();
        break;
      case ModelAction::merge:
        life.tick_copy_daemon();
        life.tick_copy_daemon();
        break;
    }
    life.check_invariants();
  }
  return r;
}

}  // namespace cachebar
