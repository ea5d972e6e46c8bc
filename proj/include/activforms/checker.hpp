#pragma once

#include <algorithm>
#include <chrono>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "activforms/engine.hpp"
#include "activforms/eval.hpp"

namespace activforms {

// ---------------------------------------------------------------------------
// Explicit state graph under digital-clock semantics
// ---------------------------------------------------------------------------

struct TransitionLabel {
  enum class Kind { Internal, Sync, Delay };
  Kind kind = Kind::Internal;
  int instance = -1;
  int edge = -1;
  int channel = -1;
  std::vector<std::pair<int, int>> receivers;

  std::string to_string(const ModelNetwork& n, const std::vector<int>& automaton_of) const {
    switch (kind) {
      case Kind::Delay: return "delay";
      case Kind::Internal: {
        const auto& a = n.automata[automaton_of[instance]];
        return n.instances[instance].instance_name + ": " + a.locations[a.edges[edge].source].name +
               " -> " + a.locations[a.edges[edge].target].name;
      }
      case Kind::Sync: {
        const auto& a = n.automata[automaton_of[instance]];
        std::string s = n.instances[instance].instance_name + ": " +
                        a.locations[a.edges[edge].source].name + " -> " +
                        a.locations[a.edges[edge].target].name + " [" +
                        a.edges[edge].sync.channel + "!]";
        for (const auto& [ri, re] : receivers) s += " +" + n.instances[ri].instance_name;
        return s;
      }
    }
    return "";
  }
};

struct StateGraph {
  struct Succ {
    int target;
    TransitionLabel label;
  };
  std::vector<MachineState> nodes;
  std::vector<std::vector<Succ>> successors;
  int initial = 0;
  bool complete = true;
  size_t states_explored = 0;
  int64_t clock_cap = 1;

  // deadlock = no action transition from this node nor from any node along
  // its delay chain
  std::vector<char> deadlocked;
};

namespace detail {

struct StateHash {
  size_t operator()(const MachineState& s) const {
    size_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](uint64_t v) {
      h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    };
    for (int64_t v : s.globals) mix(static_cast<uint64_t>(v));
    for (const auto& store : s.instance_stores)
      for (int64_t v : store) mix(static_cast<uint64_t>(v));
    for (int v : s.active) mix(static_cast<uint64_t>(v));
    return h;
  }
};

struct StateEq {
  bool operator()(const MachineState& a, const MachineState& b) const { return a == b; }
};

} // namespace detail

/// Enumerates all successors of explicit states, mirroring the engine's
/// transition semantics but without priorities between action classes
/// (the checker considers every enabled alternative).
class Explorer {
public:
  explicit Explorer(std::shared_ptr<const CheckedModel> cm, size_t max_states = 1'000'000)
      : cm_(std::move(cm)), max_states_(max_states), eval_(*cm_) {
    const ModelNetwork& n = *cm_->network;
    for (const auto& inst : n.instances)
      automaton_of_.push_back(automaton_index(n, inst.automaton_name));
    clock_cap_ = compute_clock_cap();
  }

  const std::vector<int>& automaton_of_instance() const { return automaton_of_; }
  int64_t clock_cap() const { return clock_cap_; }

  StateGraph explore() {
    StateGraph g;
    g.clock_cap = clock_cap_;
    MachineState init = initial_state();
    std::unordered_map<MachineState, int, detail::StateHash, detail::StateEq> index;
    index.emplace(init, 0);
    g.nodes.push_back(init);
    g.successors.emplace_back();
    std::vector<int> frontier{0};
    size_t head = 0;
    while (head < frontier.size()) {
      int node = frontier[head++];
      if (g.nodes.size() > max_states_) {
        g.complete = false;
        break;
      }
      MachineState current = g.nodes[node]; // copy: successors mutate
      std::vector<std::pair<MachineState, TransitionLabel>> succ = successors_of(current);
      for (auto& [state, label] : succ) {
        auto [it, inserted] = index.emplace(state, static_cast<int>(g.nodes.size()));
        if (inserted) {
          g.nodes.push_back(state);
          g.successors.emplace_back();
          frontier.push_back(it->second);
        }
        g.successors[node].push_back({it->second, label});
      }
    }
    g.states_explored = g.nodes.size();
    compute_deadlocks(g);
    return g;
  }

  MachineState initial_state() {
    // build through a throwaway engine so initializer semantics match exactly
    EngineInstance engine(cm_, ExecutionConfig{});
    return engine.state();
  }

  std::vector<std::pair<MachineState, TransitionLabel>> successors_of(const MachineState& from) {
    std::vector<std::pair<MachineState, TransitionLabel>> out;
    bool committed = false;
    for (size_t i = 0; i < from.active.size(); ++i)
      if (location_of(from, static_cast<int>(i)).kind == LocationKind::Committed) committed = true;

    collect_sync_successors(from, committed, out);
    collect_internal_successors(from, committed, out);
    if (!committed) {
      bool action_urgency = urgent_sync_enabled(from);
      bool urgent_location = false;
      for (size_t i = 0; i < from.active.size(); ++i)
        if (location_of(from, static_cast<int>(i)).kind == LocationKind::Urgent)
          urgent_location = true;
      if (!urgent_location && !action_urgency) {
        MachineState delayed = from;
        advance_clocks(delayed);
        if (invariants_hold(delayed)) {
          TransitionLabel label;
          label.kind = TransitionLabel::Kind::Delay;
          out.emplace_back(std::move(delayed), label);
        }
      }
    }
    return out;
  }

  bool evaluate(const Expr& e, const MachineState& st) {
    MachineState scratch = st;
    return eval_.eval(e, scratch, -1) != 0;
  }

  int64_t evaluate_value(const Expr& e, const MachineState& st) {
    MachineState scratch = st;
    return eval_.eval(e, scratch, -1);
  }

private:
  static int automaton_index(const ModelNetwork& n, const std::string& name) {
    for (size_t i = 0; i < n.automata.size(); ++i)
      if (n.automata[i].name == name) return static_cast<int>(i);
    return -1;
  }

  const Automaton& automaton(int instance) const {
    return cm_->network->automata[automaton_of_[instance]];
  }
  const Location& location_of(const MachineState& st, int instance) const {
    return automaton(instance).locations[st.active[instance]];
  }

  int64_t compute_clock_cap() {
    // digital-clock cap: one past the largest constant compared against a clock
    int64_t max_const = 0;
    auto scan_expr = [&](const Expr& e, auto&& self) -> void {
      if (e.kind == Expr::Kind::Binary) {
        bool cmp = e.binary_op == BinaryOp::Lt || e.binary_op == BinaryOp::Le ||
                   e.binary_op == BinaryOp::Gt || e.binary_op == BinaryOp::Ge ||
                   e.binary_op == BinaryOp::Eq || e.binary_op == BinaryOp::Ne;
        if (cmp) {
          bool a_clock = mentions_clock(*e.a), b_clock = mentions_clock(*e.b);
          const ExprInfo& ia = cm_->info(*e.a);
          const ExprInfo& ib = cm_->info(*e.b);
          if (a_clock && ib.folded) max_const = std::max(max_const, std::abs(ib.value));
          if (b_clock && ia.folded) max_const = std::max(max_const, std::abs(ia.value));
        }
      }
      if (e.a) self(*e.a, self);
      if (e.b) self(*e.b, self);
      if (e.c) self(*e.c, self);
      for (const auto& arg : e.args) self(*arg, self);
    };
    for (const auto& a : cm_->network->automata) {
      for (const auto& loc : a.locations)
        if (loc.invariant) scan_expr(*loc.invariant, scan_expr);
      for (const auto& e : a.edges)
        if (e.guard) scan_expr(*e.guard, scan_expr);
    }
    return max_const + 1;
  }

  bool mentions_clock(const Expr& e) const {
    if (e.kind == Expr::Kind::Ident) {
      const ExprInfo& info = cm_->info(e);
      return info.symbol >= 0 && cm_->symbols[info.symbol].type &&
             cm_->symbols[info.symbol].type->kind == TypeRef::Kind::Clock;
    }
    if (e.a && mentions_clock(*e.a)) return true;
    if (e.b && mentions_clock(*e.b)) return true;
    if (e.c && mentions_clock(*e.c)) return true;
    for (const auto& arg : e.args)
      if (mentions_clock(*arg)) return true;
    return false;
  }

  void advance_clocks(MachineState& st) {
    for (int slot : cm_->global_clock_slots)
      st.globals[slot] = std::min<int64_t>(st.globals[slot] + 1, clock_cap_);
    for (size_t i = 0; i < st.instance_stores.size(); ++i)
      for (int slot : cm_->automaton_layouts[automaton_of_[i]].clock_slots)
        st.instance_stores[i][slot] =
            std::min<int64_t>(st.instance_stores[i][slot] + 1, clock_cap_);
    st.logical_time = 0; // logical time is not part of node identity
  }

  bool invariants_hold(const MachineState& st) {
    for (size_t i = 0; i < st.active.size(); ++i) {
      const Location& loc = location_of(st, static_cast<int>(i));
      if (!loc.invariant) continue;
      MachineState scratch = st;
      if (eval_.eval(*loc.invariant, scratch, static_cast<int>(i)) == 0) return false;
    }
    return true;
  }

  bool guard_holds(const MachineState& st, int instance, const Edge& e) {
    if (!e.guard) return true;
    MachineState scratch = st;
    try {
      return eval_.eval(*e.guard, scratch, instance) != 0;
    } catch (const Error&) {
      return false;
    }
  }

  int channel_id(const MachineState& st, int instance, const SyncLabel& sync) {
    int base = -1, count = 0;
    for (const auto& s : cm_->symbols) {
      if (s.kind == Symbol::Kind::Channel && s.name == sync.channel) {
        base = s.channel_base;
        count = s.channel_count;
        break;
      }
    }
    if (base < 0) return -1;
    if (!sync.index) return base;
    MachineState scratch = st;
    int64_t idx = eval_.eval(*sync.index, scratch, instance);
    if (idx < 0 || idx >= count) return -1;
    return base + static_cast<int>(idx);
  }

  /// Applies edge updates and the destination move on a copy; empty optional
  /// when the target invariant rejects it.
  bool apply_edge(MachineState& st, int instance, int edge) {
    const Automaton& a = automaton(instance);
    const Edge& e = a.edges[edge];
    try {
      eval_.run_updates(e.updates, st, instance);
    } catch (const Error&) {
      return false;
    }
    st.active[instance] = e.target;
    const Location& target = a.locations[e.target];
    if (target.invariant) {
      MachineState scratch = st;
      if (eval_.eval(*target.invariant, scratch, instance) == 0) return false;
    }
    return true;
  }

  void collect_internal_successors(const MachineState& from, bool committed_only,
                                   std::vector<std::pair<MachineState, TransitionLabel>>& out) {
    for (size_t i = 0; i < from.active.size(); ++i) {
      if (committed_only &&
          location_of(from, static_cast<int>(i)).kind != LocationKind::Committed)
        continue;
      const Automaton& a = automaton(static_cast<int>(i));
      for (size_t ei = 0; ei < a.edges.size(); ++ei) {
        const Edge& e = a.edges[ei];
        if (e.source != from.active[i] || e.sync.kind != SyncKind::None) continue;
        if (!guard_holds(from, static_cast<int>(i), e)) continue;
        if (e.weight) {
          // zero-weight branches are unreachable under stochastic semantics
          MachineState scratch = from;
          int64_t w = 0;
          try {
            w = eval_.eval(*e.weight, scratch, static_cast<int>(i));
          } catch (const Error&) {
            continue;
          }
          if (w <= 0) continue;
        }
        MachineState next = from;
        if (!apply_edge(next, static_cast<int>(i), static_cast<int>(ei))) continue;
        TransitionLabel label;
        label.kind = TransitionLabel::Kind::Internal;
        label.instance = static_cast<int>(i);
        label.edge = static_cast<int>(ei);
        out.emplace_back(std::move(next), label);
      }
    }
  }

  void collect_sync_successors(const MachineState& from, bool committed_only,
                               std::vector<std::pair<MachineState, TransitionLabel>>& out) {
    const ModelNetwork& n = *cm_->network;
    for (size_t si = 0; si < n.instances.size(); ++si) {
      const Automaton& a = automaton(static_cast<int>(si));
      for (size_t ei = 0; ei < a.edges.size(); ++ei) {
        const Edge& e = a.edges[ei];
        if (e.source != from.active[si] || e.sync.kind != SyncKind::Send) continue;
        if (!guard_holds(from, static_cast<int>(si), e)) continue;
        int ch = channel_id(from, static_cast<int>(si), e.sync);
        if (ch < 0) continue;
        bool broadcast = cm_->channels[ch].broadcast;
        // receivers enabled in the pre-state
        std::vector<std::pair<int, int>> receivers;
        for (size_t ri = 0; ri < n.instances.size(); ++ri) {
          if (ri == si) continue;
          const Automaton& ra = automaton(static_cast<int>(ri));
          for (size_t re = 0; re < ra.edges.size(); ++re) {
            const Edge& redge = ra.edges[re];
            if (redge.source != from.active[ri] || redge.sync.kind != SyncKind::Receive) continue;
            if (channel_id(from, static_cast<int>(ri), redge.sync) != ch) continue;
            if (!guard_holds(from, static_cast<int>(ri), redge)) continue;
            receivers.emplace_back(static_cast<int>(ri), static_cast<int>(re));
          }
        }
        auto committed_involved = [&](const std::vector<std::pair<int, int>>& recv) {
          if (location_of(from, static_cast<int>(si)).kind == LocationKind::Committed) return true;
          for (const auto& [ri, re] : recv)
            if (location_of(from, ri).kind == LocationKind::Committed) return true;
          return false;
        };
        if (broadcast) {
          // one receiver edge per instance; first enabled in declaration order
          std::vector<std::pair<int, int>> chosen;
          int last_instance = -1;
          for (const auto& r : receivers) {
            if (r.first == last_instance) continue;
            chosen.push_back(r);
            last_instance = r.first;
          }
          if (committed_only && !committed_involved(chosen)) continue;
          MachineState next = from;
          if (!apply_edge(next, static_cast<int>(si), static_cast<int>(ei))) continue;
          TransitionLabel label;
          label.kind = TransitionLabel::Kind::Sync;
          label.instance = static_cast<int>(si);
          label.edge = static_cast<int>(ei);
          label.channel = ch;
          bool ok = true;
          for (const auto& [ri, re] : chosen) {
            if (!apply_edge(next, ri, re)) {
              ok = false;
              break;
            }
            label.receivers.emplace_back(ri, re);
          }
          if (!ok) continue;
          out.emplace_back(std::move(next), label);
        } else {
          for (const auto& [ri, re] : receivers) {
            if (committed_only && !committed_involved({{ri, re}})) continue;
            MachineState next = from;
            if (!apply_edge(next, static_cast<int>(si), static_cast<int>(ei))) continue;
            if (!apply_edge(next, ri, re)) continue;
            TransitionLabel label;
            label.kind = TransitionLabel::Kind::Sync;
            label.instance = static_cast<int>(si);
            label.edge = static_cast<int>(ei);
            label.channel = ch;
            label.receivers.emplace_back(ri, re);
            out.emplace_back(std::move(next), label);
          }
        }
      }
    }
  }

  bool urgent_sync_enabled(const MachineState& from) {
    const ModelNetwork& n = *cm_->network;
    for (size_t si = 0; si < n.instances.size(); ++si) {
      const Automaton& a = automaton(static_cast<int>(si));
      for (const auto& e : a.edges) {
        if (e.source != from.active[si] || e.sync.kind != SyncKind::Send) continue;
        int ch = channel_id(from, static_cast<int>(si), e.sync);
        if (ch < 0 || !cm_->channels[ch].urgent) continue;
        if (!guard_holds(from, static_cast<int>(si), e)) continue;
        if (cm_->channels[ch].broadcast) return true;
        for (size_t ri = 0; ri < n.instances.size(); ++ri) {
          if (ri == si) continue;
          const Automaton& ra = automaton(static_cast<int>(ri));
          for (size_t re = 0; re < ra.edges.size(); ++re) {
            const Edge& redge = ra.edges[re];
            if (redge.source == from.active[ri] && redge.sync.kind == SyncKind::Receive &&
                channel_id(from, static_cast<int>(ri), redge.sync) == ch &&
                guard_holds(from, static_cast<int>(ri), redge))
              return true;
          }
        }
      }
    }
    return false;
  }

  void compute_deadlocks(StateGraph& g) {
    g.deadlocked.assign(g.nodes.size(), 0);
    std::vector<char> memo(g.nodes.size(), 0); // 0 unknown, 1 deadlocked, 2 live
    for (size_t i = 0; i < g.nodes.size(); ++i) {
      if (memo[i]) continue;
      // walk the delay chain from i
      std::vector<int> chain;
      int cur = static_cast<int>(i);
      char verdict = 1; // deadlocked unless an action appears
      for (;;) {
        if (memo[cur]) {
          verdict = memo[cur];
          break;
        }
        bool has_action = false;
        int delay_succ = -1;
        for (const auto& s : g.successors[cur]) {
          if (s.label.kind == TransitionLabel::Kind::Delay) delay_succ = s.target;
          else has_action = true;
        }
        if (has_action) {
          verdict = 2;
          chain.push_back(cur);
          break;
        }
        if (delay_succ < 0) {
          verdict = 1; // stuck: no action, no delay
          chain.push_back(cur);
          break;
        }
        if (std::find(chain.begin(), chain.end(), cur) != chain.end()) {
          verdict = 1; // delay cycle with no actions anywhere
          break;
        }
        chain.push_back(cur);
        cur = delay_succ;
      }
      for (int node : chain) memo[node] = verdict;
      memo[i] = verdict;
    }
    for (size_t i = 0; i < g.nodes.size(); ++i) g.deadlocked[i] = (memo[i] == 1);
  }

  std::shared_ptr<const CheckedModel> cm_;
  size_t max_states_;
  Evaluator eval_;
  std::vector<int> automaton_of_;
  int64_t clock_cap_ = 1;
};

// ---------------------------------------------------------------------------
// Property checking
// ---------------------------------------------------------------------------

struct CounterexampleStep {
  TransitionLabel label;
  int node = -1;
};

struct Counterexample {
  std::vector<CounterexampleStep> steps; // from the initial node
  int lasso_start = -1;                  // index into steps where the cycle begins, -1 if plain
  bool empty() const { return steps.empty() && lasso_start < 0; }
};

struct CheckOutcome {
  enum class Verdict { Holds, Violated, Incomplete };
  Verdict verdict = Verdict::Holds;
  Counterexample trace;
  size_t states = 0;
};

class PropertyChecker {
public:
  PropertyChecker(std::shared_ptr<const CheckedModel> cm, Explorer& explorer, const StateGraph& g)
      : cm_(std::move(cm)), explorer_(explorer), g_(g) {}

  CheckOutcome check(const Query& q) {
    CheckOutcome out;
    out.states = g_.states_explored;
    if (!g_.complete) {
      out.verdict = CheckOutcome::Verdict::Incomplete;
      return out;
    }
    switch (q.kind) {
      case Query::Kind::Invariant: return check_invariant(*q.predicate);
      case Query::Kind::Reachability: return check_reachability(*q.predicate);
      case Query::Kind::LeadsTo: return check_leads_to(*q.predicate, *q.predicate2);
      case Query::Kind::DeadlockFreedom: return check_deadlock_freedom();
      default:
        throw Error(Error::Kind::ParseError,
                    "query kind not supported by the explicit-state checker");
    }
  }

private:
  CheckOutcome outcome(CheckOutcome::Verdict v) {
    CheckOutcome out;
    out.verdict = v;
    out.states = g_.states_explored;
    return out;
  }

  CheckOutcome check_invariant(const Expr& phi) {
    for (size_t i = 0; i < g_.nodes.size(); ++i) {
      if (!explorer_.evaluate(phi, g_.nodes[i])) {
        CheckOutcome out = outcome(CheckOutcome::Verdict::Violated);
        out.trace = shortest_path_to(static_cast<int>(i));
        return out;
      }
    }
    return outcome(CheckOutcome::Verdict::Holds);
  }

  CheckOutcome check_reachability(const Expr& phi) {
    for (size_t i = 0; i < g_.nodes.size(); ++i)
      if (explorer_.evaluate(phi, g_.nodes[i])) {
        CheckOutcome out = outcome(CheckOutcome::Verdict::Holds);
        out.trace = shortest_path_to(static_cast<int>(i)); // witness
        return out;
      }
    return outcome(CheckOutcome::Verdict::Violated);
  }

  CheckOutcome check_deadlock_freedom() {
    for (size_t i = 0; i < g_.nodes.size(); ++i)
      if (g_.deadlocked[i]) {
        CheckOutcome out = outcome(CheckOutcome::Verdict::Violated);
        out.trace = shortest_path_to(static_cast<int>(i));
        return out;
      }
    return outcome(CheckOutcome::Verdict::Holds);
  }

  /// phi --> psi: from every reachable phi-state, all maximal paths reach a
  /// psi-state. Decided via the greatest fixpoint of EG(!psi).
  CheckOutcome check_leads_to(const Expr& phi, const Expr& psi) {
    size_t n = g_.nodes.size();
    std::vector<char> not_psi(n), in_set(n);
    for (size_t i = 0; i < n; ++i) {
      not_psi[i] = !explorer_.evaluate(psi, g_.nodes[i]);
      in_set[i] = not_psi[i];
    }
    bool changed = true;
    while (changed) {
      changed = false;
      for (size_t i = 0; i < n; ++i) {
        if (!in_set[i]) continue;
        if (g_.successors[i].empty()) continue; // stuck maximal path stays in EG
        bool keeps = false;
        for (const auto& s : g_.successors[i])
          if (in_set[s.target]) keeps = true;
        if (!keeps) {
          in_set[i] = 0;
          changed = true;
        }
      }
    }
    for (size_t i = 0; i < n; ++i) {
      if (in_set[i] && explorer_.evaluate(phi, g_.nodes[i])) {
        CheckOutcome out = outcome(CheckOutcome::Verdict::Violated);
        out.trace = lasso_from(static_cast<int>(i), in_set);
        return out;
      }
    }
    return outcome(CheckOutcome::Verdict::Holds);
  }

  Counterexample shortest_path_to(int target) {
    std::vector<int> parent(g_.nodes.size(), -1);
    std::vector<int> parent_succ(g_.nodes.size(), -1);
    std::vector<char> seen(g_.nodes.size(), 0);
    std::vector<int> queue{g_.initial};
    seen[g_.initial] = 1;
    size_t head = 0;
    while (head < queue.size()) {
      int cur = queue[head++];
      if (cur == target) break;
      for (size_t si = 0; si < g_.successors[cur].size(); ++si) {
        int nxt = g_.successors[cur][si].target;
        if (seen[nxt]) continue;
        seen[nxt] = 1;
        parent[nxt] = cur;
        parent_succ[nxt] = static_cast<int>(si);
        queue.push_back(nxt);
      }
    }
    Counterexample ce;
    std::vector<CounterexampleStep> reversed;
    int cur = target;
    while (cur != g_.initial && parent[cur] >= 0) {
      int p = parent[cur];
      reversed.push_back({g_.successors[p][parent_succ[cur]].label, cur});
      cur = p;
    }
    for (auto it = reversed.rbegin(); it != reversed.rend(); ++it) ce.steps.push_back(*it);
    return ce;
  }

  Counterexample lasso_from(int start, const std::vector<char>& in_set) {
    Counterexample ce = shortest_path_to(start);
    // extend within the EG set until a node repeats or the path sticks
    std::vector<int> visited_at(g_.nodes.size(), -1);
    int cur = start;
    visited_at[cur] = static_cast<int>(ce.steps.size());
    for (;;) {
      int next = -1;
      const TransitionLabel* label = nullptr;
      for (const auto& s : g_.successors[cur]) {
        if (in_set[s.target]) {
          next = s.target;
          label = &s.label;
          break;
        }
      }
      if (next < 0) break; // stuck node: finite maximal path
      ce.steps.push_back({*label, next});
      if (visited_at[next] >= 0) {
        ce.lasso_start = visited_at[next];
        break;
      }
      visited_at[next] = static_cast<int>(ce.steps.size());
      cur = next;
    }
    return ce;
  }

  std::shared_ptr<const CheckedModel> cm_;
  Explorer& explorer_;
  const StateGraph& g_;
};

// ---------------------------------------------------------------------------
// MAPE property templates P1..P12
// ---------------------------------------------------------------------------

struct PropertyTemplate {
  std::string id;
  std::string text; // with $NAME placeholders
  std::vector<std::string> placeholders;
};

inline const std::vector<PropertyTemplate>& mape_property_templates() {
  static const std::vector<PropertyTemplate> templates = {
      {"P1", "Probe.DataCollected --> Monitor.KnowledgeUpdated", {}},
      {"P2", "Monitor.AnalysisRequired --> Analyzer.CheckForAdaptationDone", {}},
      {"P3", "Analyzer.AdaptationNeeded --> Verifier.VerificationDone", {}},
      {"P4",
       "Analyzer.QualityEstimatesReady --> Planner.ComposeAdaptationPlan || Planner.BestOptionInUse",
       {}},
      {"P5", "Analyzer.VerificationTimeExceeded --> Analyzer.UseFailSafeStrategy", {}},
      {"P6", "Planner.PlanCreated --> Executor.PlanExecuted", {}},
      {"P7", "Executor.PlanExecuted --> Effector.AdaptationCompleted", {}},
      {"P8",
       "Planner.$ElementPlanned && Planner.$elemId == $E && Planner.$stepsContains($E, $L, $T, $V)"
       " --> Executor.$AdaptElement && Executor.$elemId == $E &&"
       " Executor.$stepsAppliedContains($E, $L, $T, $V)",
       {"ElementPlanned", "elemId", "stepsContains", "AdaptElement", "stepsAppliedContains", "E",
        "L", "T", "V"}},
      {"P9",
       "Executor.$AdaptElement && Executor.$elemId == $E && Executor.$stepsAppliedContains($E, $L, $T, $V)"
       " --> Effector.$ElementAdapted && Effector.$elemId == $E &&"
       " Effector.$stepsEnactedContains($E, $L, $T, $V)",
       {"AdaptElement", "elemId", "stepsAppliedContains", "ElementAdapted", "stepsEnactedContains",
        "E", "L", "T", "V"}},
      {"P10", "A[] !Effector.ResultsIncorrect", {}},
      {"P11", "E<> $Model.$Location", {"Model", "Location"}},
      {"P12", "A[] no deadlock", {}},
  };
  return templates;
}

/// Substitutes $NAME placeholders; missing bindings raise InstantiationError
/// (instantiation rule 3: property names must match model names).
inline std::string instantiate_property(const PropertyTemplate& tmpl,
                                        const std::map<std::string, std::string>& bindings) {
  std::string out;
  const std::string& text = tmpl.text;
  for (size_t i = 0; i < text.size();) {
    if (text[i] != '$') {
      out += text[i++];
      continue;
    }
    size_t j = i + 1;
    while (j < text.size() && (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '_'))
      ++j;
    std::string name = text.substr(i + 1, j - i - 1);
    auto it = bindings.find(name);
    if (it == bindings.end())
      throw Error(Error::Kind::Internal,
                  "property " + tmpl.id + " needs a binding for <" + name + ">");
    out += it->second;
    i = j;
  }
  return out;
}

struct PropertyResult {
  std::string id;
  std::string query_text;
  CheckOutcome outcome;
  double millis = 0;
  std::string trace_text;
};

struct VerificationReport {
  std::vector<PropertyResult> results;
  size_t states_explored = 0;
  double total_millis = 0;
  bool passed = false;

  std::string to_csv() const {
    std::string out = "property,verdict,states,millis\n";
    for (const auto& r : results) {
      const char* v = r.outcome.verdict == CheckOutcome::Verdict::Holds ? "holds"
                      : r.outcome.verdict == CheckOutcome::Verdict::Violated ? "violated"
                                                                             : "incomplete";
      out += r.id + "," + v + "," + std::to_string(r.outcome.states) + "," +
             std::to_string(static_cast<long long>(r.millis)) + "\n";
    }
    return out;
  }
};

/// Runs the instantiated P1..P12 suite over a closed model (MAPE + stubs).
/// `properties` selects ids (empty = all); bindings fill angle-bracket slots.
inline VerificationReport run_verification_suite(
    const std::vector<std::string>& model_texts,
    const std::map<std::string, std::string>& bindings,
    const std::vector<std::string>& properties = {},
    size_t max_states = 1'000'000) {
  std::vector<Diagnostic> diags;
  std::vector<ModelNetwork> parts;
  for (const auto& text : model_texts) {
    ParseResult pr = parse_model(text);
    if (!pr.ok()) throw Error(Error::Kind::ParseError, join_diagnostics(pr.diagnostics));
    parts.push_back(std::move(pr.network));
  }
  ModelNetwork net = compose_networks(std::move(parts), diags);
  if (!diags.empty()) throw Error(Error::Kind::ParseError, join_diagnostics(diags));

  std::vector<std::pair<std::string, std::string>> to_check; // (id, text)
  for (const auto& tmpl : mape_property_templates()) {
    if (!properties.empty() &&
        std::find(properties.begin(), properties.end(), tmpl.id) == properties.end())
      continue;
    to_check.emplace_back(tmpl.id, instantiate_property(tmpl, bindings));
  }
  for (const auto& [id, text] : to_check) {
    QueryParseResult qr = parse_query(text);
    if (!qr.ok())
      throw Error(Error::Kind::ParseError, "property " + id + ": " + join_diagnostics(qr.diagnostics));
    qr.query.name = id;
    net.queries.push_back(std::move(qr.query));
  }

  CheckedModel checked = typecheck_model(std::move(net));
  if (!checked.ok())
    throw Error(Error::Kind::InstantiationError,
                "instantiated properties do not resolve against the model:\n" +
                    join_diagnostics(checked.diagnostics));
  auto cm = std::make_shared<CheckedModel>(std::move(checked));

  Explorer explorer(cm, max_states);
  auto t0 = std::chrono::steady_clock::now();
  StateGraph graph = explorer.explore();
  double explore_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

  VerificationReport report;
  report.states_explored = graph.states_explored;
  PropertyChecker checker(cm, explorer, graph);
  bool all_hold = true;
  for (const auto& q : cm->network->queries) {
    bool is_suite_query = false;
    for (const auto& [id, _] : to_check)
      if (q.name == id) is_suite_query = true;
    if (!is_suite_query) continue;
    auto p0 = std::chrono::steady_clock::now();
    PropertyResult pr;
    pr.id = q.name;
    pr.query_text = q.text;
    pr.outcome = checker.check(q);
    pr.millis =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - p0).count();
    if (pr.outcome.verdict != CheckOutcome::Verdict::Holds) all_hold = false;
    if (pr.outcome.verdict == CheckOutcome::Verdict::Violated) {
      for (const auto& step : pr.outcome.trace.steps)
        pr.trace_text += step.label.to_string(*cm->network, explorer.automaton_of_instance()) + "\n";
      if (pr.outcome.trace.lasso_start >= 0)
        pr.trace_text += "(cycle back to step " + std::to_string(pr.outcome.trace.lasso_start) + ")\n";
    }
    report.results.push_back(std::move(pr));
  }
  report.total_millis =
      explore_ms; // exploration dominates; per-property times add on top
  for (const auto& r : report.results) report.total_millis += r.millis;
  report.passed = all_hold && !report.results.empty();
  return report;
}

} // namespace activforms
