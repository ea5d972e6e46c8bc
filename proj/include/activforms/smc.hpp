#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <thread>
#include <vector>

#include "activforms/eval.hpp"
#include "activforms/rng.hpp"
#include "activforms/stats.hpp"
#include "activforms/typecheck.hpp"

namespace activforms {

// ---------------------------------------------------------------------------
// Stochastic bounded simulation of a closed network
// ---------------------------------------------------------------------------

/// One bounded stochastic run: uniform choice among enabled edges, declared
/// branch weights where present, uniform delays under invariant bounds and
/// exponential (default rate 1) delays in unbounded locations.
class StochasticRunner {
public:
  explicit StochasticRunner(std::shared_ptr<const CheckedModel> cm,
                            const MachineState* initial = nullptr)
      : cm_(std::move(cm)), eval_(*cm_) {
    const ModelNetwork& n = *cm_->network;
    for (const auto& inst : n.instances) {
      for (size_t i = 0; i < n.automata.size(); ++i)
        if (n.automata[i].name == inst.automaton_name)
          automaton_of_.push_back(static_cast<int>(i));
    }
    if (initial) initial_ = *initial;
    else build_initial();
    build_edge_index();
  }

  const MachineState& initial() const { return initial_; }

  /// Replaces the initial state, typically with bound parameter slots patched
  /// into the global store of a cached template model.
  void override_initial(const MachineState& st) { initial_ = st; }

  struct RunResult {
    bool predicate_hit = false;
    std::vector<int64_t> monitors;
    int64_t end_time = 0;
  };

  /// Simulates until the predicate (optional) holds or the time bound passes.
  RunResult run(uint64_t run_seed, int64_t bound, const Expr* predicate,
                const std::vector<const Expr*>& monitors) {
    Rng rng(run_seed);
    MachineState st = initial_;
    RunResult out;
    auto hit = [&]() {
      if (!predicate) return false;
      return eval_.eval(*const_cast<Expr*>(predicate), st, -1) != 0;
    };
    if (hit()) {
      out.predicate_hit = true;
      return finish(out, st, monitors);
    }
    long long actions = 0;
    while (st.logical_time <= bound) {
      if (fire_one_action(st, rng)) {
        if (++actions > 2'000'000)
          throw Error(Error::Kind::Internal, "non-terminating stochastic run");
        if (hit()) {
          out.predicate_hit = true;
          return finish(out, st, monitors);
        }
        continue;
      }
      // no action enabled: delay
      DelayPlan plan = plan_delay(st, bound);
      if (plan.stuck || st.logical_time >= bound) break;
      int64_t d = sample_delay(plan, rng, bound - st.logical_time);
      if (d <= 0) break;
      for (int64_t k = 0; k < d; ++k) {
        advance_one_tick(st);
        if (hit()) {
          out.predicate_hit = true;
          return finish(out, st, monitors);
        }
      }
    }
    return finish(out, st, monitors);
  }

private:
  struct LocEdges {
    std::vector<int> sends;
    std::vector<int> internal_plain;
    std::vector<int> internal_weighted;
    std::vector<int> receives;
  };

  void build_edge_index() {
    const ModelNetwork& n = *cm_->network;
    edge_index_.resize(n.automata.size());
    for (size_t ai = 0; ai < n.automata.size(); ++ai) {
      const Automaton& a = n.automata[ai];
      edge_index_[ai].resize(a.locations.size());
      for (size_t ei = 0; ei < a.edges.size(); ++ei) {
        const Edge& e = a.edges[ei];
        if (e.source < 0) continue;
        LocEdges& le = edge_index_[ai][e.source];
        if (e.sync.kind == SyncKind::Send) le.sends.push_back(static_cast<int>(ei));
        else if (e.sync.kind == SyncKind::Receive) le.receives.push_back(static_cast<int>(ei));
        else if (e.weight) le.internal_weighted.push_back(static_cast<int>(ei));
        else le.internal_plain.push_back(static_cast<int>(ei));
      }
    }
  }

  const LocEdges& edges_at(int instance, const MachineState& st) const {
    return edge_index_[automaton_of_[instance]][st.active[instance]];
  }

  struct DelayPlan {
    bool stuck = false;          // urgent/committed active with nothing enabled
    int64_t max_delay = -1;      // invariant bound (-1 = unbounded)
    int64_t first_enable = -1;   // earliest delay after which an action enables (-1 = none found)
    double rate = 1.0;           // exponential rate for unbounded waits
  };

  RunResult finish(RunResult out, MachineState& st, const std::vector<const Expr*>& monitors) {
    out.end_time = st.logical_time;
    for (const Expr* m : monitors)
      out.monitors.push_back(eval_.eval(*const_cast<Expr*>(m), st, -1));
    return out;
  }

  void build_initial() {
    // mirror engine initialization exactly
    initial_.globals.assign(cm_->global_width, 0);
    const ModelNetwork& n = *cm_->network;
    initial_.instance_stores.resize(n.instances.size());
    initial_.active.resize(n.instances.size());
    Evaluator ev(*cm_);
    for (const auto& sym : cm_->symbols)
      if (sym.kind == Symbol::Kind::Variable && sym.store == StoreKind::Global)
        ev.init_var(sym, initial_, -1, initial_.globals);
    for (size_t i = 0; i < n.instances.size(); ++i) {
      int ai = automaton_of_[i];
      const Automaton& a = n.automata[ai];
      initial_.instance_stores[i].assign(cm_->automaton_layouts[ai].instance_width, 0);
      initial_.active[i] = a.initial;
      size_t param_idx = 0;
      for (const auto& sym : cm_->symbols) {
        if (sym.kind != Symbol::Kind::Variable || sym.store != StoreKind::Instance ||
            sym.automaton != ai)
          continue;
        if (param_idx < a.params.size() && sym.decl == &a.params[param_idx]) {
          initial_.instance_stores[i][sym.slot] =
              ev.eval(*n.instances[i].args[param_idx], initial_, -1);
          ++param_idx;
        } else {
          ev.init_var(sym, initial_, static_cast<int>(i), initial_.instance_stores[i]);
        }
      }
    }
  }

  const Automaton& automaton(int instance) const {
    return cm_->network->automata[automaton_of_[instance]];
  }

  bool guard_holds(MachineState& st, int instance, const Edge& e) {
    if (!e.guard) return true;
    try {
      return eval_.eval(*e.guard, st, instance) != 0;
    } catch (const Error&) {
      return false;
    }
  }

  int channel_id(MachineState& st, int instance, const SyncLabel& sync) {
    int base = -1, count = 0;
    for (const auto& s : cm_->symbols)
      if (s.kind == Symbol::Kind::Channel && s.name == sync.channel) {
        base = s.channel_base;
        count = s.channel_count;
        break;
      }
    if (base < 0) return -1;
    if (!sync.index) return base;
    int64_t idx = eval_.eval(*sync.index, st, instance);
    if (idx < 0 || idx >= count) return -1;
    return base + static_cast<int>(idx);
  }

  void apply_edge(MachineState& st, int instance, int edge) {
    const Edge& e = automaton(instance).edges[edge];
    eval_.run_updates(e.updates, st, instance);
    st.active[instance] = e.target;
  }

  struct ActionUnit {
    int instance;
    std::vector<int> branch_edges; // one entry unless the location is weighted
    bool is_sync = false;
    int channel = -1;
    std::vector<std::pair<int, int>> receivers; // enabled (instance, edge) pairs
    bool broadcast = false;
  };

  /// Collects enabled action units; committed_only restricts participants.
  std::vector<ActionUnit> enabled_units(MachineState& st, bool committed_only) {
    std::vector<ActionUnit> units;
    const ModelNetwork& n = *cm_->network;
    for (size_t i = 0; i < n.instances.size(); ++i) {
      const Automaton& a = automaton(static_cast<int>(i));
      const Location& loc = a.locations[st.active[i]];
      bool committed = loc.kind == LocationKind::Committed;
      const LocEdges& le = edges_at(static_cast<int>(i), st);
      for (int ei : le.sends) {
        const Edge& e = a.edges[ei];
        if (!guard_holds(st, static_cast<int>(i), e)) continue;
        int ch = channel_id(st, static_cast<int>(i), e.sync);
        if (ch < 0) continue;
        bool broadcast = cm_->channels[ch].broadcast;
        std::vector<std::pair<int, int>> receivers;
        for (size_t ri = 0; ri < n.instances.size(); ++ri) {
          if (ri == i) continue;
          const Automaton& ra = automaton(static_cast<int>(ri));
          for (int re : edges_at(static_cast<int>(ri), st).receives) {
            const Edge& redge = ra.edges[re];
            if (channel_id(st, static_cast<int>(ri), redge.sync) != ch) continue;
            if (!guard_holds(st, static_cast<int>(ri), redge)) continue;
            receivers.emplace_back(static_cast<int>(ri), re);
          }
        }
        if (!broadcast && receivers.empty()) continue;
        bool involved = committed;
        for (const auto& [ri, re] : receivers)
          if (automaton(ri).locations[st.active[ri]].kind == LocationKind::Committed)
            involved = true;
        if (committed_only && !involved) continue;
        ActionUnit u;
        u.instance = static_cast<int>(i);
        u.branch_edges = {ei};
        u.is_sync = true;
        u.channel = ch;
        u.receivers = std::move(receivers);
        u.broadcast = broadcast;
        units.push_back(std::move(u));
      }
      if (committed_only && !committed) continue;
      bool any_weighted_enabled = false;
      ActionUnit wu;
      for (int ei : le.internal_weighted) {
        if (!guard_holds(st, static_cast<int>(i), a.edges[ei])) continue;
        wu.branch_edges.push_back(ei);
        any_weighted_enabled = true;
      }
      if (any_weighted_enabled) {
        wu.instance = static_cast<int>(i);
        units.push_back(std::move(wu));
      }
      for (int ei : le.internal_plain) {
        if (!guard_holds(st, static_cast<int>(i), a.edges[ei])) continue;
        ActionUnit u;
        u.instance = static_cast<int>(i);
        u.branch_edges = {ei};
        units.push_back(std::move(u));
      }
    }
    return units;
  }

  bool fire_one_action(MachineState& st, Rng& rng) {
    bool committed = false;
    for (size_t i = 0; i < st.active.size(); ++i)
      if (automaton(static_cast<int>(i)).locations[st.active[i]].kind == LocationKind::Committed)
        committed = true;
    std::vector<ActionUnit> units = enabled_units(st, committed);
    if (units.empty()) {
      if (committed)
        throw Error(Error::Kind::InvariantViolation,
                    "committed location with no enabled transition");
      return false;
    }
    const ActionUnit& u = units[rng.below(units.size())];
    int edge;
    if (u.branch_edges.size() == 1) {
      edge = u.branch_edges[0];
    } else {
      std::vector<int64_t> w;
      for (int ei : u.branch_edges) {
        int64_t v = eval_.eval(*automaton(u.instance).edges[ei].weight, st, u.instance);
        w.push_back(std::max<int64_t>(v, 0));
      }
      int64_t total = 0;
      for (int64_t v : w) total += v;
      if (total <= 0) throw Error(Error::Kind::RangeViolation, "branch weights sum to zero");
      edge = u.branch_edges[rng.weighted(w.data(), w.size())];
    }
    apply_edge(st, u.instance, edge);
    if (u.is_sync) {
      if (u.broadcast) {
        int last_instance = -1;
        for (const auto& [ri, re] : u.receivers) {
          if (ri == last_instance) continue; // one receive edge per instance
          apply_edge(st, ri, re);
          last_instance = ri;
        }
      } else {
        const auto& [ri, re] = u.receivers[rng.below(u.receivers.size())];
        apply_edge(st, ri, re);
      }
    }
    return true;
  }

  void advance_one_tick(MachineState& st) {
    for (int slot : cm_->global_clock_slots) st.globals[slot] += 1;
    for (size_t i = 0; i < st.instance_stores.size(); ++i)
      for (int slot : cm_->automaton_layouts[automaton_of_[i]].clock_slots)
        st.instance_stores[i][slot] += 1;
    st.logical_time += 1;
  }

  DelayPlan plan_delay(MachineState& st, int64_t bound) {
    DelayPlan plan;
    int64_t remaining = bound - st.logical_time;
    // urgent or committed locations forbid delay
    for (size_t i = 0; i < st.active.size(); ++i) {
      auto kind = automaton(static_cast<int>(i)).locations[st.active[i]].kind;
      if (kind == LocationKind::Urgent || kind == LocationKind::Committed) {
        plan.stuck = true;
        return plan;
      }
    }
    // invariant slack and earliest enabling found by forward scan
    int64_t scan_limit = remaining;
    MachineState probe = st;
    plan.max_delay = -1;
    double min_rate = 0;
    bool any_rate = false;
    for (size_t i = 0; i < st.active.size(); ++i) {
      const Location& loc = automaton(static_cast<int>(i)).locations[st.active[i]];
      if (loc.exponential_rate) {
        any_rate = true;
        min_rate = std::max(min_rate, static_cast<double>(*loc.exponential_rate));
      }
    }
    plan.rate = any_rate ? min_rate : 1.0;
    for (int64_t d = 1; d <= scan_limit; ++d) {
      advance_one_tick(probe);
      bool invariants_ok = true;
      for (size_t i = 0; i < probe.active.size(); ++i) {
        const Location& loc = automaton(static_cast<int>(i)).locations[probe.active[i]];
        if (loc.invariant && eval_.eval(*loc.invariant, probe, static_cast<int>(i)) == 0) {
          invariants_ok = false;
          break;
        }
      }
      if (!invariants_ok) {
        plan.max_delay = d - 1;
        break;
      }
      if (plan.first_enable < 0 && !enabled_units(probe, false).empty()) {
        plan.first_enable = d;
        // keep scanning only to find the invariant bound; cap the extra work
        if (plan.max_delay >= 0) break;
      }
      if (plan.first_enable >= 0 && d >= plan.first_enable + 64) break; // bound known far enough
    }
    return plan;
  }

  int64_t sample_delay(DelayPlan& plan, Rng& rng, int64_t remaining) {
    if (plan.first_enable < 0) {
      // nothing will enable: run out the clock (or hit the invariant wall)
      if (plan.max_delay >= 0) return plan.max_delay > 0 ? plan.max_delay : 0;
      return remaining;
    }
    if (plan.max_delay >= 0) {
      // bounded wait: uniform departure within [first_enable, max_delay]
      int64_t hi = std::max(plan.max_delay, plan.first_enable);
      return rng.range(plan.first_enable, hi);
    }
    // unbounded wait: exponential tail past the first enabling
    double u = rng.uniform();
    while (u <= 0) u = rng.uniform();
    int64_t extra = static_cast<int64_t>(std::floor(-std::log(u) / plan.rate));
    return std::min(plan.first_enable + extra, remaining);
  }

  std::shared_ptr<const CheckedModel> cm_;
  Evaluator eval_;
  std::vector<int> automaton_of_;
  MachineState initial_;
  std::vector<std::vector<LocEdges>> edge_index_;
};

// ---------------------------------------------------------------------------
// Probability estimation and simulation queries
// ---------------------------------------------------------------------------

struct Estimate {
  double point = 0;
  double epsilon = 0;
  double alpha = 0;
  int64_t runs_used = 0;
  enum class StoppingRule { Sequential, ChernoffCap } rule = StoppingRule::Sequential;

  double lo() const { return std::max(0.0, point - epsilon); }
  double hi() const { return std::min(1.0, point + epsilon); }
};

struct SimStats {
  std::vector<SampleStats> per_monitor;
  int64_t runs = 0;
};

struct SmcOptions {
  int threads = 1;
  std::atomic<bool>* cancel = nullptr;
  std::chrono::steady_clock::time_point deadline{}; // zero = none
  bool has_deadline = false;
  int64_t min_runs = 30;
  const MachineState* initial = nullptr; // optional pre-bound initial state
};

namespace detail {

inline void check_cancelled(const SmcOptions& opts) {
  if (opts.cancel && opts.cancel->load())
    throw Error(Error::Kind::Cancelled, "verification cancelled");
  if (opts.has_deadline && std::chrono::steady_clock::now() > opts.deadline)
    throw Error(Error::Kind::Cancelled, "verification budget exceeded");
}

/// Runs `count` simulations indexed [first, first+count) across a worker
/// pool; results land in order so sequential stopping is deterministic.
template <typename RunFn>
void run_block(std::shared_ptr<const CheckedModel> cm, const SmcOptions& opts, int64_t first,
               int64_t count, RunFn&& fn) {
  if (opts.threads <= 1 || count <= 4) {
    StochasticRunner runner(cm, opts.initial);
    for (int64_t i = 0; i < count; ++i) fn(first + i, runner);
    return;
  }
  std::atomic<int64_t> next{0};
  std::vector<std::thread> pool;
  int n_threads = std::min<int64_t>(opts.threads, count);
  for (int t = 0; t < n_threads; ++t) {
    pool.emplace_back([&, t] {
      StochasticRunner runner(cm, opts.initial);
      for (;;) {
        int64_t i = next.fetch_add(1);
        if (i >= count) return;
        fn(first + i, runner);
      }
    });
  }
  for (auto& th : pool) th.join();
}

} // namespace detail

/// Estimates Pr[<=bound](<> predicate) with the sequential Wilson rule,
/// capped by the Chernoff-Hoeffding bound.
inline Estimate estimate_probability(std::shared_ptr<const CheckedModel> cm, const Query& q,
                                     double epsilon, double alpha, uint64_t seed,
                                     const SmcOptions& opts = {}) {
  if (q.kind != Query::Kind::ProbabilityEstimation)
    throw Error(Error::Kind::DomainError, "query is not a probability estimation");
  int64_t cap = required_runs_chernoff(epsilon, alpha);
  Estimate est;
  est.epsilon = epsilon;
  est.alpha = alpha;

  int64_t runs = 0, successes = 0;
  const int64_t block = opts.threads > 1 ? std::max(64, opts.threads * 16) : 32;
  std::vector<char> results;
  while (runs < cap) {
    detail::check_cancelled(opts);
    int64_t count = std::min<int64_t>(block, cap - runs);
    results.assign(static_cast<size_t>(count), 0);
    detail::run_block(cm, opts, runs, count, [&](int64_t idx, StochasticRunner& runner) {
      auto r = runner.run(mix_seed(seed, static_cast<uint64_t>(idx)), q.time_bound,
                          q.predicate.get(), {});
      results[static_cast<size_t>(idx - runs)] = r.predicate_hit ? 1 : 0;
    });
    bool stopped = false;
    for (int64_t i = 0; i < count; ++i) {
      successes += results[static_cast<size_t>(i)];
      ++runs;
      if (runs >= opts.min_runs) {
        WilsonInterval w = wilson_interval(successes, runs, alpha);
        if (w.width() < 2 * epsilon) {
          est.rule = Estimate::StoppingRule::Sequential;
          stopped = true;
          break;
        }
      }
    }
    if (stopped) break;
    if (runs >= cap) est.rule = Estimate::StoppingRule::ChernoffCap;
  }
  est.runs_used = runs;
  est.point = runs > 0 ? static_cast<double>(successes) / static_cast<double>(runs) : 0;
  return est;
}

/// Runs a fixed number of bounded simulations and reports per-monitor stats.
/// run count: explicit override, else the query's N.
inline SimStats run_simulation_query(std::shared_ptr<const CheckedModel> cm, const Query& q,
                                     uint64_t seed, int64_t runs_override = 0,
                                     const SmcOptions& opts = {}) {
  if (q.kind != Query::Kind::Simulation)
    throw Error(Error::Kind::DomainError, "query is not a simulation");
  int64_t runs = runs_override > 0 ? runs_override : q.runs;
  std::vector<const Expr*> monitors;
  for (const auto& m : q.monitors) monitors.push_back(m.get());
  std::vector<std::vector<double>> samples(monitors.size(),
                                           std::vector<double>(static_cast<size_t>(runs)));
  detail::check_cancelled(opts);
  detail::run_block(cm, opts, 0, runs, [&](int64_t idx, StochasticRunner& runner) {
    auto r = runner.run(mix_seed(seed, static_cast<uint64_t>(idx)), q.time_bound, nullptr, monitors);
    for (size_t m = 0; m < monitors.size(); ++m)
      samples[m][static_cast<size_t>(idx)] = static_cast<double>(r.monitors[m]);
  });
  SimStats stats;
  stats.runs = runs;
  for (auto& s : samples) stats.per_monitor.push_back(compute_sample_stats(s));
  return stats;
}

} // namespace activforms
