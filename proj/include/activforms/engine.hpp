#pragma once

#include <atomic>
#include <chrono>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "activforms/eval.hpp"
#include "activforms/rng.hpp"

namespace activforms {

struct ExecutionConfig {
  enum class TieBreak { DeclarationOrder, SeededUniform };
  int64_t real_time_unit_millis = 1000;
  uint64_t seed = 0;
  TieBreak tie_break = TieBreak::DeclarationOrder;

  ExecutionConfig() = default;
};

struct ExternalPort {
  enum class Direction { IntoModel, OutOfModel };
  std::string channel;                 // flattened channel name
  Direction direction;
  std::vector<std::string> payload;    // qualified leaf variable names
};

using PayloadMap = std::map<std::string, int64_t>;

struct StepReport {
  enum class Kind { Idle, Internal, Sync, Injected, Delay, Halted, Error };
  Kind kind = Kind::Idle;
  int instance = -1;
  int edge = -1;      // edge index within the acting automaton
  int channel = -1;
  std::vector<std::pair<int, int>> receivers; // (instance, edge)
  int64_t time = 0;
  std::string error;

  bool operator==(const StepReport& o) const {
    return kind == o.kind && instance == o.instance && edge == o.edge && channel == o.channel &&
           receivers == o.receivers && time == o.time && error == o.error;
  }
};

/// Snapshot of a running instance, used by the update manager.
struct RuntimeState {
  MachineState machine;
  bool valid = false;
};

struct StateTransferReport {
  std::vector<std::string> transferred;
  std::vector<std::string> initialized; // new variables
  std::vector<std::string> dropped;     // old variables without a counterpart
};

/// Direct executor for a checked network of timed automata.
class EngineInstance {
public:
  EngineInstance(std::shared_ptr<const CheckedModel> model, ExecutionConfig cfg)
      : cm_(std::move(model)), cfg_(cfg), rng_(cfg.seed), eval_(*cm_) {
    if (!cm_->ok())
      throw Error(Error::Kind::LoadError, "model has diagnostics:\n" + join_diagnostics(cm_->diagnostics));
    const ModelNetwork& n = *cm_->network;
    for (const auto& inst : n.instances) {
      const Automaton* a = n.find_automaton(inst.automaton_name);
      int ai = automaton_index(n, inst.automaton_name);
      if (!a || a->initial < 0)
        throw Error(Error::Kind::LoadError,
                    "automaton '" + inst.automaton_name + "' has no initial location");
      automaton_of_instance_.push_back(ai);
    }
    build_initial_state();
    build_leaf_table();
  }

  const CheckedModel& model() const { return *cm_; }
  const MachineState& state() const { return state_; }
  MachineState& mutable_state() { return state_; }
  int64_t logical_time() const { return state_.logical_time; }
  bool halted() const { return halted_; }
  const std::string& error() const { return error_; }
  const std::vector<int>& automaton_of_instance() const { return automaton_of_instance_; }

  // -- external ports ---------------------------------------------------------

  struct Subscription {
    int channel = -1;
    int handler_index = -1;
  };

  using Handler = std::function<void(const PayloadMap&)>;

  Subscription bind_external_port(const ExternalPort& port, Handler handler = {}) {
    int ch = cm_->find_channel(port.channel);
    if (ch < 0) throw Error(Error::Kind::UnknownChannel, "unknown channel '" + port.channel + "'");
    if (!cm_->channels[ch].broadcast)
      throw Error(Error::Kind::SchemaMismatch,
                  "external ports require broadcast channels ('" + port.channel + "' is binary)");
    for (const auto& name : port.payload)
      if (!leaf_table_.count(name))
        throw Error(Error::Kind::SchemaMismatch, "unknown payload variable '" + name + "'");
    Subscription sub;
    sub.channel = ch;
    if (port.direction == ExternalPort::Direction::OutOfModel) {
      out_ports_[ch].push_back({port.payload, std::move(handler)});
      sub.handler_index = static_cast<int>(out_ports_[ch].size() - 1);
    } else {
      in_ports_[ch] = port.payload;
    }
    return sub;
  }

  /// Thread-safe external signal injection; never blocks, FIFO per channel.
  void inject(const std::string& channel, const PayloadMap& payload = {}) {
    int ch = cm_->find_channel(channel);
    if (ch < 0) throw Error(Error::Kind::UnknownChannel, "unknown channel '" + channel + "'");
    for (const auto& [name, _] : payload)
      if (!leaf_table_.count(name))
        throw Error(Error::Kind::SchemaMismatch, "unknown payload variable '" + name + "'");
    std::lock_guard<std::mutex> lock(inject_mutex_);
    injections_.push_back({ch, payload});
  }

  size_t pending_injections() const {
    std::lock_guard<std::mutex> lock(inject_mutex_);
    return injections_.size();
  }

  std::deque<std::pair<std::string, PayloadMap>> drain_pending_injections() {
    std::lock_guard<std::mutex> lock(inject_mutex_);
    std::deque<std::pair<std::string, PayloadMap>> out;
    for (auto& inj : injections_) out.emplace_back(cm_->channels[inj.channel].name, inj.payload);
    injections_.clear();
    return out;
  }

  // -- stepping ----------------------------------------------------------------

  StepReport micro_step() {
    if (halted_) return report(StepReport::Kind::Halted);
    StepReport rep;
    try {
      rep = micro_step_inner();
    } catch (const Error& e) {
      halted_ = true;
      error_ = e.what();
      rep = report(StepReport::Kind::Error);
      rep.error = error_;
    }
    if (trace_enabled_) trace_.push_back(rep);
    return rep;
  }

  /// Runs action transitions (and injections) until only delay or idle
  /// remains. Returns the number of steps taken.
  int settle(int max_steps = 1'000'000) {
    int steps = 0;
    while (steps < max_steps) {
      StepReport r = micro_step_action_only();
      if (r.kind == StepReport::Kind::Idle || r.kind == StepReport::Kind::Halted) break;
      if (trace_enabled_) trace_.push_back(r);
      ++steps;
      if (r.kind == StepReport::Kind::Error) break;
    }
    return steps;
  }

  /// Virtual-time run: alternates settle and logical ticks until the
  /// predicate holds or the step budget is exhausted.
  bool run_until(const std::function<bool()>& done, int max_ticks = 1'000'000) {
    for (int t = 0; t < max_ticks; ++t) {
      settle();
      if (done()) return true;
      if (halted_) return false;
      StepReport r = micro_step(); // delay (or newly enabled action)
      if (r.kind == StepReport::Kind::Idle || r.kind == StepReport::Kind::Halted ||
          r.kind == StepReport::Kind::Error)
        return done();
    }
    return done();
  }

  /// Wall-clock execution: one logical tick per real_time_unit_millis.
  /// Runs on the calling thread until halt() or the model halts.
  void run_realtime() {
    stop_requested_ = false;
    while (!stop_requested_ && !halted_) {
      settle();
      if (stop_requested_ || halted_) break;
      auto wake = std::chrono::steady_clock::now() +
                  std::chrono::milliseconds(cfg_.real_time_unit_millis);
      while (std::chrono::steady_clock::now() < wake) {
        if (stop_requested_) return;
        if (pending_injections() > 0) break; // react promptly to external input
        std::this_thread::sleep_for(std::chrono::milliseconds(1));
      }
      if (pending_injections() > 0) continue;
      micro_step(); // delay tick
    }
  }

  void halt() { stop_requested_ = true; }
  void resume_from_halt() {
    stop_requested_ = false;
    if (!halted_) return;
    // only explicit halts are resumable; errors are sticky
    if (error_.empty()) halted_ = false;
  }

  void enable_trace(bool on) { trace_enabled_ = on; }
  const std::vector<StepReport>& trace() const { return trace_; }
  void clear_trace() { trace_.clear(); }

  // -- snapshot / restore -------------------------------------------------------

  RuntimeState snapshot_state() const { return {state_, true}; }

  /// Builds a new engine for `new_model`, transferring variables that match by
  /// fully qualified name and scalar type. Locations transfer by name.
  static std::unique_ptr<EngineInstance> restore_state(const RuntimeState& snap,
                                                       const EngineInstance& old_engine,
                                                       std::shared_ptr<const CheckedModel> new_model,
                                                       ExecutionConfig cfg,
                                                       StateTransferReport* report = nullptr) {
    auto next = std::make_unique<EngineInstance>(std::move(new_model), cfg);
    const auto& old_leaves = old_engine.leaf_table_;
    StateTransferReport local;
    StateTransferReport& rep = report ? *report : local;
    for (const auto& [name, ref] : next->leaf_table_) {
      auto it = old_leaves.find(name);
      if (it == old_leaves.end()) {
        rep.initialized.push_back(name);
        continue;
      }
      if (!ref.type->same_scalar_kind(*it->second.type))
        throw Error(Error::Kind::TypeMismatch,
                    "variable '" + name + "' changed type between models");
      int64_t v = old_engine.read_leaf(it->second, snap.machine);
      if (ref.type->kind == TypeRef::Kind::RangedInt && (v < ref.type->lo || v > ref.type->hi))
        throw Error(Error::Kind::TypeMismatch,
                    "variable '" + name + "' value " + std::to_string(v) +
                        " does not fit the new range");
      next->write_leaf(ref, next->state_, v);
      rep.transferred.push_back(name);
    }
    for (const auto& [name, ref] : old_leaves)
      if (!next->leaf_table_.count(name)) rep.dropped.push_back(name);
    // transfer active locations by name where they exist
    const ModelNetwork& new_net = *next->cm_->network;
    const ModelNetwork& old_net = *old_engine.cm_->network;
    for (size_t i = 0; i < new_net.instances.size(); ++i) {
      int old_inst = old_net.instance_index(new_net.instances[i].instance_name);
      if (old_inst < 0) continue;
      const Automaton& old_a =
          old_net.automata[old_engine.automaton_of_instance_[old_inst]];
      const Automaton& new_a = new_net.automata[next->automaton_of_instance_[i]];
      const std::string& loc_name =
          old_a.locations[snap.machine.active[old_inst]].name;
      int li = new_a.location_index(loc_name);
      if (li >= 0) next->state_.active[i] = li;
    }
    next->state_.logical_time = snap.machine.logical_time;
    return next;
  }

  // -- introspection -------------------------------------------------------------

  struct LeafRef {
    StoreKind store;
    int instance;
    int slot;
    TypePtr type;
  };

  const std::map<std::string, LeafRef>& leaf_table() const { return leaf_table_; }

  int64_t read_variable(const std::string& qualified) const {
    auto it = leaf_table_.find(qualified);
    if (it == leaf_table_.end())
      throw Error(Error::Kind::SchemaMismatch, "unknown variable '" + qualified + "'");
    return read_leaf(it->second, state_);
  }

  void write_variable(const std::string& qualified, int64_t v) {
    auto it = leaf_table_.find(qualified);
    if (it == leaf_table_.end())
      throw Error(Error::Kind::SchemaMismatch, "unknown variable '" + qualified + "'");
    write_leaf(it->second, state_, v);
  }

  /// Name of the active location of an instance.
  const std::string& active_location(const std::string& instance) const {
    int idx = cm_->network->instance_index(instance);
    if (idx < 0) throw Error(Error::Kind::SchemaMismatch, "unknown instance '" + instance + "'");
    const Automaton& a = cm_->network->automata[automaton_of_instance_[idx]];
    return a.locations[state_.active[idx]].name;
  }

  bool any_committed_active() const {
    for (size_t i = 0; i < state_.active.size(); ++i) {
      const Automaton& a = cm_->network->automata[automaton_of_instance_[i]];
      if (a.locations[state_.active[i]].kind == LocationKind::Committed) return true;
    }
    return false;
  }

  bool evaluate_predicate(const Expr& e) {
    return eval_.eval(e, state_, -1) != 0;
  }

  // -- trace replay (counterexample validation) ---------------------------------

  /// Fires a specific edge regardless of scheduling priorities; the guard is
  /// still checked. Returns false when the transition is not enabled.
  bool force_fire(int instance, int edge,
                  const std::vector<std::pair<int, int>>& receivers = {}) {
    const Automaton& a = automaton_of(instance);
    if (edge < 0 || edge >= static_cast<int>(a.edges.size())) return false;
    const Edge& e = a.edges[edge];
    if (state_.active[instance] != e.source || !guard_holds(instance, e)) return false;
    bool handlers = false;
    int ch = -1;
    if (!fire_edge(instance, edge, handlers, &ch)) return false;
    for (const auto& [ri, redge] : receivers) {
      bool dummy = false;
      if (!fire_edge(ri, redge, dummy, nullptr)) return false;
    }
    if (handlers && ch >= 0) run_out_handlers(ch);
    return true;
  }

  /// Advances clocks one tick without the deadlock/invariant halt, optionally
  /// capping values (digital-clock replay). Returns whether invariants hold.
  bool force_delay(int64_t cap = -1) {
    auto tick = [cap](int64_t v) {
      int64_t next = v + 1;
      return cap > 0 ? std::min(next, cap) : next;
    };
    for (int slot : cm_->global_clock_slots) state_.globals[slot] = tick(state_.globals[slot]);
    for (size_t i = 0; i < state_.instance_stores.size(); ++i)
      for (int slot : cm_->automaton_layouts[automaton_of_instance_[i]].clock_slots)
        state_.instance_stores[i][slot] = tick(state_.instance_stores[i][slot]);
    state_.logical_time += 1;
    for (size_t i = 0; i < state_.active.size(); ++i) {
      const Automaton& a = automaton_of(static_cast<int>(i));
      const Location& loc = a.locations[state_.active[i]];
      if (loc.invariant && eval_.eval(*loc.invariant, state_, static_cast<int>(i)) == 0)
        return false;
    }
    return true;
  }

private:
  struct Injection {
    int channel;
    PayloadMap payload;
  };

  struct OutPort {
    std::vector<std::string> payload;
    Handler handler;
  };

  static int automaton_index(const ModelNetwork& n, const std::string& name) {
    for (size_t i = 0; i < n.automata.size(); ++i)
      if (n.automata[i].name == name) return static_cast<int>(i);
    return -1;
  }

  void build_initial_state() {
    const ModelNetwork& n = *cm_->network;
    state_.globals.assign(cm_->global_width, 0);
    state_.instance_stores.resize(n.instances.size());
    state_.active.resize(n.instances.size());
    // globals first, in declaration order
    for (const auto& sym : cm_->symbols) {
      if (sym.kind == Symbol::Kind::Variable && sym.store == StoreKind::Global)
        eval_.init_var(sym, state_, -1, state_.globals);
    }
    for (size_t i = 0; i < n.instances.size(); ++i) {
      int ai = automaton_of_instance_[i];
      const Automaton& a = n.automata[ai];
      state_.instance_stores[i].assign(cm_->automaton_layouts[ai].instance_width, 0);
      state_.active[i] = a.initial;
      // parameters from instance arguments
      size_t param_idx = 0;
      for (const auto& sym : cm_->symbols) {
        if (sym.kind != Symbol::Kind::Variable || sym.store != StoreKind::Instance ||
            sym.automaton != ai)
          continue;
        if (param_idx < a.params.size() && sym.decl == &a.params[param_idx]) {
          int64_t v = eval_.eval(*n.instances[i].args[param_idx], state_, -1);
          state_.instance_stores[i][sym.slot] = v;
          ++param_idx;
        } else {
          eval_.init_var(sym, state_, static_cast<int>(i), state_.instance_stores[i]);
        }
      }
    }
  }

  void build_leaf_table() {
    const ModelNetwork& n = *cm_->network;
    for (const auto& leaf : cm_->global_leaves)
      leaf_table_[leaf.qualified_name] = {StoreKind::Global, -1, leaf.slot, leaf.type};
    for (size_t i = 0; i < n.instances.size(); ++i) {
      int ai = automaton_of_instance_[i];
      for (const auto& leaf : cm_->automaton_layouts[ai].leaves)
        leaf_table_[n.instances[i].instance_name + "." + leaf.qualified_name] =
            {StoreKind::Instance, static_cast<int>(i), leaf.slot, leaf.type};
    }
  }

  int64_t read_leaf(const LeafRef& ref, const MachineState& st) const {
    return ref.store == StoreKind::Global ? st.globals[ref.slot]
                                          : st.instance_stores[ref.instance][ref.slot];
  }

  void write_leaf(const LeafRef& ref, MachineState& st, int64_t v) {
    if (ref.type->kind == TypeRef::Kind::RangedInt && (v < ref.type->lo || v > ref.type->hi))
      throw Error(Error::Kind::RangeViolation,
                  "value " + std::to_string(v) + " out of range for injected variable");
    if (ref.store == StoreKind::Global) st.globals[ref.slot] = v;
    else st.instance_stores[ref.instance][ref.slot] = v;
  }

  StepReport report(StepReport::Kind k) {
    StepReport r;
    r.kind = k;
    r.time = state_.logical_time;
    return r;
  }

  // -- transition machinery ------------------------------------------------------

  struct EdgeRef {
    int instance;
    int edge;
  };

  const Automaton& automaton_of(int instance) const {
    return cm_->network->automata[automaton_of_instance_[instance]];
  }

  bool guard_holds(int instance, const Edge& e) {
    if (!e.guard) return true;
    try {
      return eval_.eval(*e.guard, state_, instance) != 0;
    } catch (const Error&) {
      return false; // guard errors disable the edge; surfaced via eval tests
    }
  }

  int channel_id_of(int instance, const SyncLabel& sync) {
    // resolve flattened channel id; index evaluated dynamically
    const std::string& name = sync.channel;
    int base = -1;
    int count = 0;
    for (const auto& s : cm_->symbols) {
      if (s.kind == Symbol::Kind::Channel && s.name == name) {
        base = s.channel_base;
        count = s.channel_count;
        break;
      }
    }
    if (base < 0) throw Error(Error::Kind::UnknownChannel, "unknown channel '" + name + "'");
    if (!sync.index) return base;
    int64_t idx = eval_.eval(*sync.index, state_, instance);
    if (idx < 0 || idx >= count)
      throw Error(Error::Kind::ArrayIndexOutOfBounds, "channel index out of range");
    return base + static_cast<int>(idx);
  }

  std::vector<int> enabled_edges_from(int instance, SyncKind kind, int channel = -1) {
    std::vector<int> out;
    const Automaton& a = automaton_of(instance);
    int loc = state_.active[instance];
    for (size_t ei = 0; ei < a.edges.size(); ++ei) {
      const Edge& e = a.edges[ei];
      if (e.source != loc || e.sync.kind != kind) continue;
      if (kind != SyncKind::None && channel >= 0) {
        int ch;
        try {
          ch = channel_id_of(instance, e.sync);
        } catch (const Error&) {
          continue;
        }
        if (ch != channel) continue;
      }
      if (guard_holds(instance, e)) out.push_back(static_cast<int>(ei));
    }
    return out;
  }

  /// Fires one edge: runs updates, checks the target invariant, moves the
  /// active location. Returns false when the target invariant rejects it.
  bool fire_edge(int instance, int edge_idx, bool& handlers_pending, int* out_channel) {
    const Automaton& a = automaton_of(instance);
    const Edge& e = a.edges[edge_idx];
    const Location& target = a.locations[e.target];
    handlers_pending = e.sync.kind == SyncKind::Send;
    if (out_channel && e.sync.kind == SyncKind::Send)
      *out_channel = channel_id_of(instance, e.sync); // channel index reads the pre-update state
    if (target.invariant) {
      MachineState speculative = state_;
      std::swap(state_, speculative);
      bool ok = true;
      try {
        eval_.run_updates(e.updates, state_, instance);
        state_.active[instance] = e.target;
        ok = eval_.eval(*target.invariant, state_, instance) != 0;
      } catch (const Error&) {
        ok = false;
      }
      if (!ok) {
        std::swap(state_, speculative); // roll back
        return false;
      }
      return true;
    }
    eval_.run_updates(e.updates, state_, instance);
    state_.active[instance] = e.target;
    return true;
  }

  /// Picks an edge among enabled candidates honoring branch weights.
  int choose_edge(int instance, const std::vector<int>& candidates) {
    const Automaton& a = automaton_of(instance);
    if (candidates.size() == 1) return candidates[0];
    bool weighted = a.edges[candidates[0]].weight != nullptr;
    if (weighted) {
      std::vector<int64_t> w;
      for (int ei : candidates) {
        int64_t v = eval_.eval(*a.edges[ei].weight, state_, instance);
        if (v < 0) throw Error(Error::Kind::RangeViolation, "negative branch weight");
        w.push_back(v);
      }
      int64_t total = 0;
      for (int64_t v : w) total += v;
      if (total <= 0) throw Error(Error::Kind::RangeViolation, "branch weights sum to zero");
      return candidates[rng_.weighted(w.data(), w.size())];
    }
    if (cfg_.tie_break == ExecutionConfig::TieBreak::SeededUniform)
      return candidates[rng_.below(candidates.size())];
    return candidates[0];
  }

  int choose_index(size_t n) {
    if (n <= 1) return 0;
    if (cfg_.tie_break == ExecutionConfig::TieBreak::SeededUniform)
      return static_cast<int>(rng_.below(n));
    return 0;
  }

  void run_out_handlers(int channel) {
    auto it = out_ports_.find(channel);
    if (it == out_ports_.end()) return;
    for (const auto& port : it->second) {
      if (!port.handler) continue;
      PayloadMap payload;
      for (const auto& name : port.payload) payload[name] = read_variable(name);
      port.handler(payload);
    }
  }

  struct SyncGroup {
    int sender_instance;
    int sender_edge;
    int channel;
    bool broadcast;
    std::vector<std::pair<int, int>> receivers; // (instance, edge); binary keeps exactly one
  };

  /// Collects firable sync groups. committed_only restricts to groups
  /// involving at least one committed participant.
  std::vector<SyncGroup> collect_syncs(bool committed_only) {
    std::vector<SyncGroup> groups;
    const ModelNetwork& n = *cm_->network;
    for (size_t si = 0; si < n.instances.size(); ++si) {
      const Automaton& a = automaton_of(static_cast<int>(si));
      int loc = state_.active[si];
      for (size_t ei = 0; ei < a.edges.size(); ++ei) {
        const Edge& e = a.edges[ei];
        if (e.source != loc || e.sync.kind != SyncKind::Send) continue;
        if (!guard_holds(static_cast<int>(si), e)) continue;
        int ch;
        try {
          ch = channel_id_of(static_cast<int>(si), e.sync);
        } catch (const Error&) {
          continue;
        }
        bool broadcast = cm_->channels[ch].broadcast;
        std::vector<std::pair<int, int>> receivers;
        for (size_t ri = 0; ri < n.instances.size(); ++ri) {
          if (ri == si) continue;
          for (int redge : enabled_edges_from(static_cast<int>(ri), SyncKind::Receive, ch))
            receivers.emplace_back(static_cast<int>(ri), redge);
        }
        if (!broadcast && receivers.empty()) continue; // binary sender blocks
        bool committed_involved = is_committed(static_cast<int>(si));
        if (!committed_involved)
          for (const auto& [ri, redge] : receivers)
            if (is_committed(ri)) committed_involved = true;
        if (committed_only && !committed_involved) continue;
        if (!broadcast) {
          // one group per receiver choice would explode; keep receivers and
          // choose at fire time by tie-break
          groups.push_back({static_cast<int>(si), static_cast<int>(ei), ch, false, receivers});
        } else {
          groups.push_back({static_cast<int>(si), static_cast<int>(ei), ch, true, receivers});
        }
      }
    }
    return groups;
  }

  bool is_committed(int instance) const {
    const Automaton& a = automaton_of(instance);
    return a.locations[state_.active[instance]].kind == LocationKind::Committed;
  }
  bool is_urgent_or_committed(int instance) const {
    const Automaton& a = automaton_of(instance);
    auto k = a.locations[state_.active[instance]].kind;
    return k == LocationKind::Committed || k == LocationKind::Urgent;
  }

  StepReport fire_sync_group(const SyncGroup& g) {
    StepReport rep = report(StepReport::Kind::Sync);
    rep.instance = g.sender_instance;
    rep.edge = g.sender_edge;
    rep.channel = g.channel;
    bool handlers = false;
    int ch = -1;
    if (!fire_edge(g.sender_instance, g.sender_edge, handlers, &ch)) {
      rep.kind = StepReport::Kind::Error;
      rep.error = "sender target invariant rejected the transition";
      return rep;
    }
    if (g.broadcast) {
      // all enabled receivers fire, re-validated against the post-send state
      for (const auto& [ri, redge] : g.receivers) {
        const Automaton& a = automaton_of(ri);
        const Edge& e = a.edges[redge];
        if (state_.active[ri] != e.source || !guard_holds(ri, e)) continue;
        bool dummy = false;
        if (fire_edge(ri, redge, dummy, nullptr)) rep.receivers.emplace_back(ri, redge);
      }
    } else {
      int pick = choose_index(g.receivers.size());
      auto [ri, redge] = g.receivers[pick];
      bool dummy = false;
      if (!fire_edge(ri, redge, dummy, nullptr)) {
        rep.kind = StepReport::Kind::Error;
        rep.error = "receiver target invariant rejected the transition";
        return rep;
      }
      rep.receivers.emplace_back(ri, redge);
    }
    if (handlers) run_out_handlers(ch);
    return rep;
  }

  /// Delivers the oldest injectable signal; returns false when none applies.
  bool try_deliver_injection(StepReport& rep) {
    std::lock_guard<std::mutex> lock(inject_mutex_);
    for (size_t qi = 0; qi < injections_.size(); ++qi) {
      int ch = injections_[qi].channel;
      // per-channel FIFO: skip if an older injection on the same channel exists
      bool older = false;
      for (size_t qj = 0; qj < qi; ++qj)
        if (injections_[qj].channel == ch) older = true;
      if (older) continue;
      std::vector<std::pair<int, int>> receivers;
      for (size_t ri = 0; ri < cm_->network->instances.size(); ++ri)
        for (int redge : enabled_edges_from(static_cast<int>(ri), SyncKind::Receive, ch))
          receivers.emplace_back(static_cast<int>(ri), redge);
      if (receivers.empty()) continue;
      // write payload then fire all enabled receivers (external broadcast)
      for (const auto& [name, value] : injections_[qi].payload)
        write_variable(name, value);
      rep = report(StepReport::Kind::Injected);
      rep.channel = ch;
      for (const auto& [ri, redge] : receivers) {
        const Automaton& a = automaton_of(ri);
        const Edge& e = a.edges[redge];
        if (state_.active[ri] != e.source || !guard_holds(ri, e)) continue;
        bool dummy = false;
        if (fire_edge(ri, redge, dummy, nullptr)) rep.receivers.emplace_back(ri, redge);
      }
      injections_.erase(injections_.begin() + static_cast<long>(qi));
      return true;
    }
    return false;
  }

  StepReport micro_step_action_only() {
    if (halted_) return report(StepReport::Kind::Halted);
    try {
      bool committed = any_committed_active();
      if (committed) {
        StepReport r;
        if (committed_action(r)) return r;
        // a committed location with nothing enabled is stuck: deadlock signal
        halted_ = true;
        error_ = "committed location with no enabled transition";
        StepReport rep = report(StepReport::Kind::Error);
        rep.error = error_;
        return rep;
      }
      StepReport r;
      if (try_deliver_injection(r)) return r;
      auto groups = collect_syncs(false);
      if (!groups.empty()) {
        int pick = choose_index(groups.size());
        return fire_sync_group(groups[pick]);
      }
      // internal transitions
      std::vector<EdgeRef> internals = enabled_internal_edges(false);
      if (!internals.empty()) return fire_internal(internals);
      return report(StepReport::Kind::Idle);
    } catch (const Error& e) {
      halted_ = true;
      error_ = e.what();
      StepReport rep = report(StepReport::Kind::Error);
      rep.error = error_;
      return rep;
    }
  }

  bool committed_action(StepReport& out) {
    auto groups = collect_syncs(true);
    if (!groups.empty()) {
      int pick = choose_index(groups.size());
      out = fire_sync_group(groups[pick]);
      return true;
    }
    std::vector<EdgeRef> internals = enabled_internal_edges(true);
    if (!internals.empty()) {
      out = fire_internal(internals);
      return true;
    }
    return false;
  }

  std::vector<EdgeRef> enabled_internal_edges(bool committed_only) {
    std::vector<EdgeRef> out;
    for (size_t i = 0; i < cm_->network->instances.size(); ++i) {
      if (committed_only && !is_committed(static_cast<int>(i))) continue;
      for (int ei : enabled_edges_from(static_cast<int>(i), SyncKind::None))
        out.push_back({static_cast<int>(i), ei});
    }
    return out;
  }

  StepReport fire_internal(const std::vector<EdgeRef>& internals) {
    // group candidates by instance so that weighted branch sets stay together
    std::vector<int> instances;
    for (const auto& er : internals)
      if (instances.empty() || instances.back() != er.instance) instances.push_back(er.instance);
    int inst = instances[choose_index(instances.size())];
    std::vector<int> edges;
    for (const auto& er : internals)
      if (er.instance == inst) edges.push_back(er.edge);
    int edge = choose_edge(inst, edges);
    StepReport rep = report(StepReport::Kind::Internal);
    rep.instance = inst;
    rep.edge = edge;
    bool handlers = false;
    if (!fire_edge(inst, edge, handlers, nullptr)) {
      // target invariant rejected; try remaining candidates deterministically
      for (int other : edges) {
        if (other == edge) continue;
        if (fire_edge(inst, other, handlers, nullptr)) {
          rep.edge = other;
          return rep;
        }
      }
      rep.kind = StepReport::Kind::Error;
      rep.error = "no internal transition could satisfy its target invariant";
      halted_ = true;
      this->error_ = rep.error;
    }
    return rep;
  }

  StepReport micro_step_inner() {
    StepReport r = micro_step_action_only();
    if (r.kind != StepReport::Kind::Idle) return r;
    // delay step
    if (cm_->network->instances.empty()) return report(StepReport::Kind::Idle);
    for (size_t i = 0; i < state_.active.size(); ++i) {
      if (is_urgent_or_committed(static_cast<int>(i))) {
        halted_ = true;
        error_ = "urgent location with no enabled transition (deadlock)";
        throw Error(Error::Kind::InvariantViolation, error_);
      }
    }
    // advance all clocks one logical tick
    for (int slot : cm_->global_clock_slots) state_.globals[slot] += 1;
    for (size_t i = 0; i < state_.instance_stores.size(); ++i)
      for (int slot : cm_->automaton_layouts[automaton_of_instance_[i]].clock_slots)
        state_.instance_stores[i][slot] += 1;
    state_.logical_time += 1;
    // invariants of all active locations must still hold
    for (size_t i = 0; i < state_.active.size(); ++i) {
      const Automaton& a = automaton_of(static_cast<int>(i));
      const Location& loc = a.locations[state_.active[i]];
      if (loc.invariant && eval_.eval(*loc.invariant, state_, static_cast<int>(i)) == 0) {
        halted_ = true;
        error_ = "invariant violation in " +
                 cm_->network->instances[i].instance_name + "." + loc.name +
                 " with no enabled transition";
        throw Error(Error::Kind::InvariantViolation, error_);
      }
    }
    StepReport rep = report(StepReport::Kind::Delay);
    return rep;
  }

  std::shared_ptr<const CheckedModel> cm_;
  ExecutionConfig cfg_;
  Rng rng_;
  Evaluator eval_;
  MachineState state_;
  std::vector<int> automaton_of_instance_;

  std::map<std::string, LeafRef> leaf_table_;
  std::map<int, std::vector<OutPort>> out_ports_;
  std::map<int, std::vector<std::string>> in_ports_;

  mutable std::mutex inject_mutex_;
  std::deque<Injection> injections_;

  bool halted_ = false;
  std::atomic<bool> stop_requested_ = false;
  std::string error_;
  bool trace_enabled_ = false;
  std::vector<StepReport> trace_;
};

/// Loads a checked model into a fresh engine.
inline std::unique_ptr<EngineInstance> load_model(std::shared_ptr<const CheckedModel> model,
                                                  ExecutionConfig cfg = {}) {
  return std::make_unique<EngineInstance>(std::move(model), cfg);
}

} // namespace activforms
