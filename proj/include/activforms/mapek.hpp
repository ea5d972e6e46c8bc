#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "activforms/deltaiot.hpp"
#include "activforms/smc.hpp"

namespace activforms::mapek {

// ---------------------------------------------------------------------------
// Knowledge
// ---------------------------------------------------------------------------

enum class Quality { PacketLoss, Energy, Latency };

inline const char* quality_name(Quality q) {
  switch (q) {
    case Quality::PacketLoss: return "packetLoss";
    case Quality::Energy: return "energyConsumption";
    case Quality::Latency: return "latency";
  }
  return "?";
}

struct KnowledgeConfiguration {
  deltaiot::Topology topology;
  deltaiot::Settings settings; // observed current settings
  struct Qualities {
    double packet_loss_pct = 0; // percent of generated packets
    double energy_coulomb = 0;  // per cycle
    double latency_pct = 0;     // percent of cycle time
  } qualities;
  std::vector<double> link_snr;      // measured dB per link
  std::vector<double> mote_ptraffic; // indexed by mote id
  std::vector<int64_t> mote_queue;   // queued packets per mote id
  bool observed = false;             // first sample not yet seen

  deltaiot::QualityInputs quality_inputs() const {
    deltaiot::QualityInputs in;
    in.link_snr = link_snr;
    in.mote_ptraffic = mote_ptraffic;
    in.mote_queue = mote_queue;
    return in;
  }
};

struct ProbeSample {
  std::vector<deltaiot::MoteDescriptor> motes;
  deltaiot::QoSRecord qos;
};

struct MonitorConfig {
  double snr_dead_band_db = 1.0;
  double ptraffic_dead_band = 0.05;
  double quality_epsilon = 1e-9;
};

struct UpdateOutcome {
  bool analysis_required = false;
  bool settings_drift = false;
  bool qualities_changed = false;
  bool uncertainties_changed = false;
};

/// Replaces knowledge with the latest observations; analysis is required when
/// settings drift from the last applied plan, qualities changed, or an
/// uncertainty moved beyond its dead-band.
inline UpdateOutcome update_knowledge(KnowledgeConfiguration& k, const ProbeSample& sample,
                                      const deltaiot::Settings* last_applied = nullptr,
                                      const MonitorConfig& cfg = {}) {
  const deltaiot::Topology& t = k.topology;
  KnowledgeConfiguration next = k;
  next.settings.assign(t.links.size(), {});
  next.link_snr.assign(t.links.size(), 0.0);
  next.mote_ptraffic.assign(static_cast<size_t>(t.mote_count) + 1, 0.0);
  next.mote_queue.assign(static_cast<size_t>(t.mote_count) + 1, 0);
  for (const auto& m : sample.motes) {
    if (m.id <= 1 || m.id > t.mote_count)
      throw Error(Error::Kind::SchemaMismatch, "probe sample names unknown mote " + std::to_string(m.id));
    next.mote_ptraffic[m.id] = m.ptraffic;
    next.mote_queue[m.id] = m.queue_length;
    for (const auto& lv : m.links) {
      int l = t.find_link(lv.source, lv.destination);
      if (l < 0)
        throw Error(Error::Kind::SchemaMismatch,
                    "probe sample names unknown link " + std::to_string(lv.source) + "->" +
                        std::to_string(lv.destination));
      next.settings[l] = {lv.power, lv.distribution};
      next.link_snr[l] = lv.snr;
    }
  }
  next.qualities.packet_loss_pct = sample.qos.packet_loss * 100.0;
  next.qualities.energy_coulomb = sample.qos.energy;
  next.qualities.latency_pct = sample.qos.latency * 100.0;
  next.observed = true;

  UpdateOutcome out;
  if (!k.observed) {
    out.analysis_required = true;
    out.settings_drift = true;
  } else {
    if (last_applied) {
      for (size_t l = 0; l < t.links.size(); ++l)
        if (next.settings[l].power != (*last_applied)[l].power ||
            next.settings[l].distribution != (*last_applied)[l].distribution)
          out.settings_drift = true;
    }
    auto changed = [&](double a, double b) { return std::fabs(a - b) > cfg.quality_epsilon; };
    if (changed(next.qualities.packet_loss_pct, k.qualities.packet_loss_pct) ||
        changed(next.qualities.energy_coulomb, k.qualities.energy_coulomb) ||
        changed(next.qualities.latency_pct, k.qualities.latency_pct))
      out.qualities_changed = true;
    for (size_t l = 0; l < t.links.size(); ++l)
      if (std::fabs(next.link_snr[l] - k.link_snr[l]) >= cfg.snr_dead_band_db)
        out.uncertainties_changed = true;
    for (int m = 2; m <= t.mote_count; ++m)
      if (std::fabs(next.mote_ptraffic[m] - k.mote_ptraffic[m]) >= cfg.ptraffic_dead_band)
        out.uncertainties_changed = true;
    out.analysis_required =
        out.settings_drift || out.qualities_changed || out.uncertainties_changed;
  }
  k = std::move(next);
  return out;
}

// ---------------------------------------------------------------------------
// Goals
// ---------------------------------------------------------------------------

struct AdaptationGoal {
  enum class Kind { Satisfaction, Optimization };
  Kind kind;
  Quality quality;
  double threshold = 0;                       // Satisfaction
  bool less_than = true;                      // comparator for Satisfaction
  bool minimize = true;                       // direction for Optimization
};

/// Parses the ordered goal configuration, e.g.
///   satisfaction packetLoss < 10
///   satisfaction latency < 5
///   optimize energyConsumption min
inline std::vector<AdaptationGoal> parse_goals(const std::string& text) {
  std::vector<AdaptationGoal> goals;
  std::istringstream in(text);
  std::string line;
  int optimization_count = 0;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string kind;
    if (!(ls >> kind) || kind[0] == '#') continue;
    AdaptationGoal g{};
    std::string qname;
    if (kind == "satisfaction") {
      std::string cmp;
      double threshold;
      if (!(ls >> qname >> cmp >> threshold))
        throw Error(Error::Kind::ConfigError, "bad satisfaction goal: " + line);
      g.kind = AdaptationGoal::Kind::Satisfaction;
      g.threshold = threshold;
      g.less_than = cmp == "<" || cmp == "<=";
    } else if (kind == "optimize") {
      std::string dir;
      if (!(ls >> qname >> dir))
        throw Error(Error::Kind::ConfigError, "bad optimization goal: " + line);
      g.kind = AdaptationGoal::Kind::Optimization;
      g.minimize = dir != "max";
      ++optimization_count;
    } else {
      throw Error(Error::Kind::ConfigError, "unknown goal kind: " + kind);
    }
    if (qname == "packetLoss") g.quality = Quality::PacketLoss;
    else if (qname == "energyConsumption") g.quality = Quality::Energy;
    else if (qname == "latency") g.quality = Quality::Latency;
    else throw Error(Error::Kind::ConfigError, "unknown quality: " + qname);
    goals.push_back(g);
  }
  if (optimization_count != 1)
    throw Error(Error::Kind::ConfigError, "exactly one optimization goal must be active");
  return goals;
}

inline bool goals_include(const std::vector<AdaptationGoal>& goals, Quality q) {
  for (const auto& g : goals)
    if (g.quality == q) return true;
  return false;
}

// ---------------------------------------------------------------------------
// Adaptation options
// ---------------------------------------------------------------------------

struct QualityEstimate {
  enum class Status { Pending, Verified, Skipped };
  Status status = Status::Pending;
  double value = 0;
};

struct AdaptationOption {
  deltaiot::Settings settings;
  QualityEstimate packet_loss; // percent
  QualityEstimate energy;      // coulomb per cycle
  QualityEstimate latency;     // percent

  const QualityEstimate& estimate(Quality q) const {
    switch (q) {
      case Quality::PacketLoss: return packet_loss;
      case Quality::Energy: return energy;
      case Quality::Latency: return latency;
    }
    return packet_loss;
  }
};

/// Minimal power so that the link-model SNR, corrected by the measured delta
/// at the current power, stays non-negative; clamped to 0..15.
inline int compute_power_setting(double alpha, double beta, double measured_snr,
                                 int current_power) {
  double delta = measured_snr - (alpha + beta * static_cast<double>(current_power));
  for (int p = 0; p <= 15; ++p) {
    if (alpha + beta * static_cast<double>(p) + delta >= 0) return p;
  }
  return 15;
}

/// All candidate configurations: per-link powers fixed by
/// compute_power_setting, distributions enumerated in 20% steps per
/// multi-parent mote (single-parent motes always send 100%).
inline std::vector<AdaptationOption> compose_adaptation_options(const KnowledgeConfiguration& k) {
  const deltaiot::Topology& t = k.topology;
  if (t.links.empty()) throw Error(Error::Kind::EmptyTopology, "no links to adapt");
  deltaiot::Settings base(t.links.size());
  for (size_t l = 0; l < t.links.size(); ++l) {
    base[l].power = compute_power_setting(t.links[l].snr_alpha, t.links[l].snr_beta,
                                          k.link_snr[l], k.settings[l].power);
    base[l].distribution = 100;
  }
  std::vector<int> multi = t.multi_parent_motes();
  static const int steps[] = {0, 20, 40, 60, 80, 100};
  std::vector<AdaptationOption> options;
  size_t total = 1;
  for (size_t i = 0; i < multi.size(); ++i) total *= 6;
  options.reserve(total);
  std::vector<int> idx(multi.size(), 0);
  for (;;) {
    AdaptationOption opt;
    opt.settings = base;
    for (size_t i = 0; i < multi.size(); ++i) {
      auto links = t.parent_links_of(multi[i]);
      opt.settings[links[0]].distribution = steps[idx[i]];
      opt.settings[links[1]].distribution = 100 - steps[idx[i]];
    }
    options.push_back(std::move(opt));
    size_t carry = 0;
    while (carry < idx.size()) {
      if (++idx[carry] < 6) break;
      idx[carry] = 0;
      ++carry;
    }
    if (carry == idx.size()) break;
    if (multi.empty()) break;
  }
  return options;
}

// ---------------------------------------------------------------------------
// Analyzer: verify options under a time budget
// ---------------------------------------------------------------------------

struct QualityModelSet {
  std::string packet_loss_text;
  std::string energy_text;
  std::string latency_text;

  static QualityModelSet generate(const deltaiot::Topology& t) {
    return {deltaiot::packet_loss_model_text(t), deltaiot::energy_model_text(t),
            deltaiot::latency_model_text(t)};
  }
};

struct AnalysisConfig {
  double epsilon = 0.02;
  double alpha = 0.10;
  int64_t sim_runs = 30;
  int threads = 1;
  double budget_seconds = 20.0; // MAX_VERIF_TIME desk-scale equivalent
  double listening_coulomb = deltaiot::kDefaultListeningCoulomb;
};

struct VerificationRun {
  bool partial = false;       // budget expired before all options were verified
  int verified = 0;
  int skipped = 0;
  double wall_seconds = 0;
};

/// Verifies options sequentially in seeded-random order: packet loss by
/// probability estimation, then energy (and latency when the goal is active)
/// by simulation. On budget expiry the remaining options are marked skipped.
inline VerificationRun verify_adaptation_options(std::vector<AdaptationOption>& options,
                                                 const QualityModelSet& models,
                                                 const KnowledgeConfiguration& k,
                                                 const std::vector<AdaptationGoal>& goals,
                                                 const AnalysisConfig& cfg, uint64_t seed) {
  VerificationRun run;
  auto t0 = std::chrono::steady_clock::now();
  auto deadline = t0 + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                           std::chrono::duration<double>(cfg.budget_seconds));
  deltaiot::QualityInputs inputs = k.quality_inputs();
  bool latency_active = goals_include(goals, Quality::Latency);

  // random verification order (each option picked uniformly without repeats)
  std::vector<size_t> order(options.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(mix_seed(seed, 0x5eed));
  for (size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.below(i)]);

  // templates parse and check once; per option only the parameter slots in
  // the initial state change
  deltaiot::QualityTemplate loss_t = deltaiot::prepare_quality_template(models.packet_loss_text);
  deltaiot::QualityTemplate energy_t = deltaiot::prepare_quality_template(models.energy_text);
  deltaiot::QualityTemplate latency_t = deltaiot::prepare_quality_template(models.latency_text);

  SmcOptions smc;
  smc.threads = cfg.threads;
  smc.has_deadline = true;
  smc.deadline = deadline;

  for (size_t pos = 0; pos < order.size(); ++pos) {
    AdaptationOption& opt = options[order[pos]];
    if (std::chrono::steady_clock::now() >= deadline) {
      opt.packet_loss.status = QualityEstimate::Status::Skipped;
      opt.energy.status = QualityEstimate::Status::Skipped;
      opt.latency.status = QualityEstimate::Status::Skipped;
      run.partial = true;
      ++run.skipped;
      continue;
    }
    try {
      MachineState loss_init = deltaiot::bind_initial_state(
          loss_t, deltaiot::quality_bindings(k.topology, deltaiot::QualityKind::PacketLoss,
                                             inputs, opt.settings));
      smc.initial = &loss_init;
      Estimate loss = estimate_probability(loss_t.cm, loss_t.query(), cfg.epsilon, cfg.alpha,
                                           mix_seed(seed, order[pos]), smc);
      opt.packet_loss.value = loss.point * 100.0;
      opt.packet_loss.status = QualityEstimate::Status::Verified;

      MachineState energy_init = deltaiot::bind_initial_state(
          energy_t, deltaiot::quality_bindings(k.topology, deltaiot::QualityKind::Energy, inputs,
                                               opt.settings, cfg.listening_coulomb));
      smc.initial = &energy_init;
      SimStats energy = run_simulation_query(energy_t.cm, energy_t.query(),
                                             mix_seed(seed, order[pos] * 2 + 1), cfg.sim_runs, smc);
      opt.energy.value = energy.per_monitor[0].mean / 1e7;
      opt.energy.status = QualityEstimate::Status::Verified;

      if (latency_active) {
        MachineState lat_init = deltaiot::bind_initial_state(
            latency_t, deltaiot::quality_bindings(k.topology, deltaiot::QualityKind::Latency,
                                                  inputs, opt.settings));
        smc.initial = &lat_init;
        SimStats lat = run_simulation_query(latency_t.cm, latency_t.query(),
                                            mix_seed(seed, order[pos] * 2 + 2), cfg.sim_runs, smc);
        opt.latency.value = lat.per_monitor[0].mean;
        opt.latency.status = QualityEstimate::Status::Verified;
      }
      smc.initial = nullptr;
      ++run.verified;
    } catch (const Error& e) {
      if (e.kind() != Error::Kind::Cancelled) throw;
      // budget expired mid-option: the in-flight option is skipped
      smc.initial = nullptr;
      opt.packet_loss.status = QualityEstimate::Status::Skipped;
      opt.energy.status = QualityEstimate::Status::Skipped;
      opt.latency.status = QualityEstimate::Status::Skipped;
      run.partial = true;
      ++run.skipped;
    }
  }
  run.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return run;
}

// ---------------------------------------------------------------------------
// Decision making
// ---------------------------------------------------------------------------

struct SelectionResult {
  bool failsafe = false;
  int option_index = -1;
};

/// Applies satisfaction goals in order as filters over the verified options,
/// then picks the optimization argmin/argmax; ties resolve to the lowest
/// index. No satisfying option -> failsafe directive.
inline SelectionResult select_best_option(const std::vector<AdaptationOption>& options,
                                          const std::vector<AdaptationGoal>& goals) {
  std::vector<size_t> survivors;
  for (size_t i = 0; i < options.size(); ++i) {
    bool verified = options[i].packet_loss.status == QualityEstimate::Status::Verified &&
                    options[i].energy.status == QualityEstimate::Status::Verified;
    if (goals_include(goals, Quality::Latency))
      verified = verified && options[i].latency.status == QualityEstimate::Status::Verified;
    if (verified) survivors.push_back(i);
  }
  for (const auto& g : goals) {
    if (g.kind != AdaptationGoal::Kind::Satisfaction) continue;
    std::vector<size_t> next;
    for (size_t i : survivors) {
      double v = options[i].estimate(g.quality).value;
      bool ok = g.less_than ? v < g.threshold : v > g.threshold;
      if (ok) next.push_back(i);
    }
    survivors = std::move(next);
  }
  if (survivors.empty()) return {true, -1};
  const AdaptationGoal* opt_goal = nullptr;
  for (const auto& g : goals)
    if (g.kind == AdaptationGoal::Kind::Optimization) opt_goal = &g;
  if (!opt_goal) return {false, static_cast<int>(survivors.front())};
  size_t best = survivors.front();
  for (size_t i : survivors) {
    double a = options[i].estimate(opt_goal->quality).value;
    double b = options[best].estimate(opt_goal->quality).value;
    if (opt_goal->minimize ? a < b : a > b) best = i;
  }
  return {false, static_cast<int>(best)};
}

// ---------------------------------------------------------------------------
// Planning and execution
// ---------------------------------------------------------------------------

enum class StepKind { ChangePower, ChangeDistribution };

struct Step {
  StepKind kind;
  int mote_id;
  int link; // topology link index
  int new_value;
};

struct Plan {
  std::vector<Step> steps; // grouped per mote, motes ascending
  bool failsafe_reset = false;
};

/// One CHANGE_POWER step per link whose power differs, one
/// CHANGE_DISTRIBUTION per link whose distribution differs, grouped per mote.
inline Plan build_plan(const deltaiot::Topology& t, const deltaiot::Settings& current,
                       const deltaiot::Settings& target) {
  if (current.size() != target.size() || current.size() != t.links.size())
    throw Error(Error::Kind::TopologyMismatch, "configurations cover different topologies");
  Plan plan;
  for (int m : t.mote_ids()) {
    for (int l : t.parent_links_of(m)) {
      if (current[l].power != target[l].power)
        plan.steps.push_back({StepKind::ChangePower, m, l, target[l].power});
      if (current[l].distribution != target[l].distribution)
        plan.steps.push_back({StepKind::ChangeDistribution, m, l, target[l].distribution});
    }
  }
  return plan;
}

/// Applies a plan to a settings vector (soundness checks in tests).
inline deltaiot::Settings apply_plan(const deltaiot::Topology& t, deltaiot::Settings current,
                                     const Plan& plan) {
  if (plan.failsafe_reset) return deltaiot::reference_settings(t);
  for (const auto& s : plan.steps) {
    if (s.kind == StepKind::ChangePower) current[s.link].power = s.new_value;
    else current[s.link].distribution = s.new_value;
  }
  return current;
}

struct EffectorPort {
  std::function<void(int mote, const std::vector<std::pair<int, deltaiot::LinkSetting>>&)>
      set_mote_settings;
  std::function<void()> reset_default_configuration;
};

/// Per mote with steps, one effector invocation carrying that mote's full
/// link settings; a failsafe plan resets the default configuration instead.
inline int execute_plan(const deltaiot::Topology& t, const deltaiot::Settings& target,
                        const Plan& plan, const EffectorPort& effector) {
  if (plan.failsafe_reset) {
    effector.reset_default_configuration();
    return 1;
  }
  std::vector<int> motes;
  for (const auto& s : plan.steps)
    if (motes.empty() || motes.back() != s.mote_id) motes.push_back(s.mote_id);
  int invocations = 0;
  for (int m : motes) {
    std::vector<std::pair<int, deltaiot::LinkSetting>> settings;
    for (int l : t.parent_links_of(m)) settings.emplace_back(l, target[l]);
    effector.set_mote_settings(m, settings);
    ++invocations;
  }
  return invocations;
}

// ---------------------------------------------------------------------------
// Template instantiation validation (rules 1..5)
// ---------------------------------------------------------------------------

/// Manifest line formats:
///   require function <Automaton>.<name> | require function <name>
///   require location <Automaton>.<name>
///   require channel <name>
///   slot <SlotName> = <Automaton>.<name> location|variable|function
///   family <name_I> prefix <prefix> min <count> [in <Automaton>]
inline std::vector<Diagnostic> validate_template_instantiation(const std::string& manifest,
                                                               const ModelNetwork& model) {
  std::vector<Diagnostic> diags;
  auto fail = [&](DiagKind kind, const std::string& msg) { diags.push_back({kind, {}, msg}); };

  auto find_automaton = [&](const std::string& name) { return model.find_automaton(name); };
  auto has_function = [&](const Automaton* a, const std::string& name) {
    if (a) {
      for (const auto& f : a->functions)
        if (f.name == name) return true;
      return false;
    }
    for (const auto& f : model.functions)
      if (f.name == name) return true;
    return false;
  };
  auto has_variable = [&](const Automaton* a, const std::string& name) {
    if (a) {
      for (const auto& v : a->locals)
        if (v.name == name) return true;
      return false;
    }
    for (const auto& v : model.globals)
      if (v.name == name) return true;
    return false;
  };

  std::istringstream in(manifest);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word) || word[0] == '#') continue;
    if (word == "require") {
      std::string kind, target;
      ls >> kind >> target;
      std::string automaton, member = target;
      auto dot = target.find('.');
      if (dot != std::string::npos) {
        automaton = target.substr(0, dot);
        member = target.substr(dot + 1);
      }
      const Automaton* a = automaton.empty() ? nullptr : find_automaton(automaton);
      if (!automaton.empty() && !a) {
        fail(DiagKind::InstantiationError, "rule 1: automaton '" + automaton + "' missing");
        continue;
      }
      if (kind == "function") {
        if (!has_function(a, member))
          fail(DiagKind::InstantiationError,
               "rule 1: required function '" + target + "' is not implemented");
      } else if (kind == "location") {
        if (!a || a->location_index(member) < 0)
          fail(DiagKind::InstantiationError,
               "rule 1: required location '" + target + "' is missing");
      } else if (kind == "channel") {
        bool found = false;
        for (const auto& g : model.globals)
          if (g.name == member && g.type.base == "chan") found = true;
        if (!found)
          fail(DiagKind::InstantiationError, "rule 1: required channel '" + member + "' is missing");
      } else {
        fail(DiagKind::InstantiationError, "unknown require kind: " + kind);
      }
    } else if (word == "slot") {
      std::string slot, eq, target, kind;
      ls >> slot >> eq >> target >> kind;
      auto dot = target.find('.');
      std::string automaton = dot == std::string::npos ? "" : target.substr(0, dot);
      std::string member = dot == std::string::npos ? target : target.substr(dot + 1);
      const Automaton* a = automaton.empty() ? nullptr : find_automaton(automaton);
      if (!automaton.empty() && !a) {
        fail(DiagKind::InstantiationError,
             "rule 2/3: slot <" + slot + "> binds to missing automaton '" + automaton + "'");
        continue;
      }
      bool ok = false;
      if (kind == "location") ok = a && a->location_index(member) >= 0;
      else if (kind == "variable") ok = has_variable(a, member);
      else if (kind == "function") ok = has_function(a, member);
      if (!ok)
        fail(DiagKind::InstantiationError,
             "rule 2/3: slot <" + slot + "> binding '" + target + "' (" + kind +
                 ") does not resolve in the model");
    } else if (word == "family") {
      std::string name, kw_prefix, prefix, kw_min, kw_in, automaton;
      int min_count = 0;
      ls >> name >> kw_prefix >> prefix >> kw_min >> min_count;
      if (ls >> kw_in >> automaton) {
        // scoped family
      }
      const Automaton* a = automaton.empty() ? nullptr : find_automaton(automaton);
      int count = 0;
      auto count_in = [&](const std::vector<FunctionDecl>& fns) {
        for (const auto& f : fns)
          if (f.name.rfind(prefix, 0) == 0) ++count;
      };
      if (a) count_in(a->functions);
      else {
        count_in(model.functions);
        for (const auto& au : model.automata) count_in(au.functions);
      }
      if (count < min_count)
        fail(DiagKind::InstantiationError,
             "rule 4: family '" + name + "' has " + std::to_string(count) +
                 " instantiation(s), needs at least " + std::to_string(min_count));
    } else {
      fail(DiagKind::InstantiationError, "unknown manifest directive: " + word);
    }
  }
  return diags;
}

} // namespace activforms::mapek
