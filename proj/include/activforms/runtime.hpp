#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "activforms/mapek.hpp"
#include "activforms/update.hpp"

namespace activforms::runtime {

namespace fs = std::filesystem;

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(Error::Kind::ConfigError, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& p, const std::string& data) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << data;
}

inline fs::path model_dir() {
#ifdef ACTIVFORMS_MODEL_DIR
  return fs::path(ACTIVFORMS_MODEL_DIR);
#else
  return fs::path("models");
#endif
}

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  std::string scenario = "adaptive"; // adaptive | reference | evolution
  int cycles = 76;
  uint64_t seed = 1;
  std::string topology = "default"; // "default" or "scaled:<m>"
  std::string goals_text;
  std::string evolved_goals_text;
  std::string mape_model_path;       // defaults to the shipped models
  std::string evolved_model_path;
  int swap_cycle = 38;
  deltaiot::UncertaintyProfile profile;
  mapek::AnalysisConfig analysis;
  double listening_coulomb = deltaiot::kDefaultListeningCoulomb;
  fs::path out_dir = "experiment-out";
  bool realtime = false;
  int64_t real_time_unit_millis = 1000;

  deltaiot::Topology make_topology() const {
    if (topology == "default") return deltaiot::default_topology();
    if (topology.rfind("scaled:", 0) == 0)
      return deltaiot::scaled_topology(std::stoi(topology.substr(7)));
    throw Error(Error::Kind::ConfigError, "unknown topology '" + topology + "'");
  }
};

inline deltaiot::UncertaintyProfile parse_profile(const std::string& text) {
  deltaiot::UncertaintyProfile prof;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string kind;
    if (!(ls >> kind) || kind[0] == '#') continue;
    if (kind == "default-load") {
      ls >> prof.default_load.base >> prof.default_load.amplitude >> prof.default_load.period >>
          prof.default_load.phase;
    } else if (kind == "load") {
      int mote;
      deltaiot::UncertaintyProfile::MoteLoad l;
      ls >> mote >> l.base >> l.amplitude >> l.period >> l.phase;
      prof.loads[mote] = l;
    } else if (kind == "default-noise") {
      ls >> prof.default_noise.mean >> prof.default_noise.sigma;
    } else if (kind == "noise") {
      int link;
      deltaiot::UncertaintyProfile::LinkNoise n;
      ls >> link >> n.mean >> n.sigma;
      prof.noise[link] = n;
    } else {
      throw Error(Error::Kind::ConfigError, "unknown profile directive: " + kind);
    }
  }
  return prof;
}

/// Key/value experiment file; ACTIVFORMS_SEED in the environment overrides
/// the configured seed.
inline ExperimentConfig parse_experiment_config(const std::string& text, const fs::path& base_dir) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    if (path.is_absolute() || fs::exists(path)) return path;
    if (fs::exists(base_dir / path)) return base_dir / path;
    return model_dir() / path;
  };
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key) || key[0] == '#') continue;
    std::string value;
    std::getline(ls, value);
    size_t start = value.find_first_not_of(" \t");
    value = start == std::string::npos ? "" : value.substr(start);
    if (key == "scenario") cfg.scenario = value;
    else if (key == "cycles") cfg.cycles = std::stoi(value);
    else if (key == "seed") cfg.seed = std::stoull(value);
    else if (key == "topology") cfg.topology = value;
    else if (key == "goals") cfg.goals_text = read_file(resolve(value));
    else if (key == "evolvedGoals") cfg.evolved_goals_text = read_file(resolve(value));
    else if (key == "model") cfg.mape_model_path = resolve(value).string();
    else if (key == "evolvedModel") cfg.evolved_model_path = resolve(value).string();
    else if (key == "swapCycle") cfg.swap_cycle = std::stoi(value);
    else if (key == "profile") cfg.profile = parse_profile(read_file(resolve(value)));
    else if (key == "epsilon") cfg.analysis.epsilon = std::stod(value);
    else if (key == "alpha") cfg.analysis.alpha = std::stod(value);
    else if (key == "simRuns") cfg.analysis.sim_runs = std::stoll(value);
    else if (key == "threads") cfg.analysis.threads = std::stoi(value);
    else if (key == "budgetSeconds") cfg.analysis.budget_seconds = std::stod(value);
    else if (key == "listeningCoulomb") cfg.listening_coulomb = std::stod(value);
    else if (key == "out") cfg.out_dir = value;
    else if (key == "realtime") cfg.realtime = value == "true" || value == "1";
    else if (key == "realTimeUnitMillis") cfg.real_time_unit_millis = std::stoll(value);
    else throw Error(Error::Kind::ConfigError, "unknown experiment key: " + key);
  }
  if (cfg.cycles < 1) throw Error(Error::Kind::ConfigError, "cycles must be >= 1");
  if (const char* env = std::getenv("ACTIVFORMS_SEED")) cfg.seed = std::stoull(env);
  cfg.analysis.listening_coulomb = cfg.listening_coulomb;
  return cfg;
}

// ---------------------------------------------------------------------------
// Per-cycle record and CSV emission (schema in REPORT-SCHEMA.md)
// ---------------------------------------------------------------------------

struct CycleRecord {
  int64_t cycle = 0;
  std::string scenario;
  double packet_loss_pct = 0;
  double energy_coulomb = 0;
  double latency_pct = 0;
  bool adaptation_needed = false;
  int options_total = 0;
  int options_verified = 0;
  int options_skipped = 0;
  bool partial_verification = false;
  bool failsafe_used = false;
  int chosen_option = -1;
  int64_t verification_runs = 0; // deterministic verification cost
  uint64_t config_id = 0;
  bool swapped = false;
};

inline const char* cycle_csv_header() {
  return "cycle,scenario,packetLoss,energy,latency,adaptationNeeded,optionsTotal,"
         "optionsVerified,optionsSkipped,partialVerification,failsafeUsed,chosenOption,"
         "verificationRuns,configId,swapped";
}

inline std::string to_csv_row(const CycleRecord& r) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(6);
  out << r.cycle << ',' << r.scenario << ',' << r.packet_loss_pct << ',' << r.energy_coulomb
      << ',' << r.latency_pct << ',' << (r.adaptation_needed ? 1 : 0) << ',' << r.options_total
      << ',' << r.options_verified << ',' << r.options_skipped << ','
      << (r.partial_verification ? 1 : 0) << ',' << (r.failsafe_used ? 1 : 0) << ','
      << r.chosen_option << ',' << r.verification_runs << ',' << std::hex << r.config_id
      << std::dec << ',' << (r.swapped ? 1 : 0);
  return out.str();
}

struct ScenarioSummary {
  std::string scenario;
  int64_t cycles = 0;
  SampleStats packet_loss, energy, latency;
  Quartiles packet_loss_q, energy_q, latency_q;
  double wall_seconds = 0;
  int64_t swap_cycle = -1;

  static ScenarioSummary from(const std::vector<CycleRecord>& rows, const std::string& name) {
    ScenarioSummary s;
    s.scenario = name;
    s.cycles = static_cast<int64_t>(rows.size());
    std::vector<double> pl, en, lat;
    for (const auto& r : rows) {
      pl.push_back(r.packet_loss_pct);
      en.push_back(r.energy_coulomb);
      lat.push_back(r.latency_pct);
    }
    s.packet_loss = compute_sample_stats(pl);
    s.energy = compute_sample_stats(en);
    s.latency = compute_sample_stats(lat);
    s.packet_loss_q = compute_quartiles(pl);
    s.energy_q = compute_quartiles(en);
    s.latency_q = compute_quartiles(lat);
    return s;
  }

  std::string to_csv() const {
    std::ostringstream out;
    out << std::fixed << std::setprecision(6);
    out << "scenario,cycles,meanPacketLoss,q1PacketLoss,medianPacketLoss,q3PacketLoss,"
           "meanEnergy,q1Energy,medianEnergy,q3Energy,meanLatency,q1Latency,medianLatency,"
           "q3Latency,wallSeconds,swapCycle\n";
    out << scenario << ',' << cycles << ',' << packet_loss.mean << ',' << packet_loss_q.q1 << ','
        << packet_loss_q.median << ',' << packet_loss_q.q3 << ',' << energy.mean << ','
        << energy_q.q1 << ',' << energy_q.median << ',' << energy_q.q3 << ',' << latency.mean
        << ',' << latency_q.q1 << ',' << latency_q.median << ',' << latency_q.q3 << ','
        << wall_seconds << ',' << swap_cycle << "\n";
    return out.str();
  }
};

// ---------------------------------------------------------------------------
// The feedback-loop runtime: engine + connectors + managed-system simulator
// ---------------------------------------------------------------------------

struct ScenarioResult {
  std::vector<CycleRecord> rows;
  ScenarioSummary summary;
  update::SwapReport swap_report;
  bool swapped = false;
  fs::path out_dir;
};

class FeedbackLoopRuntime {
public:
  FeedbackLoopRuntime(const ExperimentConfig& cfg)
      : cfg_(cfg),
        topology_(cfg.make_topology()),
        sim_(topology_, cfg.profile, {cfg.seed, cfg.listening_coulomb}),
        models_(mapek::QualityModelSet::generate(topology_)) {
    knowledge_.topology = topology_;
    knowledge_.settings = deltaiot::reference_settings(topology_);
    knowledge_.link_snr.assign(topology_.links.size(), 0.0);
    knowledge_.mote_ptraffic.assign(static_cast<size_t>(topology_.mote_count) + 1, 0.0);
    knowledge_.mote_queue.assign(static_cast<size_t>(topology_.mote_count) + 1, 0);
    goals_ = mapek::parse_goals(cfg.goals_text.empty() ? default_goals() : cfg.goals_text);
    last_applied_ = deltaiot::reference_settings(topology_);
  }

  static std::string default_goals() {
    return "satisfaction packetLoss < 10\noptimize energyConsumption min\n";
  }

  /// Runs the configured scenario and writes cycles.csv, summary.csv,
  /// timings.csv, and (evolution) swap.csv under the output directory.
  ScenarioResult run() {
    auto t0 = std::chrono::steady_clock::now();
    ScenarioResult result;
    result.out_dir = cfg_.out_dir;
    if (cfg_.scenario == "reference") {
      run_reference(result);
    } else if (cfg_.scenario == "adaptive") {
      start_engine(cfg_.mape_model_path.empty()
                       ? (model_dir() / "deltaiot-mape.model").string()
                       : cfg_.mape_model_path);
      for (int c = 0; c < cfg_.cycles; ++c) result.rows.push_back(run_adaptive_cycle());
    } else if (cfg_.scenario == "evolution") {
      run_evolution(result);
    } else {
      throw Error(Error::Kind::ConfigError, "unknown scenario '" + cfg_.scenario + "'");
    }
    result.summary = ScenarioSummary::from(result.rows, cfg_.scenario);
    result.summary.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.summary.swap_cycle = result.swapped ? cfg_.swap_cycle : -1;
    result.swapped = swapped_;
    result.swap_report = swap_report_;
    emit(result);
    return result;
  }

  const deltaiot::Simulator& simulator() const { return sim_; }
  EngineInstance* engine() { return engine_.get(); }
  update::UpdateManager& update_manager() { return manager_; }

private:
  void emit(const ScenarioResult& result) {
    std::ostringstream cycles;
    cycles << cycle_csv_header() << "\n";
    for (const auto& r : result.rows) cycles << to_csv_row(r) << "\n";
    write_file(cfg_.out_dir / "cycles.csv", cycles.str());
    write_file(cfg_.out_dir / "summary.csv", result.summary.to_csv());
    std::ostringstream timings;
    timings << "cycle,verificationMillis\n";
    for (size_t i = 0; i < result.rows.size(); ++i)
      timings << result.rows[i].cycle << ',' << std::fixed << std::setprecision(3)
              << (i < verification_millis_.size() ? verification_millis_[i] : 0.0) << "\n";
    write_file(cfg_.out_dir / "timings.csv", timings.str());
    if (swapped_) {
      std::ostringstream swap;
      swap << "outcome,transferred,initialized,dropped,bufferedSignals,replayedSignals\n"
           << swap_report_.to_csv_row() << "\n";
      write_file(cfg_.out_dir / "swap.csv", swap.str());
    }
  }

  void run_reference(ScenarioResult& result) {
    sim_.reset_default_configuration();
    for (int c = 0; c < cfg_.cycles; ++c) {
      deltaiot::CycleStats stats = sim_.simulate_cycle();
      CycleRecord row;
      row.cycle = stats.cycle;
      row.scenario = cfg_.scenario;
      row.packet_loss_pct = stats.packet_loss * 100.0;
      row.energy_coulomb = stats.energy;
      row.latency_pct = stats.latency * 100.0;
      row.config_id = config_id(sim_.settings());
      result.rows.push_back(row);
      verification_millis_.push_back(0);
    }
  }

  void run_evolution(ScenarioResult& result) {
    start_engine(cfg_.mape_model_path.empty()
                     ? (model_dir() / "deltaiot-mape.model").string()
                     : cfg_.mape_model_path);
    fs::remove_all(cfg_.out_dir / "updates"); // scenarios start with a clean slate
    manager_.set_watch_directory(cfg_.out_dir / "updates");
    for (int c = 0; c < cfg_.cycles; ++c) {
      if (c == cfg_.swap_cycle && !swapped_) submit_evolution_bundle();
      manager_.poll_watch_directory();
      CycleRecord row = run_adaptive_cycle();
      // the swap happens between cycles, in the quiescent state
      if (manager_.has_pending() && manager_.quiescent(*engine_)) {
        ExecutionConfig ecfg;
        ecfg.seed = cfg_.seed;
        swap_report_ = manager_.perform_hot_swap(engine_, ecfg);
        swap_report_.cycle = row.cycle;
        if (!swap_report_.aborted) {
          swapped_ = true;
          row.swapped = true;
          bind_ports();
          goals_ = mapek::parse_goals(manager_.applied_goals());
        }
      }
      result.rows.push_back(row);
    }
  }

  void submit_evolution_bundle() {
    std::string model_text = cfg_.evolved_model_path.empty()
                                 ? read_file(model_dir() / "deltaiot-mape-latency.model")
                                 : read_file(cfg_.evolved_model_path);
    std::string stub_text = read_file(model_dir() / "deltaiot-stubs-latency.model");
    VerificationReport report =
        run_verification_suite({model_text, stub_text}, default_bindings());
    if (!report.passed)
      throw Error(Error::Kind::MissingVerificationReport,
                  "evolved model failed offline verification");
    update::UpdateBundle bundle;
    bundle.model_text = model_text;
    bundle.goals_text = cfg_.evolved_goals_text.empty()
                            ? "satisfaction packetLoss < 10\nsatisfaction latency < 5\n"
                              "optimize energyConsumption min\n"
                            : cfg_.evolved_goals_text;
    bundle.report_csv = report.to_csv();
    update::write_bundle(cfg_.out_dir / "updates" / "latency-goal", bundle);
  }

public:
  static std::map<std::string, std::string> default_bindings() {
    return {
        {"ElementPlanned", "MotePlanned"},
        {"elemId", "moteId"},
        {"stepsContains", "stepsContains"},
        {"AdaptElement", "AdaptMote"},
        {"stepsAppliedContains", "stepsAppliedContains"},
        {"ElementAdapted", "ElementAdapted"},
        {"stepsEnactedContains", "stepsEnactedContains"},
        {"E", "12"},
        {"L", "12"},
        {"T", "1"},
        {"V", "60"},
        {"Model", "Planner"},
        {"Location", "UseFailSafeStrategy"},
    };
  }

private:
  void start_engine(const std::string& model_path) {
    CheckedModel cm = load_and_check(read_file(model_path));
    if (!cm.ok())
      throw Error(Error::Kind::LoadError,
                  "MAPE model has diagnostics:\n" + join_diagnostics(cm.diagnostics));
    ExecutionConfig ecfg;
    ecfg.seed = cfg_.seed;
    ecfg.real_time_unit_millis = cfg_.real_time_unit_millis;
    engine_ = load_model(std::make_shared<CheckedModel>(std::move(cm)), ecfg);
    bind_ports();
  }

  void bind_ports() {
    verifier_requested_ = false;
    cycle_done_ = false;
    engine_->bind_external_port({"invokeVerifier", ExternalPort::Direction::OutOfModel, {}},
                                [this](const PayloadMap&) { verifier_requested_ = true; });
    engine_->bind_external_port(
        {"adaptMote", ExternalPort::Direction::OutOfModel, {"outMote"}},
        [this](const PayloadMap& p) { on_adapt_mote(static_cast<int>(p.at("outMote"))); });
    engine_->bind_external_port({"resetConfiguration", ExternalPort::Direction::OutOfModel, {}},
                                [this](const PayloadMap&) { on_reset(); });
    engine_->bind_external_port({"feedbackDone", ExternalPort::Direction::OutOfModel, {}},
                                [this](const PayloadMap&) { cycle_done_ = true; });
    engine_->bind_external_port({"monitor", ExternalPort::Direction::IntoModel, {}});
    engine_->bind_external_port({"verificationCompleted", ExternalPort::Direction::IntoModel, {}});
    engine_->bind_external_port({"verificationInterrupted", ExternalPort::Direction::IntoModel, {}});
    engine_->bind_external_port({"ack", ExternalPort::Direction::IntoModel, {}});
  }

  void on_adapt_mote(int mote) {
    std::vector<std::pair<int, deltaiot::LinkSetting>> settings;
    for (int l : topology_.parent_links_of(mote)) {
      int power = static_cast<int>(engine_->read_variable("outPower[" + std::to_string(l) + "]"));
      int dist = static_cast<int>(engine_->read_variable("outDist[" + std::to_string(l) + "]"));
      settings.emplace_back(l, deltaiot::LinkSetting{power, dist});
      last_applied_[l] = {power, dist};
    }
    sim_.set_mote_settings(mote, settings);
    engine_->inject("ack");
  }

  void on_reset() {
    sim_.reset_default_configuration();
    last_applied_ = deltaiot::reference_settings(topology_);
    failsafe_used_ = true;
    engine_->inject("ack");
  }

  CycleRecord run_adaptive_cycle() {
    deltaiot::CycleStats stats = sim_.simulate_cycle();
    CycleRecord row;
    row.cycle = stats.cycle;
    row.scenario = cfg_.scenario;
    row.packet_loss_pct = stats.packet_loss * 100.0;
    row.energy_coulomb = stats.energy;
    row.latency_pct = stats.latency * 100.0;
    row.config_id = config_id(sim_.settings());

    mapek::ProbeSample sample;
    sample.motes = sim_.get_all_motes();
    auto qos = sim_.get_network_qos(1);
    sample.qos = qos.back();
    mapek::UpdateOutcome mon = mapek::update_knowledge(knowledge_, sample, &last_applied_);
    row.adaptation_needed = mon.analysis_required;

    cycle_done_ = false;
    verifier_requested_ = false;
    failsafe_used_ = false;
    engine_->inject("monitor", monitor_payload(mon));
    double verif_ms = 0;
    int64_t verif_runs = 0;
    for (int guard = 0; guard < 64 && !cycle_done_; ++guard) {
      engine_->settle();
      if (engine_->halted())
        throw Error(Error::Kind::Internal, "engine halted: " + engine_->error());
      if (verifier_requested_) {
        verifier_requested_ = false;
        auto v0 = std::chrono::steady_clock::now();
        handle_verification_request(row, verif_runs);
        verif_ms +=
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - v0)
                .count();
      } else if (!cycle_done_) {
        break; // nothing left to do; treat as an idle cycle
      }
    }
    row.verification_runs = verif_runs;
    row.failsafe_used = row.failsafe_used || failsafe_used_;
    verification_millis_.push_back(verif_ms);
    return row;
  }

  PayloadMap monitor_payload(const mapek::UpdateOutcome&) {
    PayloadMap p;
    auto maybe = [&](const std::string& name, int64_t value) {
      if (engine_->leaf_table().count(name)) p[name] = value;
    };
    for (size_t l = 0; l < topology_.links.size(); ++l) {
      std::string i = std::to_string(l);
      maybe("inPower[" + i + "]", knowledge_.settings[l].power);
      maybe("inDist[" + i + "]", knowledge_.settings[l].distribution);
      maybe("inSNRt[" + i + "]", deltaiot::quantize_snr_tenths(knowledge_.link_snr[l]));
    }
    for (int m = 2; m <= topology_.mote_count; ++m) {
      std::string i = std::to_string(m);
      maybe("inLoad[" + i + "]", deltaiot::quantize_permille(knowledge_.mote_ptraffic[m]));
      maybe("inQueueLens[" + i + "]", knowledge_.mote_queue[m]);
    }
    maybe("inPacketLoss", llround(knowledge_.qualities.packet_loss_pct));
    maybe("inEnergy", llround(knowledge_.qualities.energy_coulomb * 100));
    maybe("inLatency", llround(knowledge_.qualities.latency_pct));
    return p;
  }

  void handle_verification_request(CycleRecord& row, int64_t& verif_runs) {
    std::vector<mapek::AdaptationOption> options = mapek::compose_adaptation_options(knowledge_);
    row.options_total = static_cast<int>(options.size());
    mapek::AnalysisConfig acfg = cfg_.analysis;
    acfg.listening_coulomb = cfg_.listening_coulomb;
    mapek::VerificationRun vr = mapek::verify_adaptation_options(
        options, models_, knowledge_, goals_, acfg, mix_seed(cfg_.seed, sim_.cycle()));
    row.options_verified = vr.verified;
    row.options_skipped = vr.skipped;
    row.partial_verification = vr.partial;
    // deterministic cost proxy: packet-loss runs are bounded by the Chernoff
    // cap; simulation queries use the fixed run count
    verif_runs +=
        static_cast<int64_t>(vr.verified) *
        (required_runs_chernoff(acfg.epsilon, acfg.alpha) / 8 + acfg.sim_runs);

    mapek::SelectionResult sel = mapek::select_best_option(options, goals_);
    PayloadMap p;
    bool best_found = !sel.failsafe;
    const deltaiot::Settings& staged =
        best_found ? options[sel.option_index].settings : knowledge_.settings;
    for (size_t l = 0; l < topology_.links.size(); ++l) {
      std::string i = std::to_string(l);
      p["stagedPower[" + i + "]"] = staged[l].power;
      p["stagedDist[" + i + "]"] = staged[l].distribution;
    }
    p["bestFound"] = best_found ? 1 : 0;
    p["verifPartial"] = vr.partial ? 1 : 0;
    p["bestLoss"] =
        best_found ? llround(options[sel.option_index].packet_loss.value) : 100;
    if (engine_->leaf_table().count("bestLatency"))
      p["bestLatency"] = best_found ? llround(options[sel.option_index].latency.value) : 100;
    row.chosen_option = best_found ? sel.option_index : -1;
    row.failsafe_used = sel.failsafe;
    engine_->inject(vr.partial ? "verificationInterrupted" : "verificationCompleted", p);
  }

  static uint64_t config_id(const deltaiot::Settings& s) {
    std::string bytes;
    for (const auto& ls : s) {
      bytes.push_back(static_cast<char>(ls.power));
      bytes.push_back(static_cast<char>(ls.distribution));
    }
    return update::fnv1a(bytes);
  }

  ExperimentConfig cfg_;
  deltaiot::Topology topology_;
  deltaiot::Simulator sim_;
  mapek::QualityModelSet models_;
  mapek::KnowledgeConfiguration knowledge_;
  std::vector<mapek::AdaptationGoal> goals_;
  deltaiot::Settings last_applied_;
  std::unique_ptr<EngineInstance> engine_;
  update::UpdateManager manager_;
  update::SwapReport swap_report_;
  std::vector<double> verification_millis_;
  bool swapped_ = false;
  bool verifier_requested_ = false;
  bool cycle_done_ = false;
  bool failsafe_used_ = false;
};

inline ScenarioResult run_scenario(const ExperimentConfig& cfg) {
  FeedbackLoopRuntime runtime(cfg);
  return runtime.run();
}

// ---------------------------------------------------------------------------
// Report generation over one or more completed experiments
// ---------------------------------------------------------------------------

struct ComparisonReport {
  std::string text;
  std::string csv;
};

inline ComparisonReport emit_report(const std::vector<fs::path>& experiment_dirs) {
  std::vector<std::string> rows;
  for (const auto& dir : experiment_dirs) {
    fs::path summary = dir / "summary.csv";
    if (!fs::exists(summary)) continue;
    std::istringstream in(read_file(summary));
    std::string header, row;
    std::getline(in, header);
    while (std::getline(in, row))
      if (!row.empty()) rows.push_back(row);
  }
  if (rows.empty())
    throw Error(Error::Kind::EmptyDirectory, "no completed experiments found");
  ComparisonReport rep;
  std::ostringstream csv;
  csv << "scenario,cycles,meanPacketLoss,q1PacketLoss,medianPacketLoss,q3PacketLoss,"
         "meanEnergy,q1Energy,medianEnergy,q3Energy,meanLatency,q1Latency,medianLatency,"
         "q3Latency,wallSeconds,swapCycle\n";
  for (const auto& r : rows) csv << r << "\n";
  rep.csv = csv.str();

  std::ostringstream text;
  text << std::left << std::setw(12) << "scenario" << std::setw(10) << "loss%" << std::setw(10)
       << "energyC" << std::setw(10) << "latency%" << "\n";
  for (const auto& r : rows) {
    std::istringstream ls(r);
    std::vector<std::string> cols;
    std::string col;
    while (std::getline(ls, col, ',')) cols.push_back(col);
    if (cols.size() < 15) continue;
    auto short3 = [](const std::string& v) { return v.substr(0, v.find('.') + 3); };
    text << std::left << std::setw(12) << cols[0] << std::setw(10) << short3(cols[2])
         << std::setw(10) << short3(cols[6]) << std::setw(10) << short3(cols[10]) << "\n";
  }
  rep.text = text.str();
  return rep;
}

// ---------------------------------------------------------------------------
// Scalability sweep (adaptation-space combinatorics)
// ---------------------------------------------------------------------------

struct ScalePoint {
  int motes = 0;
  size_t options = 0;
  double total_smc_seconds = 0;
  double seconds_per_option = 0;
};

inline std::vector<ScalePoint> run_scale_sweep(const std::vector<int>& sizes, double epsilon,
                                               double alpha, int64_t sim_runs, uint64_t seed,
                                               int threads = 1) {
  std::vector<ScalePoint> points;
  for (int m : sizes) {
    deltaiot::Topology t = deltaiot::scaled_topology(m);
    mapek::KnowledgeConfiguration k;
    k.topology = t;
    k.settings = deltaiot::reference_settings(t);
    k.link_snr.resize(t.links.size());
    for (size_t l = 0; l < t.links.size(); ++l)
      k.link_snr[l] = t.links[l].snr_alpha + t.links[l].snr_beta * 15;
    k.mote_ptraffic.assign(static_cast<size_t>(t.mote_count) + 1, 0.8);
    k.mote_queue.assign(static_cast<size_t>(t.mote_count) + 1, 0);
    auto options = mapek::compose_adaptation_options(k);
    auto goals = mapek::parse_goals(FeedbackLoopRuntime::default_goals());
    mapek::AnalysisConfig cfg;
    cfg.epsilon = epsilon;
    cfg.alpha = alpha;
    cfg.sim_runs = sim_runs;
    cfg.threads = threads;
    cfg.budget_seconds = 1e9; // the sweep verifies every option
    auto t0 = std::chrono::steady_clock::now();
    mapek::verify_adaptation_options(options, mapek::QualityModelSet::generate(t), k, goals, cfg,
                                     seed);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    points.push_back({m, options.size(), secs, secs / static_cast<double>(options.size())});
  }
  return points;
}

} // namespace activforms::runtime
