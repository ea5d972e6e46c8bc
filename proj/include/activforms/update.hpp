#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "activforms/checker.hpp"
#include "activforms/engine.hpp"

namespace activforms::update {

inline uint64_t fnv1a(const std::string& data) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Update bundles: (model, goals, checker report) with a report hash
// ---------------------------------------------------------------------------

struct UpdateBundle {
  std::string model_text;
  std::string goals_text;
  std::string report_csv;
  uint64_t report_hash = 0;
};

inline void write_bundle(const std::filesystem::path& dir, const UpdateBundle& b) {
  std::filesystem::create_directories(dir);
  auto put = [&](const char* name, const std::string& data) {
    std::ofstream out(dir / name, std::ios::binary);
    out << data;
  };
  put("model.model", b.model_text);
  put("goals.cfg", b.goals_text);
  put("report.csv", b.report_csv);
  std::ostringstream manifest;
  manifest << "report-hash " << std::hex << fnv1a(b.report_csv) << "\n";
  put("MANIFEST", manifest.str());
}

inline UpdateBundle load_bundle(const std::filesystem::path& dir) {
  auto get = [&](const char* name) {
    std::ifstream in(dir / name, std::ios::binary);
    if (!in) throw Error(Error::Kind::ParseError, "bundle is missing " + std::string(name));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  UpdateBundle b;
  b.model_text = get("model.model");
  b.goals_text = get("goals.cfg");
  b.report_csv = get("report.csv");
  std::istringstream manifest(get("MANIFEST"));
  std::string key;
  manifest >> key >> std::hex >> b.report_hash;
  if (key != "report-hash")
    throw Error(Error::Kind::ParseError, "bundle MANIFEST is malformed");
  return b;
}

/// The verification report attached to a request must show every property
/// passing and hash-match the manifest.
inline void validate_bundle(const UpdateBundle& b) {
  if (b.report_csv.empty())
    throw Error(Error::Kind::MissingVerificationReport, "update carries no verification report");
  if (fnv1a(b.report_csv) != b.report_hash)
    throw Error(Error::Kind::MissingVerificationReport,
                "verification report does not match the manifest hash");
  std::istringstream in(b.report_csv);
  std::string line;
  bool saw_row = false;
  std::getline(in, line); // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    saw_row = true;
    auto first = line.find(',');
    auto second = line.find(',', first + 1);
    std::string verdict = line.substr(first + 1, second - first - 1);
    if (verdict != "holds")
      throw Error(Error::Kind::MissingVerificationReport,
                  "verification report shows a failing property: " + line);
  }
  if (!saw_row)
    throw Error(Error::Kind::MissingVerificationReport, "verification report is empty");
  ParseResult pr = parse_model(b.model_text);
  if (!pr.ok())
    throw Error(Error::Kind::ParseError,
                "update model does not parse:\n" + join_diagnostics(pr.diagnostics));
}

// ---------------------------------------------------------------------------
// Quiescence and the 10-step hot swap
// ---------------------------------------------------------------------------

struct QuiescencePredicate {
  std::vector<std::pair<std::string, std::string>> pairs; // (instance, location)
};

inline QuiescencePredicate mape_quiescence() {
  return {{{"Monitor", "Waiting"},
           {"Analyzer", "Waiting"},
           {"Planner", "Waiting"},
           {"Executor", "Waiting"}}};
}

/// True iff every (instance, location) pair is active and no committed
/// location is active anywhere.
inline bool detect_quiescence(const EngineInstance& engine, const QuiescencePredicate& pred) {
  for (const auto& [inst, loc] : pred.pairs)
    if (engine.active_location(inst) != loc) return false;
  if (engine.any_committed_active()) return false;
  return true;
}

struct SwapReport {
  bool aborted = false;
  std::string reason;
  StateTransferReport transfer;
  size_t buffered_signals = 0;
  size_t replayed_signals = 0;
  int64_t cycle = -1;

  std::string to_csv_row() const {
    std::ostringstream out;
    out << (aborted ? "aborted" : "swapped") << "," << transfer.transferred.size() << ","
        << transfer.initialized.size() << "," << transfer.dropped.size() << ","
        << buffered_signals << "," << replayed_signals;
    return out.str();
  }
};

struct UpdateTicket {
  int id = 0;
  bool pending = false;
};

class UpdateManager {
public:
  explicit UpdateManager(QuiescencePredicate pred = mape_quiescence()) : pred_(std::move(pred)) {}

  void set_watch_directory(const std::filesystem::path& dir) {
    watch_dir_ = dir;
    std::filesystem::create_directories(dir);
  }

  /// Queues an update; a newer submission supersedes the pending one.
  UpdateTicket submit(UpdateBundle bundle) {
    validate_bundle(bundle);
    if (pending_) ++superseded_count_;
    pending_ = std::move(bundle);
    ticket_.id += 1;
    ticket_.pending = true;
    return ticket_;
  }

  /// Scans the watched directory for bundle subdirectories not yet ingested.
  void poll_watch_directory() {
    if (watch_dir_.empty() || !std::filesystem::exists(watch_dir_)) return;
    for (const auto& entry : std::filesystem::directory_iterator(watch_dir_)) {
      if (!entry.is_directory()) continue;
      std::string key = entry.path().filename().string();
      if (seen_.count(key)) continue;
      if (!std::filesystem::exists(entry.path() / "MANIFEST")) continue;
      seen_.insert(key);
      submit(load_bundle(entry.path()));
    }
  }

  bool has_pending() const { return pending_.has_value(); }
  int superseded_count() const { return superseded_count_; }
  const UpdateBundle& pending_bundle() const {
    if (!pending_) throw Error(Error::Kind::Internal, "no pending update");
    return *pending_;
  }

  bool quiescent(const EngineInstance& engine) const { return detect_quiescence(engine, pred_); }

  /// The swap procedure: halt, save state, buffer incoming signals, load the
  /// new model, transfer matching state, start the new model, replay buffered
  /// signals FIFO, resume. A state-transfer type mismatch aborts the whole
  /// swap and leaves the old engine running untouched.
  SwapReport perform_hot_swap(std::unique_ptr<EngineInstance>& engine, ExecutionConfig cfg) {
    if (!pending_) throw Error(Error::Kind::Internal, "no pending update to apply");
    SwapReport report;
    if (!quiescent(*engine)) {
      report.aborted = true;
      report.reason = "feedback loop is not quiescent";
      return report;
    }
    engine->halt(); // step 4: execution of the old model stops here
    RuntimeState snapshot = engine->snapshot_state();
    CheckedModel checked = [&] {
      ParseResult pr = parse_model(pending_->model_text);
      if (!pr.ok()) throw Error(Error::Kind::ParseError, join_diagnostics(pr.diagnostics));
      return typecheck_model(std::move(pr.network));
    }();
    if (!checked.ok()) {
      report.aborted = true;
      report.reason = "new model has diagnostics: " + join_diagnostics(checked.diagnostics);
      return report;
    }
    auto new_model = std::make_shared<CheckedModel>(std::move(checked));
    std::unique_ptr<EngineInstance> next;
    try {
      // steps 6-7: load the new model, transfer matching variables, new
      // variables take their declared initializers
      next = EngineInstance::restore_state(snapshot, *engine, new_model, cfg, &report.transfer);
    } catch (const Error& e) {
      report.aborted = true;
      report.reason = e.what();
      engine->resume_from_halt(); // old model continues unchanged
      return report;
    }
    // step 5/9: signals buffered while swapping are replayed first-in-first-out
    auto buffered = engine->drain_pending_injections();
    report.buffered_signals = buffered.size();
    for (auto& [channel, payload] : buffered) {
      PayloadMap filtered;
      for (const auto& [name, value] : payload)
        if (next->leaf_table().count(name)) filtered[name] = value;
      next->inject(channel, filtered);
      ++report.replayed_signals;
    }
    applied_goals_ = pending_->goals_text;
    pending_.reset();
    ticket_.pending = false;
    engine = std::move(next); // step 8/10: the new model starts and resumes
    return report;
  }

  const std::string& applied_goals() const { return applied_goals_; }

private:
  QuiescencePredicate pred_;
  std::optional<UpdateBundle> pending_;
  UpdateTicket ticket_;
  int superseded_count_ = 0;
  std::filesystem::path watch_dir_;
  std::set<std::string> seen_;
  std::string applied_goals_;
};

} // namespace activforms::update
