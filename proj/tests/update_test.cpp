#include <gtest/gtest.h>

#include "activforms/runtime.hpp"
#include "activforms/update.hpp"

using namespace activforms;
using namespace activforms::update;

namespace {

std::string model_text(const char* name) {
  return runtime::read_file(runtime::model_dir() / name);
}

UpdateBundle verified_bundle(const std::string& model, const std::string& stubs,
                             const std::string& goals) {
  VerificationReport report =
      run_verification_suite({model, stubs}, runtime::FeedbackLoopRuntime::default_bindings());
  EXPECT_TRUE(report.passed);
  UpdateBundle b;
  b.model_text = model;
  b.goals_text = goals;
  b.report_csv = report.to_csv();
  b.report_hash = fnv1a(b.report_csv);
  return b;
}

TEST(Bundle, RoundTripThroughDirectory) {
  UpdateBundle b;
  b.model_text = "automaton A { init location L; }\nsystem A;\n";
  b.goals_text = "optimize energyConsumption min\n";
  b.report_csv = "property,verdict,states,millis\nP12,holds,10,1\n";
  b.report_hash = fnv1a(b.report_csv);
  auto dir = std::filesystem::temp_directory_path() / "af-bundle-test";
  std::filesystem::remove_all(dir);
  write_bundle(dir, b);
  UpdateBundle loaded = load_bundle(dir);
  EXPECT_EQ(loaded.model_text, b.model_text);
  EXPECT_EQ(loaded.report_hash, b.report_hash);
  validate_bundle(loaded);
}

TEST(Bundle, MissingReportRejected) {
  UpdateBundle b;
  b.model_text = "automaton A { init location L; }\nsystem A;\n";
  try {
    validate_bundle(b);
    FAIL() << "expected MissingVerificationReport";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), Error::Kind::MissingVerificationReport);
  }
}

TEST(Bundle, FailingReportRejected) {
  UpdateBundle b;
  b.model_text = "automaton A { init location L; }\nsystem A;\n";
  b.report_csv = "property,verdict,states,millis\nP6,violated,10,1\n";
  b.report_hash = fnv1a(b.report_csv);
  EXPECT_THROW(validate_bundle(b), Error);
}

TEST(Bundle, TamperedReportRejected) {
  UpdateBundle b;
  b.model_text = "automaton A { init location L; }\nsystem A;\n";
  b.report_csv = "property,verdict,states,millis\nP12,holds,10,1\n";
  b.report_hash = fnv1a(b.report_csv) ^ 1;
  EXPECT_THROW(validate_bundle(b), Error);
}

TEST(Manager, SecondSubmissionSupersedes) {
  UpdateManager mgr;
  UpdateBundle b;
  b.model_text = "automaton A { init location L; }\nsystem A;\n";
  b.goals_text = "optimize energyConsumption min\n";
  b.report_csv = "property,verdict,states,millis\nP12,holds,10,1\n";
  b.report_hash = fnv1a(b.report_csv);
  UpdateTicket t1 = mgr.submit(b);
  EXPECT_TRUE(t1.pending);
  UpdateTicket t2 = mgr.submit(b);
  EXPECT_NE(t1.id, t2.id);
  EXPECT_EQ(mgr.superseded_count(), 1);
  EXPECT_TRUE(mgr.has_pending());
}

struct MapeFixture {
  std::shared_ptr<CheckedModel> cm;
  std::unique_ptr<EngineInstance> engine;

  MapeFixture() {
    std::string text = model_text("deltaiot-mape.model");
    cm = std::make_shared<CheckedModel>(load_and_check(text));
    engine = load_model(cm);
  }
};

TEST(Quiescence, MapeModelStartsQuiescent) {
  MapeFixture fx;
  EXPECT_TRUE(detect_quiescence(*fx.engine, mape_quiescence()));
}

TEST(Quiescence, MidVerificationIsNotQuiescent) {
  MapeFixture fx;
  // drive the analyzer into RuntimeVerification via a monitor signal
  PayloadMap probe;
  probe["inPacketLoss"] = 25; // violates the loss goal -> adaptation needed
  fx.engine->bind_external_port({"monitor", ExternalPort::Direction::IntoModel, {}});
  fx.engine->inject("monitor", probe);
  fx.engine->settle();
  EXPECT_EQ(fx.engine->active_location("Analyzer"), "RuntimeVerification");
  EXPECT_FALSE(detect_quiescence(*fx.engine, mape_quiescence()));
}

TEST(Quiescence, EmptyPredicateIsVacuouslyTrue) {
  MapeFixture fx;
  EXPECT_TRUE(detect_quiescence(*fx.engine, QuiescencePredicate{}));
}

TEST(HotSwap, IdentityUpdateKeepsStateAndLocations) {
  MapeFixture fx;
  std::string text = model_text("deltaiot-mape.model");
  std::string stubs = model_text("deltaiot-stubs.model");
  UpdateManager mgr;
  mgr.submit(verified_bundle(text, stubs, "optimize energyConsumption min\n"));
  fx.engine->write_variable("packetLoss", 7);
  MachineState before = fx.engine->state();
  update::SwapReport rep = mgr.perform_hot_swap(fx.engine, {});
  ASSERT_FALSE(rep.aborted) << rep.reason;
  EXPECT_TRUE(fx.engine->state() == before);
  EXPECT_EQ(fx.engine->read_variable("packetLoss"), 7);
  EXPECT_TRUE(rep.transfer.initialized.empty());
  EXPECT_TRUE(rep.transfer.dropped.empty());
}

TEST(HotSwap, LatencyEvolutionInitializesNewVariables) {
  MapeFixture fx;
  std::string evolved = model_text("deltaiot-mape-latency.model");
  std::string stubs = model_text("deltaiot-stubs-latency.model");
  UpdateManager mgr;
  mgr.submit(verified_bundle(evolved, stubs,
                             "satisfaction packetLoss < 10\nsatisfaction latency < 5\n"
                             "optimize energyConsumption min\n"));
  fx.engine->write_variable("packetLoss", 6);
  update::SwapReport rep = mgr.perform_hot_swap(fx.engine, {});
  ASSERT_FALSE(rep.aborted) << rep.reason;
  EXPECT_EQ(fx.engine->read_variable("packetLoss"), 6); // transferred
  EXPECT_EQ(fx.engine->read_variable("latency"), 0);    // new, initialized
  bool latency_new = false;
  for (const auto& name : rep.transfer.initialized)
    if (name == "latency") latency_new = true;
  EXPECT_TRUE(latency_new);
  EXPECT_EQ(fx.engine->active_location("Monitor"), "Waiting");
}

TEST(HotSwap, BufferedSignalsSurviveFifo) {
  MapeFixture fx;
  fx.engine->bind_external_port({"monitor", ExternalPort::Direction::IntoModel, {}});
  // queue two probe signals while quiescent, then swap before processing
  fx.engine->inject("monitor", {{"inPacketLoss", 11}});
  fx.engine->inject("monitor", {{"inPacketLoss", 12}});
  UpdateManager mgr;
  mgr.submit(verified_bundle(model_text("deltaiot-mape.model"), model_text("deltaiot-stubs.model"),
                             "optimize energyConsumption min\n"));
  update::SwapReport rep = mgr.perform_hot_swap(fx.engine, {});
  ASSERT_FALSE(rep.aborted) << rep.reason;
  EXPECT_EQ(rep.buffered_signals, 2u);
  EXPECT_EQ(rep.replayed_signals, 2u);
  EXPECT_EQ(fx.engine->pending_injections(), 2u);
  // first signal processed first
  fx.engine->micro_step();
  EXPECT_EQ(fx.engine->read_variable("inPacketLoss"), 11);
}

TEST(HotSwap, TypeMismatchAbortsAndOldModelKeepsRunning) {
  MapeFixture fx;
  // incompatible update: packetLoss becomes a bool
  std::string bad = model_text("deltaiot-mape.model");
  size_t pos = bad.find("int packetLoss;");
  ASSERT_NE(pos, std::string::npos);
  bad.replace(pos, 15, "bool packetLoss;");
  UpdateBundle b;
  b.model_text = bad;
  b.goals_text = "optimize energyConsumption min\n";
  b.report_csv = "property,verdict,states,millis\nP12,holds,10,1\n";
  b.report_hash = fnv1a(b.report_csv);
  UpdateManager mgr;
  mgr.submit(b);
  fx.engine->write_variable("packetLoss", 3);
  MachineState before = fx.engine->state();
  EngineInstance* old_ptr = fx.engine.get();
  update::SwapReport rep = mgr.perform_hot_swap(fx.engine, {});
  EXPECT_TRUE(rep.aborted);
  EXPECT_EQ(fx.engine.get(), old_ptr); // same engine instance
  EXPECT_TRUE(fx.engine->state() == before);
  EXPECT_FALSE(fx.engine->halted());
}

TEST(WatchDirectory, BundlesAreIngestedOnce) {
  auto dir = std::filesystem::temp_directory_path() / "af-watch-test";
  std::filesystem::remove_all(dir);
  UpdateManager mgr;
  mgr.set_watch_directory(dir);
  mgr.poll_watch_directory();
  EXPECT_FALSE(mgr.has_pending());
  UpdateBundle b;
  b.model_text = "automaton A { init location L; }\nsystem A;\n";
  b.goals_text = "optimize energyConsumption min\n";
  b.report_csv = "property,verdict,states,millis\nP12,holds,10,1\n";
  write_bundle(dir / "push-1", b);
  mgr.poll_watch_directory();
  EXPECT_TRUE(mgr.has_pending());
  mgr.poll_watch_directory(); // no duplicate ingestion
  EXPECT_EQ(mgr.superseded_count(), 0);
}

} // namespace
