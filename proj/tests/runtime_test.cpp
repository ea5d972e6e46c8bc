#include <gtest/gtest.h>

#include "activforms/runtime.hpp"

using namespace activforms;
using namespace activforms::runtime;

namespace {

ExperimentConfig small_config(const std::string& scenario, int cycles, uint64_t seed,
                              const std::string& out) {
  ExperimentConfig cfg;
  cfg.scenario = scenario;
  cfg.cycles = cycles;
  cfg.seed = seed;
  cfg.profile = parse_profile(read_file(model_dir() / "default.profile"));
  cfg.goals_text = read_file(model_dir() / "goals-2.cfg");
  cfg.evolved_goals_text = read_file(model_dir() / "goals-3.cfg");
  cfg.analysis.epsilon = 0.05;
  cfg.analysis.alpha = 0.10;
  cfg.analysis.sim_runs = 10;
  cfg.analysis.threads = 2;
  cfg.analysis.budget_seconds = 60;
  cfg.out_dir = std::filesystem::temp_directory_path() / out;
  std::filesystem::remove_all(cfg.out_dir);
  return cfg;
}

TEST(Runtime, AdaptiveCycleSmoke) {
  ExperimentConfig cfg = small_config("adaptive", 4, 11, "af-rt-adaptive");
  ScenarioResult result = run_scenario(cfg);
  ASSERT_EQ(result.rows.size(), 4u);
  // first cycle always analyzes (initial knowledge) and applies a plan
  EXPECT_TRUE(result.rows[0].adaptation_needed);
  EXPECT_EQ(result.rows[0].options_total, 216);
  EXPECT_GT(result.rows[0].options_verified, 0);
  for (const auto& r : result.rows) {
    EXPECT_GE(r.packet_loss_pct, 0.0);
    EXPECT_LE(r.packet_loss_pct, 100.0);
    EXPECT_GT(r.energy_coulomb, 0.0);
  }
  EXPECT_TRUE(std::filesystem::exists(cfg.out_dir / "cycles.csv"));
  EXPECT_TRUE(std::filesystem::exists(cfg.out_dir / "summary.csv"));
  EXPECT_TRUE(std::filesystem::exists(cfg.out_dir / "timings.csv"));
}

TEST(Runtime, SingleCycleCsvHasOneRow) {
  ExperimentConfig cfg = small_config("reference", 1, 2, "af-rt-one");
  ScenarioResult result = run_scenario(cfg);
  std::string csv = read_file(cfg.out_dir / "cycles.csv");
  int lines = 0;
  for (char c : csv)
    if (c == '\n') ++lines;
  EXPECT_EQ(lines, 2); // header + one row
}

TEST(Runtime, ReplayIsByteIdentical) {
  ExperimentConfig a = small_config("adaptive", 3, 21, "af-rt-replay-a");
  ExperimentConfig b = small_config("adaptive", 3, 21, "af-rt-replay-b");
  run_scenario(a);
  run_scenario(b);
  EXPECT_EQ(read_file(a.out_dir / "cycles.csv"), read_file(b.out_dir / "cycles.csv"));
  ExperimentConfig c = small_config("adaptive", 3, 22, "af-rt-replay-c");
  run_scenario(c);
  EXPECT_NE(read_file(a.out_dir / "cycles.csv"), read_file(c.out_dir / "cycles.csv"));
}

TEST(Runtime, ReferenceUsesMaxPowerThroughout) {
  ExperimentConfig cfg = small_config("reference", 3, 5, "af-rt-reference");
  FeedbackLoopRuntime runtime(cfg);
  runtime.run();
  for (const auto& s : runtime.simulator().settings()) {
    EXPECT_EQ(s.power, 15);
    EXPECT_EQ(s.distribution, 100);
  }
}

TEST(Runtime, EvolutionSwapsMidRun) {
  ExperimentConfig cfg = small_config("evolution", 6, 9, "af-rt-evolution");
  cfg.swap_cycle = 2;
  cfg.profile = parse_profile(read_file(model_dir() / "evolution.profile"));
  ScenarioResult result = run_scenario(cfg);
  EXPECT_TRUE(result.swapped);
  EXPECT_FALSE(result.swap_report.aborted);
  EXPECT_EQ(result.swap_report.buffered_signals, result.swap_report.replayed_signals);
  bool saw_swap_row = false;
  for (const auto& r : result.rows) saw_swap_row = saw_swap_row || r.swapped;
  EXPECT_TRUE(saw_swap_row);
  EXPECT_TRUE(std::filesystem::exists(cfg.out_dir / "swap.csv"));
  EXPECT_TRUE(std::filesystem::exists(cfg.out_dir / "updates" / "latency-goal" / "MANIFEST"));
}

TEST(Runtime, EmitReportComparesScenarios) {
  ExperimentConfig a = small_config("adaptive", 2, 31, "af-rt-report-a");
  ExperimentConfig b = small_config("reference", 2, 31, "af-rt-report-b");
  run_scenario(a);
  run_scenario(b);
  ComparisonReport rep = emit_report({a.out_dir, b.out_dir});
  EXPECT_NE(rep.text.find("adaptive"), std::string::npos);
  EXPECT_NE(rep.text.find("reference"), std::string::npos);
  EXPECT_NE(rep.csv.find("adaptive"), std::string::npos);
}

TEST(Runtime, EmitReportEmptyDirectoryFails) {
  auto dir = std::filesystem::temp_directory_path() / "af-rt-empty";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  try {
    emit_report({dir});
    FAIL() << "expected EmptyDirectory";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), Error::Kind::EmptyDirectory);
  }
}

TEST(Runtime, ConfigParsingAndSeedOverride) {
  std::string text =
      "scenario adaptive\ncycles 5\nseed 7\ntopology default\nepsilon 0.03\nthreads 2\n";
  ExperimentConfig cfg = parse_experiment_config(text, ".");
  EXPECT_EQ(cfg.cycles, 5);
  EXPECT_EQ(cfg.seed, 7u);
  EXPECT_DOUBLE_EQ(cfg.analysis.epsilon, 0.03);
  setenv("ACTIVFORMS_SEED", "99", 1);
  ExperimentConfig cfg2 = parse_experiment_config(text, ".");
  EXPECT_EQ(cfg2.seed, 99u);
  unsetenv("ACTIVFORMS_SEED");
  EXPECT_THROW(parse_experiment_config("cycles 0\n", "."), Error);
  EXPECT_THROW(parse_experiment_config("nonsense x\n", "."), Error);
}

TEST(Runtime, ScaleSweepCountsOptions) {
  auto points = run_scale_sweep({5, 10}, 0.1, 0.2, 3, 13, 2);
  ASSERT_EQ(points.size(), 2u);
  EXPECT_EQ(points[0].options, 6u);
  EXPECT_EQ(points[1].options, 36u);
  EXPECT_GT(points[0].total_smc_seconds, 0.0);
}

TEST(Runtime, EngineRunsFullMapeCorpusQuickly) {
  // 76 feedback-loop cycles of the composed MAPE+stubs model, virtual time
  std::string text = read_file(model_dir() / "deltaiot-mape.model") + "\n" +
                     read_file(model_dir() / "deltaiot-stubs.model");
  // merge needs distinct system lines; compose at the AST level instead
  std::vector<Diagnostic> diags;
  ParseResult a = parse_model(read_file(model_dir() / "deltaiot-mape.model"));
  ParseResult b = parse_model(read_file(model_dir() / "deltaiot-stubs.model"));
  ASSERT_TRUE(a.ok() && b.ok());
  std::vector<ModelNetwork> parts;
  parts.push_back(std::move(a.network));
  parts.push_back(std::move(b.network));
  ModelNetwork net = compose_networks(std::move(parts), diags);
  ASSERT_TRUE(diags.empty());
  auto cm = std::make_shared<CheckedModel>(typecheck_model(std::move(net)));
  ASSERT_TRUE(cm->ok()) << join_diagnostics(cm->diagnostics);
  auto engine = load_model(cm);
  int cycles = 0;
  engine->bind_external_port({"effectorDone", ExternalPort::Direction::OutOfModel, {}},
                             [&](const PayloadMap&) { ++cycles; });
  auto t0 = std::chrono::steady_clock::now();
  bool ok = engine->run_until([&] { return cycles >= 76; }, 100000);
  auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_TRUE(ok);
  EXPECT_LT(secs, 60.0);
}

} // namespace
