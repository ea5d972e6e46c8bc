#include <gtest/gtest.h>

#include "activforms/smc.hpp"

using namespace activforms;

namespace {

std::shared_ptr<CheckedModel> check(const std::string& text) {
  CheckedModel cm = load_and_check(text);
  EXPECT_TRUE(cm.ok()) << join_diagnostics(cm.diagnostics);
  return std::make_shared<CheckedModel>(std::move(cm));
}

const Query& first_query(const CheckedModel& cm) { return cm.network->queries.at(0); }

const char* kFairBranch = R"q(
automaton M {
  init committed location Start;
  location Hit;
  location Miss;
  edge Start -> Hit {
    weight 1;
  }
  edge Start -> Miss {
    weight 1;
  }
}
system M;
query p "Pr [<=1](<>M.Hit)";
)q";

TEST(Smc, CertainEventEstimatesOne) {
  const char* text = R"q(
automaton M {
  init committed location Start;
  location Goal;
  edge Start -> Goal {
  }
}
system M;
query p "Pr [<=1](<>M.Goal)";
)q";
  auto cm = check(text);
  Estimate est = estimate_probability(cm, first_query(*cm), 0.05, 0.05, 1);
  EXPECT_DOUBLE_EQ(est.point, 1.0);
  EXPECT_GE(est.runs_used, 30);
  EXPECT_LT(est.runs_used, 80); // stops shortly after warm-up
  EXPECT_EQ(est.rule, Estimate::StoppingRule::Sequential);
}

TEST(Smc, FairBranchEstimateNearHalf) {
  auto cm = check(kFairBranch);
  Estimate est = estimate_probability(cm, first_query(*cm), 0.05, 0.05, 42);
  EXPECT_NEAR(est.point, 0.5, 0.06);
  EXPECT_LE(est.runs_used, required_runs_chernoff(0.05, 0.05));
}

TEST(Smc, SeedReproducibility) {
  auto cm = check(kFairBranch);
  Estimate a = estimate_probability(cm, first_query(*cm), 0.05, 0.05, 7);
  Estimate b = estimate_probability(cm, first_query(*cm), 0.05, 0.05, 7);
  EXPECT_EQ(a.point, b.point);
  EXPECT_EQ(a.runs_used, b.runs_used);
  Estimate c = estimate_probability(cm, first_query(*cm), 0.05, 0.05, 8);
  EXPECT_NE(a.runs_used == c.runs_used && a.point == c.point, true);
}

TEST(Smc, ParallelMatchesSequential) {
  auto cm = check(kFairBranch);
  SmcOptions seq;
  seq.threads = 1;
  SmcOptions par;
  par.threads = 4;
  Estimate a = estimate_probability(cm, first_query(*cm), 0.02, 0.05, 11, seq);
  Estimate b = estimate_probability(cm, first_query(*cm), 0.02, 0.05, 11, par);
  EXPECT_EQ(a.point, b.point);
  EXPECT_EQ(a.runs_used, b.runs_used);
}

TEST(Smc, CoverageOnFairBranch) {
  // scaled-down calibration check; the acceptance suite runs the full 200
  auto cm = check(kFairBranch);
  int contains = 0;
  const int reps = 60;
  for (int i = 0; i < reps; ++i) {
    Estimate est = estimate_probability(cm, first_query(*cm), 0.05, 0.05, 1000 + i);
    if (est.point - est.epsilon <= 0.5 && 0.5 <= est.point + est.epsilon) ++contains;
  }
  EXPECT_GE(contains, reps * 85 / 100);
}

TEST(Smc, MonotoneCostInEpsilon) {
  auto cm = check(kFairBranch);
  double mean_tight = 0, mean_loose = 0;
  const int reps = 5;
  for (int i = 0; i < reps; ++i) {
    mean_loose += static_cast<double>(
        estimate_probability(cm, first_query(*cm), 0.05, 0.05, 100 + i).runs_used);
    mean_tight += static_cast<double>(
        estimate_probability(cm, first_query(*cm), 0.01, 0.05, 100 + i).runs_used);
  }
  EXPECT_GE(mean_tight / mean_loose, 5.0);
}

TEST(Smc, DomainErrorOnBadEpsilon) {
  auto cm = check(kFairBranch);
  EXPECT_THROW(estimate_probability(cm, first_query(*cm), 1.5, 0.05, 1), Error);
}

TEST(Smc, CancellationHonored) {
  auto cm = check(kFairBranch);
  std::atomic<bool> cancel{true};
  SmcOptions opts;
  opts.cancel = &cancel;
  try {
    estimate_probability(cm, first_query(*cm), 0.001, 0.01, 1, opts);
    FAIL() << "expected Cancelled";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), Error::Kind::Cancelled);
  }
}

TEST(Smc, SimulationConstantMonitorHasZeroSpread) {
  const char* text = R"q(
int value = 17;
automaton M {
  init location L;
}
system M;
query s "simulate 1[<=5](value)";
)q";
  auto cm = check(text);
  SimStats stats = run_simulation_query(cm, first_query(*cm), 3, 30);
  ASSERT_EQ(stats.per_monitor.size(), 1u);
  EXPECT_DOUBLE_EQ(stats.per_monitor[0].mean, 17.0);
  EXPECT_DOUBLE_EQ(stats.per_monitor[0].sd, 0.0);
  EXPECT_DOUBLE_EQ(stats.per_monitor[0].rsem_percent, 0.0);
  EXPECT_EQ(stats.runs, 30);
}

TEST(Smc, SimulationSamplesAtRunEnd) {
  // a counter that increments once per tick up to the bound
  const char* text = R"q(
int ticks = 0;
automaton M {
  clock y;
  init location L {
    invariant y <= 1;
  }
  edge L -> L {
    guard y >= 1;
    update ticks += 1, y = 0;
  }
}
system M;
query s "simulate 1[<=10](ticks)";
)q";
  auto cm = check(text);
  SimStats stats = run_simulation_query(cm, first_query(*cm), 3, 10);
  EXPECT_NEAR(stats.per_monitor[0].mean, 10.0, 1.0);
}

TEST(Smc, BoundedUniformDelayCoversWindow) {
  // departure allowed anywhere in y in [1,3]; all three outcomes appear
  const char* text = R"q(
int departed_at = 0;
automaton M {
  clock y;
  init location W {
    invariant y <= 3;
  }
  location Done;
  edge W -> Done {
    guard y >= 1;
    update departed_at = y;
  }
}
system M;
query s "simulate 1[<=10](departed_at)";
)q";
  auto cm = check(text);
  std::vector<int> seen(5, 0);
  StochasticRunner runner(cm);
  const Query& q = first_query(*cm);
  for (int i = 0; i < 200; ++i) {
    auto r = runner.run(mix_seed(9, i), q.time_bound, nullptr, {q.monitors[0].get()});
    ASSERT_GE(r.monitors[0], 1);
    ASSERT_LE(r.monitors[0], 3);
    seen[static_cast<size_t>(r.monitors[0])]++;
  }
  EXPECT_GT(seen[1], 0);
  EXPECT_GT(seen[2], 0);
  EXPECT_GT(seen[3], 0);
}

TEST(Smc, ProbabilityWithTimedReachability) {
  const char* text = R"q(
automaton M {
  clock y;
  init location W {
    invariant y <= 2;
  }
  location Done;
  edge W -> Done {
    guard y >= 1;
  }
}
system M;
query p "Pr [<=5](<>M.Done)";
)q";
  auto cm = check(text);
  Estimate est = estimate_probability(cm, first_query(*cm), 0.05, 0.05, 5);
  EXPECT_DOUBLE_EQ(est.point, 1.0);
}

} // namespace
