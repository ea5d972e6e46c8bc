// Command-line front end: offline verification, adaptation scenarios,
// statistical queries, live updates, reports, and scalability sweeps.

#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "activforms/checker.hpp"
#include "activforms/runtime.hpp"
#include "activforms/update.hpp"

using namespace activforms;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerificationFailure = 1;
constexpr int kExitScenarioError = 2;
constexpr int kExitConfigError = 3;

std::map<std::string, std::string> parse_bindings(const std::vector<std::string>& raw) {
  auto bindings = runtime::FeedbackLoopRuntime::default_bindings();
  for (const auto& item : raw) {
    auto eq = item.find('=');
    if (eq == std::string::npos)
      throw Error(Error::Kind::ConfigError, "bindings take the form NAME=VALUE: " + item);
    bindings[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return bindings;
}

int cmd_verify(const std::string& model, const std::vector<std::string>& stubs,
               const std::vector<std::string>& props, const std::vector<std::string>& binds,
               const std::string& report_out, size_t max_states) {
  std::vector<std::string> texts{runtime::read_file(model)};
  for (const auto& s : stubs) texts.push_back(runtime::read_file(s));
  VerificationReport report = run_verification_suite(texts, parse_bindings(binds), props, max_states);
  std::printf("%-5s %-10s %10s %10s\n", "prop", "verdict", "states", "millis");
  for (const auto& r : report.results) {
    const char* verdict = r.outcome.verdict == CheckOutcome::Verdict::Holds ? "holds"
                          : r.outcome.verdict == CheckOutcome::Verdict::Violated ? "violated"
                                                                                 : "incomplete";
    std::printf("%-5s %-10s %10zu %10.2f\n", r.id.c_str(), verdict, r.outcome.states, r.millis);
    if (!r.trace_text.empty()) {
      std::printf("  counterexample:\n");
      std::istringstream lines(r.trace_text);
      std::string line;
      while (std::getline(lines, line)) std::printf("    %s\n", line.c_str());
    }
  }
  std::printf("total: %zu states, %.1f ms, %s\n", report.states_explored, report.total_millis,
              report.passed ? "all properties hold" : "FAILED");
  if (!report_out.empty()) runtime::write_file(report_out, report.to_csv());
  return report.passed ? kExitOk : kExitVerificationFailure;
}

int cmd_smc(const std::string& model, const std::string& query_text, double epsilon, double alpha,
            uint64_t seed, int64_t runs, int threads) {
  ParseResult pr = parse_model(runtime::read_file(model));
  if (!pr.ok()) throw Error(Error::Kind::ParseError, join_diagnostics(pr.diagnostics));
  if (!query_text.empty()) {
    QueryParseResult qr = parse_query(query_text);
    if (!qr.ok()) throw Error(Error::Kind::ParseError, join_diagnostics(qr.diagnostics));
    pr.network.queries.clear();
    pr.network.queries.push_back(std::move(qr.query));
  }
  if (pr.network.queries.empty())
    throw Error(Error::Kind::ConfigError, "no query: pass --query or add one to the model");
  auto cm = std::make_shared<CheckedModel>(typecheck_model(std::move(pr.network)));
  if (!cm->ok()) throw Error(Error::Kind::ParseError, join_diagnostics(cm->diagnostics));
  const Query& q = cm->network->queries.front();
  SmcOptions opts;
  opts.threads = threads;
  if (q.kind == Query::Kind::ProbabilityEstimation) {
    Estimate est = estimate_probability(cm, q, epsilon, alpha, seed, opts);
    std::printf("kind,point,lo,hi,epsilon,alpha,runs,rule\n");
    std::printf("estimate,%.6f,%.6f,%.6f,%.4f,%.4f,%lld,%s\n", est.point, est.lo(), est.hi(),
                est.epsilon, est.alpha, static_cast<long long>(est.runs_used),
                est.rule == Estimate::StoppingRule::Sequential ? "sequential" : "chernoffCap");
    return kExitOk;
  }
  if (q.kind == Query::Kind::Simulation) {
    SimStats stats = run_simulation_query(cm, q, seed, runs, opts);
    std::printf("kind,monitor,mean,sd,sem,rsemPercent,n\n");
    for (size_t i = 0; i < stats.per_monitor.size(); ++i) {
      const auto& m = stats.per_monitor[i];
      std::printf("simulate,%zu,%.6f,%.6f,%.6f,%.4f,%zu\n", i, m.mean, m.sd, m.sem,
                  m.rsem_percent, m.n);
    }
    return kExitOk;
  }
  throw Error(Error::Kind::ConfigError,
              "the smc command handles Pr and simulate queries; use 'verify' for the rest");
}

int cmd_run(const std::string& config_path, const std::string& out_override, uint64_t seed_override,
            bool have_seed) {
  runtime::ExperimentConfig cfg = runtime::parse_experiment_config(
      runtime::read_file(config_path), std::filesystem::path(config_path).parent_path());
  if (!out_override.empty()) cfg.out_dir = out_override;
  if (have_seed) cfg.seed = seed_override;
  runtime::ScenarioResult result = runtime::run_scenario(cfg);
  std::printf("scenario %s: %zu cycles written to %s\n", cfg.scenario.c_str(), result.rows.size(),
              result.out_dir.string().c_str());
  std::printf("mean packetLoss %.3f %%, mean energy %.3f C, mean latency %.3f %%\n",
              result.summary.packet_loss.mean, result.summary.energy.mean,
              result.summary.latency.mean);
  if (result.swapped)
    std::printf("hot swap at cycle %lld: %s\n", static_cast<long long>(result.swap_report.cycle),
                result.swap_report.to_csv_row().c_str());
  return kExitOk;
}

int cmd_update_push(const std::string& bundle_dir, const std::string& watch_dir) {
  update::UpdateBundle bundle = update::load_bundle(bundle_dir);
  update::validate_bundle(bundle);
  std::string name = std::filesystem::path(bundle_dir).filename().string();
  update::write_bundle(std::filesystem::path(watch_dir) / name, bundle);
  std::printf("pushed bundle '%s' into %s\n", name.c_str(), watch_dir.c_str());
  return kExitOk;
}

int cmd_report(const std::vector<std::string>& dirs, const std::string& csv_out) {
  std::vector<std::filesystem::path> paths(dirs.begin(), dirs.end());
  runtime::ComparisonReport rep = runtime::emit_report(paths);
  std::fputs(rep.text.c_str(), stdout);
  if (!csv_out.empty()) runtime::write_file(csv_out, rep.csv);
  return kExitOk;
}

int cmd_scale(const std::vector<int>& sizes, double epsilon, double alpha, int64_t sim_runs,
              uint64_t seed, int threads, const std::string& csv_out) {
  auto points = runtime::run_scale_sweep(sizes, epsilon, alpha, sim_runs, seed, threads);
  std::ostringstream csv;
  csv << "motes,options,totalSmcSeconds,secondsPerOption\n";
  std::printf("%8s %10s %14s %16s\n", "motes", "options", "totalSeconds", "perOption");
  for (const auto& p : points) {
    std::printf("%8d %10zu %14.3f %16.6f\n", p.motes, p.options, p.total_smc_seconds,
                p.seconds_per_option);
    csv << p.motes << ',' << p.options << ',' << p.total_smc_seconds << ','
        << p.seconds_per_option << "\n";
  }
  if (!csv_out.empty()) runtime::write_file(csv_out, csv.str());
  return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"activforms: verified feedback-loop models over the DeltaIoT network"};
  app.require_subcommand(1);

  // verify
  auto* verify = app.add_subcommand("verify", "check the MAPE properties of a model plus stubs");
  std::string model;
  std::vector<std::string> stubs, props, binds;
  std::string report_out;
  size_t max_states = 1'000'000;
  verify->add_option("model", model, "model file")->required();
  verify->add_option("stubs", stubs, "stub model files");
  verify->add_option("--props", props, "property ids (default: P1..P12)");
  verify->add_option("--bind", binds, "placeholder bindings NAME=VALUE");
  verify->add_option("--report", report_out, "write the machine-readable report CSV here");
  verify->add_option("--max-states", max_states, "exploration bound");

  // run
  auto* run = app.add_subcommand("run", "run an experiment scenario");
  std::string run_config, run_out;
  uint64_t run_seed = 0;
  bool have_seed = false;
  run->add_option("config", run_config, "experiment config file")->required();
  run->add_option("--out", run_out, "output directory override");
  run->add_option("--seed", run_seed, "seed override")->each([&](const std::string&) {
    have_seed = true;
  });

  // smc
  auto* smc = app.add_subcommand("smc", "statistical query over a closed model");
  std::string smc_model, smc_query;
  double epsilon = 0.01, alpha = 0.05;
  uint64_t smc_seed = 1;
  int64_t smc_runs = 0;
  int smc_threads = 1;
  smc->add_option("model", smc_model, "model file")->required();
  smc->add_option("--query", smc_query, "query text (default: the model's first query)");
  smc->add_option("--epsilon", epsilon, "approximation half-width");
  smc->add_option("--alpha", alpha, "1 - confidence");
  smc->add_option("--seed", smc_seed, "simulation seed");
  smc->add_option("--runs", smc_runs, "simulation run count override");
  smc->add_option("--threads", smc_threads, "worker threads");

  // update push
  auto* update_cmd = app.add_subcommand("update", "live update operations");
  auto* push = update_cmd->add_subcommand("push", "push a verified bundle into a watch directory");
  std::string bundle_dir, watch_dir = "experiment-out/updates";
  push->add_option("bundle", bundle_dir, "bundle directory (model.model, goals.cfg, report.csv, MANIFEST)")
      ->required();
  push->add_option("--watch-dir", watch_dir, "watched update directory of the running scenario");

  // report
  auto* report = app.add_subcommand("report", "comparison tables over completed experiments");
  std::vector<std::string> report_dirs;
  std::string report_csv;
  report->add_option("dirs", report_dirs, "experiment directories")->required();
  report->add_option("--csv", report_csv, "write the plot-ready CSV here");

  // scale
  auto* scale = app.add_subcommand("scale", "adaptation-space scalability sweep");
  std::vector<int> sizes{5, 10, 15};
  double s_eps = 0.03, s_alpha = 0.10;
  int64_t s_runs = 30;
  uint64_t s_seed = 1;
  int s_threads = 1;
  std::string scale_csv;
  scale->add_option("--sizes", sizes, "mote counts (multiples of five)");
  scale->add_option("--epsilon", s_eps, "approximation half-width");
  scale->add_option("--alpha", s_alpha, "1 - confidence");
  scale->add_option("--runs", s_runs, "simulation run count");
  scale->add_option("--seed", s_seed, "seed");
  scale->add_option("--threads", s_threads, "worker threads");
  scale->add_option("--csv", scale_csv, "write the sweep CSV here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (verify->parsed()) return cmd_verify(model, stubs, props, binds, report_out, max_states);
    if (run->parsed()) return cmd_run(run_config, run_out, run_seed, have_seed);
    if (smc->parsed())
      return cmd_smc(smc_model, smc_query, epsilon, alpha, smc_seed, smc_runs, smc_threads);
    if (push->parsed()) return cmd_update_push(bundle_dir, watch_dir);
    if (report->parsed()) return cmd_report(report_dirs, report_csv);
    if (scale->parsed()) return cmd_scale(sizes, s_eps, s_alpha, s_runs, s_seed, s_threads, scale_csv);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    switch (e.kind()) {
      case Error::Kind::ConfigError:
      case Error::Kind::ParseError:
      case Error::Kind::UnboundParameter:
        return kExitConfigError;
      case Error::Kind::InstantiationError:
        return kExitVerificationFailure;
      default:
        return kExitScenarioError;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitScenarioError;
  }
  return kExitOk;
}
