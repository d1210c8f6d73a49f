#include <algorithm>
#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "calport/cli_io.hpp"
#include "calport/error.hpp"

namespace calport {

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

int Report(ErrorCode code, const std::string& message, const std::string& path, int status) {
  nlohmann::ordered_json err;
  err["error"]["code"] = std::string(ErrorCodeName(code));
  err["error"]["message"] = message;
  if (!path.empty()) err["error"]["path"] = path;
  err["error"]["exit_status"] = status;
  std::cerr << err.dump() << std::endl;
  return status;
}

struct RunArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> rounds;
  std::string out;
  std::string market;
  bool emit_plot_data = false;
};

int DoRun(const RunArgs& a) {
  ExperimentConfig cfg;
  std::string out_dir;
  // Everything before the first episode counts as configuration.
  try {
    cfg = LoadConfig(a.config);
    if (a.seed) cfg.seeds = {*a.seed};
    if (a.rounds) cfg.rounds = *a.rounds;
    if (!a.market.empty()) cfg.market.type = a.market;
    if (a.emit_plot_data) cfg.emit_plot_data = true;
    out_dir = cfg.out_dir;
    if (const char* env = std::getenv(kOutDirEnv); env != nullptr && *env != '\0') {
      out_dir = env;
    }
    if (!a.out.empty()) out_dir = a.out;
    FinalizeConfig(cfg);
    const auto market = MakeMarket(cfg);
    (void)MakeSchedule(cfg, ResolveRounds(cfg, *market));
  } catch (const Error& e) {
    const bool file_error = e.code() == ErrorCode::kConfigError ||
                            e.code() == ErrorCode::kIoError ||
                            e.code() == ErrorCode::kParseError ||
                            e.code() == ErrorCode::kRangeError;
    const std::string path = e.code() == ErrorCode::kConfigError ? a.config
                             : file_error                       ? cfg.market.csv_path
                                                                : std::string();
    return Report(e.code(), e.what(), path, kExitConfig);
  }

  try {
    const auto trajectories = RunExperiment(cfg);
    WriteReport(trajectories, cfg, out_dir);
    nlohmann::ordered_json ok;
    ok["status"] = "ok";
    ok["out_dir"] = out_dir;
    ok["seeds"] = trajectories.size();
    ok["rounds"] = trajectories.empty() ? 0 : trajectories.front().T();
    std::cout << ok.dump() << std::endl;
    return 0;
  } catch (const Error& e) {
    return Report(e.code(), e.what(), "", kExitRuntime);
  } catch (const std::exception& e) {
    return Report(ErrorCode::kIoError, e.what(), "", kExitRuntime);
  }
}

int DoVerify(const std::string& dir, double tol) {
  try {
    const VerifyResult r = VerifyOutputs(dir, tol);
    nlohmann::ordered_json out;
    out["status"] = r.ok() ? "ok" : "mismatch";
    out["checks"] = r.checks;
    out["failures"] = r.failures;
    (r.ok() ? std::cout : std::cerr) << out.dump() << std::endl;
    return r.ok() ? 0 : kExitRuntime;
  } catch (const Error& e) {
    return Report(e.code(), e.what(), dir, kExitRuntime);
  } catch (const std::exception& e) {
    return Report(ErrorCode::kParseError, e.what(), dir, kExitRuntime);
  }
}

}  // namespace

int RunCommand(const std::vector<std::string>& args) {
  CLI::App app{"Calibrated log-optimal portfolio simulator", "calport"};
  app.require_subcommand(1);

  RunArgs run_args;
  std::uint64_t seed = 0;
  std::uint64_t rounds = 0;
  auto* run = app.add_subcommand("run", "Run episodes and write report.json and trajectory.csv");
  run->add_option("--config", run_args.config, "Experiment config (JSON)")->required();
  auto* seed_opt = run->add_option("--seed", seed, "Run this single seed");
  auto* rounds_opt = run->add_option("--rounds", rounds, "Number of rounds T");
  run->add_option("--out", run_args.out,
                  std::string("Output directory (overrides ") + kOutDirEnv + ")");
  run->add_option("--market", run_args.market, "Market model")
      ->check(CLI::IsMember({"iid", "regime", "adversary", "calibration_adversary", "csv"}));
  run->add_flag("--emit-plot-data", run_args.emit_plot_data,
                "Also write plot_wealth.csv and plot_diagnostics.csv");

  std::string verify_dir;
  double verify_tol = 1e-9;
  auto* verify = app.add_subcommand("verify", "Recompute a report's aggregates from its CSV");
  verify->add_option("--dir", verify_dir, "Directory holding report.json and trajectory.csv")
      ->required();
  verify->add_option("--tol", verify_tol, "Agreement tolerance");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return Report(ErrorCode::kConfigError, e.what(), "", kExitConfig);
  }

  if (run->parsed()) {
    if (*seed_opt) run_args.seed = seed;
    if (*rounds_opt) run_args.rounds = rounds;
    return DoRun(run_args);
  }
  return DoVerify(verify_dir, verify_tol);
}

}  // namespace calport
