#pragma once

// Experiment configuration, CSV market ingestion, report output and the
// offline verifier behind the `calport` command line tool.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "calport/engine.hpp"
#include "calport/markets.hpp"

namespace calport {

inline constexpr const char* kReportSchemaId = "calport.report/1";
inline constexpr const char* kOutDirEnv = "CALPORT_OUT_DIR";

struct MarketConfig {
  // iid | regime | adversary | calibration_adversary | csv
  std::string type = "iid";
  MarketSpec spec;
  DiscreteReturnDist atoms;
  std::optional<double> signal;
  std::vector<DiscreteReturnDist> regimes;
  RegimeMarket::Mode regime_mode = RegimeMarket::Mode::kRandom;
  std::string csv_path;
  std::string signal_column = "signal";
};

struct ScheduleConfig {
  // Empty stages means the default refinement schedule.
  std::vector<RefinementStage> stages;
  double span = 0.0;  // 0 uses lambda2 - lambda1
};

struct ExperimentConfig {
  MarketConfig market;
  std::optional<std::uint64_t> rounds;
  std::vector<std::uint64_t> seeds = {0};
  ScheduleConfig schedule;
  std::uint64_t forecast_cap = 5000;
  std::vector<ReturnVector> return_grid;
  ComparatorConfig comparators;
  double game_tol = 1e-9;
  double kelly_tol = kDefaultKellyTol;
  std::uint64_t sample_every = 1000;
  std::string out_dir = "calport_out";
  bool emit_plot_data = false;
  // Directory relative paths in the config are resolved against.
  std::filesystem::path base_dir;
};

// ConfigError on unknown keys, wrong types or invalid values.
ExperimentConfig ParseConfig(const nlohmann::json& doc,
                             const std::filesystem::path& base_dir = {});
// ConfigError naming the path if it cannot be read or parsed.
ExperimentConfig LoadConfig(const std::filesystem::path& path);
// Fills market defaults and checks cross-field consistency; ConfigError.
void FinalizeConfig(ExperimentConfig& config);
// Normalized echo of a config (defaults filled in).
nlohmann::ordered_json ConfigToJson(const ExperimentConfig& config);

// Header names k asset columns plus optionally the signal column. ParseError
// names the row and column; RangeError lists every offending row (1-based,
// header excluded).
std::vector<MarketRow> LoadMarketCsv(const std::filesystem::path& path, const MarketSpec& spec,
                                     const std::string& signal_column = "signal");

std::unique_ptr<MarketModel> MakeMarket(const ExperimentConfig& config);
std::uint64_t ResolveRounds(const ExperimentConfig& config, const MarketModel& market);
RefinementSchedule MakeSchedule(const ExperimentConfig& config, std::uint64_t rounds);
EpisodeConfig MakeEpisodeConfig(const ExperimentConfig& config, std::uint64_t rounds,
                                std::uint64_t seed);

std::vector<Trajectory> RunExperiment(const ExperimentConfig& config);

nlohmann::ordered_json BuildReport(const std::vector<Trajectory>& trajectories,
                                   const ExperimentConfig& config);
void WriteTrajectoryCsv(const std::vector<Trajectory>& trajectories,
                        const std::filesystem::path& path);
void WritePlotData(const std::vector<Trajectory>& trajectories,
                   const std::filesystem::path& dir);
// report.json and trajectory.csv (and plot data if requested) under dir.
void WriteReport(const std::vector<Trajectory>& trajectories, const ExperimentConfig& config,
                 const std::filesystem::path& dir);

struct VerifyResult {
  std::size_t checks = 0;
  std::vector<std::string> failures;
  bool ok() const { return failures.empty(); }
};

// Recomputes every reported wealth, gap, aggregate and diagnostic sample from
// report.json and trajectory.csv in dir.
VerifyResult VerifyOutputs(const std::filesystem::path& dir, double tol = 1e-9);

// Entry point of the command line tool; returns the process exit status.
int RunCommand(const std::vector<std::string>& args);

}  // namespace calport
