#pragma once

// Episode runner for the portfolio game: per round the market announces a
// signal, the investor announces P_t, the market announces x_t, the
// investor draws p_t and holds b*(p_t | z_t), and every comparator
// compounds on the same x_t.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "calport/discretization.hpp"
#include "calport/kelly.hpp"
#include "calport/markets.hpp"

namespace calport {

struct RefinementStage {
  std::uint64_t t_start = 1;
  GridStageParams params;
};

struct RefinementSchedule {
  std::vector<RefinementStage> stages;

  static RefinementSchedule Single(const GridStageParams& params);
  // InvalidParams unless the first stage starts at round 1, starts strictly
  // increase, and epsilon and mu are nonincreasing.
  void Validate() const;
  std::size_t StageAt(std::uint64_t t) const;
};

// Stage n ends at 256 * 2^(n-1) (the last one at T_total). Per stage,
// mu = span * (log2 T_end)^(-1/(k+2)), K = ceil(span / mu) and
// epsilon = T_end^(-1/(K M + 1)), evaluated at the stage's end time and then
// coarsened (epsilon first, then K, then mu) until N <= cap. A stage that
// would be coarser than its predecessor repeats the predecessor.
RefinementSchedule RefinementScheduleDefault(std::uint64_t T_total, int k, std::uint64_t cap,
                                             double span = 1.5);

inline constexpr const char* kComparatorNames[] = {"bcrp", "cover", "piecewise", "stationary"};
inline constexpr std::size_t kComparatorCount = 4;
enum ComparatorId : std::size_t { kBcrp = 0, kCover = 1, kPiecewise = 2, kStationary = 3 };

struct ComparatorConfig {
  bool cover = true;
  int cover_quad_points = 512;
  // Signal partition for the piecewise comparator; 0 uses the last stage's K.
  std::size_t piecewise_bins = 0;
  // Stationary strategy as a table over equal signal cells; empty means the
  // uniform portfolio. Ignored when the market supplies its own comparator.
  std::vector<Portfolio> stationary_table;
};

struct EpisodeConfig {
  RefinementSchedule schedule;
  std::uint64_t rounds = 0;
  std::uint64_t seed = 0;
  ComparatorConfig comparators;
  // Replaces the uniform return grid when non-empty.
  std::vector<ReturnVector> return_grid_points;
  double game_tol = 1e-9;
  double kelly_tol = kDefaultKellyTol;
  // Diagnostics are sampled every this many rounds and at the last round.
  std::uint64_t sample_every = 1000;
};

struct StageInfo {
  std::uint64_t t_start = 1;
  std::size_t K = 0;
  std::size_t M = 0;
  std::size_t N = 0;
  std::uint64_t D = 0;
  double epsilon = 0.0;
  double mu = 0.0;
  double nu = 0.0;
  int per_axis = 0;
};

struct RoundRecord {
  std::uint64_t t = 0;
  std::size_t stage = 0;
  double signal = 0.0;
  std::size_t signal_bin = 0;
  ReturnVector x;
  std::size_t return_bin = 0;
  std::size_t forecast_index = 0;
  std::size_t announced_support = 0;
  Portfolio investor;
  // Indexed by ComparatorId. Cover is empty when not tracked.
  std::vector<Portfolio> comparators;
  double log2_investor = 0.0;
  std::vector<double> log2_comparators;
};

struct DiagnosticSample {
  std::uint64_t t = 0;
  std::size_t stage = 0;
  double calibration_score = 0.0;
  double mean_l1 = 0.0;
  double dist_l2 = 0.0;
  double dist_l1 = 0.0;
};

struct Trajectory {
  std::uint64_t seed = 0;
  std::string market;
  MarketSpec spec;
  std::vector<StageInfo> stages;
  std::vector<RoundRecord> rounds;
  std::vector<DiagnosticSample> samples;
  bool has_cover = false;
  Portfolio bcrp;
  std::vector<Portfolio> piecewise;

  // Cumulative log2 wealth; S_0 = 1.
  double log2_investor = 0.0;
  std::vector<double> log2_comparators = std::vector<double>(kComparatorCount, 0.0);

  std::uint64_t T() const { return rounds.size(); }
};

Trajectory RunEpisode(const MarketSpec& spec, const EpisodeConfig& config,
                      MarketModel& market);

}  // namespace calport
