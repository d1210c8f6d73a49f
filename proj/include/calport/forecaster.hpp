#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <tuple>

#include "calport/approachability.hpp"
#include "calport/discretization.hpp"

namespace calport {

using Rng = std::mt19937_64;

// Uniform double in [0, 1) from the top 53 bits; identical on every platform.
inline double Uniform01(Rng& rng) { return double(rng() >> 11) * 0x1.0p-53; }

// Inverse-CDF draw over a support sorted by forecast index.
std::size_t SampleStrategy(const MixedStrategy& strategy, double u);

struct CalibrationLedger {
  // (forecast, bin, signal) -> N_T(s, i, j)
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, std::uint64_t> n_counts;
  // (forecast, signal) -> M_T(s, j)
  std::map<std::pair<std::size_t, std::size_t>, std::uint64_t> m_counts;
  std::uint64_t T = 0;

  void Record(std::size_t forecast, std::size_t bin, std::size_t signal);
};

// (1/T) sum_{j,s,i} |N_T(s,i,j) - M_T(s,j) s(i|c_j)|. EmptyHistory if T = 0.
double CalibrationScore(const CalibrationLedger& ledger, const GridSet& grids);

struct ForecastDraw {
  MixedStrategy announced;
  ConditionalForecast drawn;
  std::size_t signal = 0;
  std::uint64_t round = 0;  // 1-based round this draw belongs to
};

// Randomized calibrated forecaster. Strict alternation: Announce (or
// NextForecast), Draw, Observe. Anything else is a ProtocolViolation.
class CalibratedForecaster {
 public:
  CalibratedForecaster(std::shared_ptr<const GridSet> grids, double tol = 1e-9);

  // Announces P_t for signal index j.
  const MixedStrategy& Announce(std::size_t signal);
  // Draws p_t from the announced P_t.
  ForecastDraw Draw(Rng& rng);
  ForecastDraw NextForecast(std::size_t signal, Rng& rng);
  void Observe(const ForecastDraw& draw, std::size_t bin);

  const GridSet& grids() const { return *grids_; }
  std::shared_ptr<const GridSet> shared_grids() const { return grids_; }
  const MeanPayoff& mean() const { return mean_; }
  const CalibrationLedger& ledger() const { return ledger_; }
  std::uint64_t T() const { return mean_.T(); }
  double epsilon() const { return target_.epsilon; }
  const std::optional<MixedStrategy>& announced() const { return announced_; }

 private:
  enum class Phase { kIdle, kAnnounced, kDrawn };

  std::shared_ptr<const GridSet> grids_;
  TargetSet target_;
  double tol_;
  MeanPayoff mean_;
  CalibrationLedger ledger_;
  Phase phase_ = Phase::kIdle;
  std::size_t pending_signal_ = 0;
  std::size_t pending_forecast_ = 0;
  std::optional<MixedStrategy> announced_;
};

}  // namespace calport
