#include "calport/forecaster.hpp"

#include <cmath>
#include <sstream>

#include "calport/error.hpp"

namespace calport {

std::size_t SampleStrategy(const MixedStrategy& strategy, double u) {
  if (strategy.support.empty()) Fail(ErrorCode::kInvalidParams, "empty strategy");
  double cum = 0.0;
  for (const auto& [forecast, prob] : strategy.support) {
    cum += prob;
    if (u < cum) return forecast;
  }
  // Rounding left the total a hair below u.
  for (auto it = strategy.support.rbegin(); it != strategy.support.rend(); ++it) {
    if (it->second > 0.0) return it->first;
  }
  return strategy.support.back().first;
}

void CalibrationLedger::Record(std::size_t forecast, std::size_t bin, std::size_t signal) {
  ++n_counts[{forecast, bin, signal}];
  ++m_counts[{forecast, signal}];
  ++T;
}

double CalibrationScore(const CalibrationLedger& ledger, const GridSet& grids) {
  if (ledger.T == 0) Fail(ErrorCode::kEmptyHistory, "calibration score needs T >= 1");
  double acc = 0.0;
  for (const auto& [key, m_count] : ledger.m_counts) {
    const auto [s, j] = key;
    auto row = grids.forecasts.Row(s, j);
    for (std::size_t i = 0; i < grids.M(); ++i) {
      auto it = ledger.n_counts.find({s, i, j});
      const double n = it == ledger.n_counts.end() ? 0.0 : double(it->second);
      acc += std::abs(n - double(m_count) * row[i]);
    }
  }
  return acc / double(ledger.T);
}

CalibratedForecaster::CalibratedForecaster(std::shared_ptr<const GridSet> grids, double tol)
    : grids_(std::move(grids)), tol_(tol) {
  if (!grids_) Fail(ErrorCode::kInvalidParams, "forecaster needs grids");
  target_.epsilon = grids_->params.epsilon;
  mean_ = MeanPayoff(grids_->M());
}

const MixedStrategy& CalibratedForecaster::Announce(std::size_t signal) {
  if (phase_ != Phase::kIdle) {
    Fail(ErrorCode::kProtocolViolation, "announce before the previous outcome was observed");
  }
  if (signal >= grids_->K()) Fail(ErrorCode::kIndexOutOfRange, "signal index out of range");
  announced_ = BlackwellStrategy(mean_, target_, *grids_, tol_);
  pending_signal_ = signal;
  phase_ = Phase::kAnnounced;
  return *announced_;
}

ForecastDraw CalibratedForecaster::Draw(Rng& rng) {
  if (phase_ != Phase::kAnnounced) {
    Fail(ErrorCode::kProtocolViolation, "draw requires a fresh announcement");
  }
  ForecastDraw d;
  d.announced = *announced_;
  d.signal = pending_signal_;
  d.round = mean_.T() + 1;
  const std::size_t index = SampleStrategy(d.announced, Uniform01(rng));
  d.drawn = grids_->forecasts.Forecast(index);
  pending_forecast_ = index;
  phase_ = Phase::kDrawn;
  return d;
}

ForecastDraw CalibratedForecaster::NextForecast(std::size_t signal, Rng& rng) {
  Announce(signal);
  return Draw(rng);
}

void CalibratedForecaster::Observe(const ForecastDraw& draw, std::size_t bin) {
  if (phase_ != Phase::kDrawn || draw.round != mean_.T() + 1 ||
      draw.drawn.grid_index != pending_forecast_ || draw.signal != pending_signal_) {
    Fail(ErrorCode::kProtocolViolation,
         "observe must follow the draw it refers to, exactly once");
  }
  if (bin >= grids_->M()) Fail(ErrorCode::kIndexOutOfRange, "return bin out of range");
  ledger_.Record(pending_forecast_, bin, pending_signal_);
  mean_.Add(PayoffVector(pending_forecast_, pending_signal_, bin, *grids_));
  phase_ = Phase::kIdle;
}

}  // namespace calport
