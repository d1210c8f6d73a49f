#pragma once

// Market models for the portfolio game. A market first announces a signal,
// then (after the investor has announced P_t) a return vector.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "calport/approachability.hpp"
#include "calport/discretization.hpp"
#include "calport/forecaster.hpp"
#include "calport/kelly.hpp"

namespace calport {

// What an adaptive market may see when choosing x_t.
struct MarketContext {
  std::uint64_t t = 0;
  const GridSet* grids = nullptr;
  std::size_t signal_index = 0;
  const MixedStrategy* announced = nullptr;
  // e_t = E_{P_t} b*(p_t | z_t); filled for adaptive markets only.
  std::vector<double> expected_portfolio;
  // sum_i P_t(i) s_i(.|c_j); filled for adaptive markets only.
  std::vector<double> expected_row;
};

class MarketModel {
 public:
  enum class Access { kOblivious, kAdaptive };

  virtual ~MarketModel() = default;

  virtual std::string name() const = 0;
  virtual const MarketSpec& spec() const = 0;
  virtual Access access() const { return Access::kOblivious; }
  // Number of rounds available (replayed data); nullopt when unbounded.
  virtual std::optional<std::uint64_t> length() const { return std::nullopt; }

  virtual double NextSignal(std::uint64_t t, Rng& rng) = 0;
  virtual ReturnVector NextReturn(const MarketContext& ctx, Rng& rng) = 0;

  // Stationary comparator the market defines for this round, if any.
  virtual std::optional<Portfolio> Comparator(const MarketContext&) const {
    return std::nullopt;
  }

  // Fresh copy with the initial state, for running another seed.
  virtual std::unique_ptr<MarketModel> Clone() const = 0;
};

// x_t i.i.d. from a fixed atom distribution; z_t constant.
class IidMarket : public MarketModel {
 public:
  IidMarket(MarketSpec spec, DiscreteReturnDist dist, std::optional<double> signal = {});

  std::string name() const override { return "iid"; }
  const MarketSpec& spec() const override { return spec_; }
  double NextSignal(std::uint64_t t, Rng& rng) override;
  ReturnVector NextReturn(const MarketContext& ctx, Rng& rng) override;
  std::unique_ptr<MarketModel> Clone() const override {
    return std::make_unique<IidMarket>(*this);
  }

 private:
  MarketSpec spec_;
  DiscreteReturnDist dist_;
  double signal_;
};

// R regimes splitting the signal interval into equal cells. Each round picks
// a regime (cycling or uniformly at random), emits a signal uniform in its
// cell and draws x_t from that regime's atoms.
class RegimeMarket : public MarketModel {
 public:
  enum class Mode { kCycle, kRandom };

  RegimeMarket(MarketSpec spec, std::vector<DiscreteReturnDist> regimes, Mode mode);

  std::string name() const override { return "regime"; }
  const MarketSpec& spec() const override { return spec_; }
  double NextSignal(std::uint64_t t, Rng& rng) override;
  ReturnVector NextReturn(const MarketContext& ctx, Rng& rng) override;
  std::unique_ptr<MarketModel> Clone() const override {
    return std::make_unique<RegimeMarket>(*this);
  }

  std::size_t regime_count() const { return regimes_.size(); }

 private:
  MarketSpec spec_;
  std::vector<DiscreteReturnDist> regimes_;
  Mode mode_;
  std::size_t current_ = 0;
};

// Two assets. Sees e_t and plays x_t = (2,1) if e_{1,t} <= 1/2, else (1,2);
// its comparator puts everything on the asset that doubles.
class DiscontinuousAdversary : public MarketModel {
 public:
  explicit DiscontinuousAdversary(MarketSpec spec);

  std::string name() const override { return "adversary"; }
  const MarketSpec& spec() const override { return spec_; }
  Access access() const override { return Access::kAdaptive; }
  double NextSignal(std::uint64_t t, Rng& rng) override;
  ReturnVector NextReturn(const MarketContext& ctx, Rng& rng) override;
  std::optional<Portfolio> Comparator(const MarketContext& ctx) const override;
  std::unique_ptr<MarketModel> Clone() const override {
    return std::make_unique<DiscontinuousAdversary>(*this);
  }

 private:
  MarketSpec spec_;
};

// Emits the return-grid point the announced forecast mixture considers least
// likely under the current signal (ties to the lowest bin).
class CalibrationAdversary : public MarketModel {
 public:
  explicit CalibrationAdversary(MarketSpec spec, std::optional<double> signal = {});

  std::string name() const override { return "calibration_adversary"; }
  const MarketSpec& spec() const override { return spec_; }
  Access access() const override { return Access::kAdaptive; }
  double NextSignal(std::uint64_t t, Rng& rng) override;
  ReturnVector NextReturn(const MarketContext& ctx, Rng& rng) override;
  std::unique_ptr<MarketModel> Clone() const override {
    return std::make_unique<CalibrationAdversary>(*this);
  }

 private:
  MarketSpec spec_;
  double signal_;
};

struct MarketRow {
  std::optional<double> signal;
  ReturnVector x;
};

// Replays recorded rows; rows without a signal use the interval midpoint.
class ReplayMarket : public MarketModel {
 public:
  ReplayMarket(MarketSpec spec, std::vector<MarketRow> rows);

  std::string name() const override { return "csv"; }
  const MarketSpec& spec() const override { return spec_; }
  std::optional<std::uint64_t> length() const override { return rows_.size(); }
  double NextSignal(std::uint64_t t, Rng& rng) override;
  ReturnVector NextReturn(const MarketContext& ctx, Rng& rng) override;
  std::unique_ptr<MarketModel> Clone() const override {
    return std::make_unique<ReplayMarket>(*this);
  }

 private:
  MarketSpec spec_;
  std::vector<MarketRow> rows_;
};

// Draw from a discrete distribution by inverse CDF on one uniform.
const ReturnVector& SampleAtom(const DiscreteReturnDist& dist, Rng& rng);

}  // namespace calport
