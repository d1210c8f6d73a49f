#include "calport/markets.hpp"

#include <algorithm>
#include <sstream>

#include "calport/error.hpp"

namespace calport {

namespace {

void CheckDistWithin(const MarketSpec& spec, const DiscreteReturnDist& dist) {
  dist.Validate();
  for (const auto& a : dist.atoms) {
    if (static_cast<int>(a.x.size()) != spec.k) {
      Fail(ErrorCode::kInvalidParams, "market atom has wrong dimension");
    }
    for (double v : a.x) {
      if (v < spec.lambda1 || v > spec.lambda2) {
        std::ostringstream msg;
        msg << "market atom coordinate " << v << " outside [" << spec.lambda1 << ", "
            << spec.lambda2 << "]";
        Fail(ErrorCode::kInvalidParams, msg.str());
      }
    }
  }
}

double Midpoint(const MarketSpec& spec) { return 0.5 * (spec.signal_lo + spec.signal_hi); }

}  // namespace

const ReturnVector& SampleAtom(const DiscreteReturnDist& dist, Rng& rng) {
  const double u = Uniform01(rng);
  double cum = 0.0;
  for (const auto& a : dist.atoms) {
    cum += a.p;
    if (u < cum) return a.x;
  }
  for (auto it = dist.atoms.rbegin(); it != dist.atoms.rend(); ++it) {
    if (it->p > 0.0) return it->x;
  }
  return dist.atoms.back().x;
}

// ---------------------------------------------------------------------------

IidMarket::IidMarket(MarketSpec spec, DiscreteReturnDist dist, std::optional<double> signal)
    : spec_(spec), dist_(std::move(dist)), signal_(signal.value_or(Midpoint(spec))) {
  spec_.Validate();
  CheckDistWithin(spec_, dist_);
}

double IidMarket::NextSignal(std::uint64_t, Rng&) { return signal_; }

ReturnVector IidMarket::NextReturn(const MarketContext&, Rng& rng) {
  return SampleAtom(dist_, rng);
}

// ---------------------------------------------------------------------------

RegimeMarket::RegimeMarket(MarketSpec spec, std::vector<DiscreteReturnDist> regimes,
                           Mode mode)
    : spec_(spec), regimes_(std::move(regimes)), mode_(mode) {
  spec_.Validate();
  if (regimes_.empty()) Fail(ErrorCode::kInvalidParams, "regime market needs regimes");
  for (const auto& d : regimes_) CheckDistWithin(spec_, d);
}

double RegimeMarket::NextSignal(std::uint64_t t, Rng& rng) {
  const std::size_t R = regimes_.size();
  if (mode_ == Mode::kCycle) {
    current_ = static_cast<std::size_t>((t - 1) % R);
  } else {
    current_ = std::min<std::size_t>(R - 1, static_cast<std::size_t>(Uniform01(rng) * R));
  }
  const double width = (spec_.signal_hi - spec_.signal_lo) / double(R);
  const double z = spec_.signal_lo + width * (double(current_) + Uniform01(rng));
  return std::clamp(z, spec_.signal_lo, spec_.signal_hi);
}

ReturnVector RegimeMarket::NextReturn(const MarketContext&, Rng& rng) {
  return SampleAtom(regimes_[current_], rng);
}

// ---------------------------------------------------------------------------

DiscontinuousAdversary::DiscontinuousAdversary(MarketSpec spec) : spec_(spec) {
  spec_.Validate();
  if (spec_.k != 2) Fail(ErrorCode::kInvalidParams, "adversary market needs k = 2");
  if (spec_.lambda1 > 1.0 || spec_.lambda2 < 2.0) {
    Fail(ErrorCode::kInvalidParams, "adversary market needs [1, 2] inside the bounds");
  }
}

double DiscontinuousAdversary::NextSignal(std::uint64_t, Rng&) { return Midpoint(spec_); }

ReturnVector DiscontinuousAdversary::NextReturn(const MarketContext& ctx, Rng&) {
  if (ctx.expected_portfolio.size() != 2) {
    Fail(ErrorCode::kMarketContractViolation, "adversary needs the expected portfolio");
  }
  if (ctx.expected_portfolio[0] <= 0.5) return {2.0, 1.0};
  return {1.0, 2.0};
}

std::optional<Portfolio> DiscontinuousAdversary::Comparator(const MarketContext& ctx) const {
  if (ctx.expected_portfolio.size() != 2) return std::nullopt;
  return ctx.expected_portfolio[0] <= 0.5 ? Portfolio{{1.0, 0.0}} : Portfolio{{0.0, 1.0}};
}

// ---------------------------------------------------------------------------

CalibrationAdversary::CalibrationAdversary(MarketSpec spec, std::optional<double> signal)
    : spec_(spec), signal_(signal.value_or(Midpoint(spec))) {
  spec_.Validate();
}

double CalibrationAdversary::NextSignal(std::uint64_t, Rng&) { return signal_; }

ReturnVector CalibrationAdversary::NextReturn(const MarketContext& ctx, Rng&) {
  if (ctx.grids == nullptr || ctx.expected_row.size() != ctx.grids->M()) {
    Fail(ErrorCode::kMarketContractViolation, "calibration adversary needs the announced row");
  }
  const auto it = std::min_element(ctx.expected_row.begin(), ctx.expected_row.end());
  return ctx.grids->returns.point(static_cast<std::size_t>(it - ctx.expected_row.begin()));
}

// ---------------------------------------------------------------------------

ReplayMarket::ReplayMarket(MarketSpec spec, std::vector<MarketRow> rows)
    : spec_(spec), rows_(std::move(rows)) {
  spec_.Validate();
}

double ReplayMarket::NextSignal(std::uint64_t t, Rng&) {
  if (t == 0 || t > rows_.size()) {
    Fail(ErrorCode::kMarketContractViolation, "replay market ran out of rows");
  }
  return rows_[t - 1].signal.value_or(Midpoint(spec_));
}

ReturnVector ReplayMarket::NextReturn(const MarketContext& ctx, Rng&) {
  if (ctx.t == 0 || ctx.t > rows_.size()) {
    Fail(ErrorCode::kMarketContractViolation, "replay market ran out of rows");
  }
  return rows_[ctx.t - 1].x;
}

}  // namespace calport
