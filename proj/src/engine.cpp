#include "calport/engine.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

#include "calport/approachability.hpp"
#include "calport/error.hpp"
#include "calport/forecaster.hpp"

namespace calport {

RefinementSchedule RefinementSchedule::Single(const GridStageParams& params) {
  RefinementSchedule s;
  s.stages.push_back({1, params});
  return s;
}

void RefinementSchedule::Validate() const {
  if (stages.empty()) Fail(ErrorCode::kInvalidParams, "schedule has no stages");
  if (stages.front().t_start != 1) {
    Fail(ErrorCode::kInvalidParams, "first stage must start at round 1");
  }
  for (std::size_t n = 1; n < stages.size(); ++n) {
    const auto& prev = stages[n - 1];
    const auto& cur = stages[n];
    if (cur.t_start <= prev.t_start) {
      Fail(ErrorCode::kInvalidParams, "stage start times must strictly increase");
    }
    if (cur.params.epsilon > prev.params.epsilon || cur.params.mu > prev.params.mu) {
      Fail(ErrorCode::kInvalidParams, "stage epsilon and mu must be nonincreasing");
    }
  }
}

std::size_t RefinementSchedule::StageAt(std::uint64_t t) const {
  std::size_t n = 0;
  while (n + 1 < stages.size() && stages[n + 1].t_start <= t) ++n;
  return n;
}

namespace {

struct StageGrid {
  int K;
  double mu;
  double epsilon;
};

std::uint64_t ReturnCount(const MarketSpec& spec, double mu) {
  const int per_axis = ReturnGrid::PerAxisFor(spec, mu);
  return static_cast<std::uint64_t>(std::llround(std::pow(double(per_axis), spec.k)));
}

// Coarsens a stage until its forecast grid fits the cap.
bool ClampToCap(const MarketSpec& spec, std::uint64_t cap, StageGrid& g) {
  for (;;) {
    const std::uint64_t M = ReturnCount(spec, g.mu);
    if (M > 1'000'000) {
      g.mu *= 2.0;
      continue;
    }
    const std::uint64_t N = ForecastGridSize(M, g.K, g.epsilon);
    if (N <= cap) return true;
    std::uint64_t D = LatticeDenominator(M, g.epsilon);
    if (D > 1) {
      while (D > 1) {
        --D;
        std::uint64_t per = SimplexLatticeCount(D, M);
        long double n = 1;
        for (int j = 0; j < g.K; ++j) n *= per;
        if (n <= cap) break;
      }
      g.epsilon = double(M - 1) / double(D);
      continue;
    }
    if (g.K > 1) {
      --g.K;
      continue;
    }
    const int per_axis = ReturnGrid::PerAxisFor(spec, g.mu);
    if (per_axis > 2) {
      // Smallest mu that yields one point fewer per axis.
      const double span = spec.lambda2 - spec.lambda1;
      g.mu = span * std::sqrt(double(spec.k)) / (2.0 * double(per_axis - 2));
      continue;
    }
    return false;
  }
}

}  // namespace

RefinementSchedule RefinementScheduleDefault(std::uint64_t T_total, int k, std::uint64_t cap,
                                             double span) {
  if (T_total < 1) Fail(ErrorCode::kInvalidParams, "T_total must be >= 1");
  if (k < 1) Fail(ErrorCode::kInvalidParams, "k must be >= 1");
  if (!(span > 0.0)) Fail(ErrorCode::kInvalidParams, "span must be > 0");
  MarketSpec box;
  box.k = k;
  box.lambda1 = 1.0;
  box.lambda2 = 1.0 + span;

  constexpr std::uint64_t kFirstEnd = 256;
  std::vector<std::uint64_t> ends;
  for (std::uint64_t e = kFirstEnd;; e *= 2) {
    ends.push_back(std::min(e, T_total));
    if (e >= T_total) break;
  }

  RefinementSchedule sched;
  StageGrid prev{};
  for (std::size_t n = 0; n < ends.size(); ++n) {
    const double t_end = double(std::max<std::uint64_t>(ends[n], 4));
    StageGrid g;
    g.mu = span * std::pow(std::log2(t_end), -1.0 / double(k + 2));
    g.K = std::max(1, static_cast<int>(std::ceil(span / g.mu - 1e-12)));
    const double M = double(ReturnCount(box, g.mu));
    g.epsilon = std::min(1.0, std::pow(t_end, -1.0 / (double(g.K) * M + 1.0)));

    StageGrid raw = g;
    if (!ClampToCap(box, cap, g)) {
      std::ostringstream msg;
      msg << "even the coarsest grid (K = 1, 2 points per axis, k = " << k
          << ") exceeds the forecast cap " << cap;
      Fail(ErrorCode::kCapExceeded, msg.str());
    }
    const bool clamped = g.K != raw.K || g.mu != raw.mu || g.epsilon != raw.epsilon;
    if (n == 0 && clamped) {
      GridStageParams p{g.K, g.mu, g.epsilon, 0.0, cap};
      return RefinementSchedule::Single(p);
    }
    if (n > 0 && (g.epsilon > prev.epsilon || g.mu > prev.mu)) g = prev;
    RefinementStage st;
    st.t_start = n == 0 ? 1 : ends[n - 1] + 1;
    st.params = GridStageParams{g.K, g.mu, g.epsilon, 0.0, cap};
    sched.stages.push_back(st);
    prev = g;
  }
  return sched;
}

// ---------------------------------------------------------------------------

namespace {

class KellyCache {
 public:
  KellyCache(const GridSet& grids, double tol)
      : grids_(grids), tol_(tol), cache_(grids.forecasts.per_signal_size()) {}

  const Portfolio& For(std::size_t forecast, std::size_t signal) {
    const std::size_t point = grids_.forecasts.Digit(forecast, signal);
    auto& slot = cache_[point];
    if (!slot) {
      DiscreteReturnDist dist;
      auto row = grids_.forecasts.lattice_row(point);
      for (std::size_t m = 0; m < row.size(); ++m) {
        if (row[m] > 0.0) dist.atoms.push_back({grids_.returns.point(m), row[m]});
      }
      double total = 0.0;
      for (const auto& a : dist.atoms) total += a.p;
      for (auto& a : dist.atoms) a.p /= total;
      slot = LogOptimalPortfolio(dist, tol_);
    }
    return *slot;
  }

 private:
  const GridSet& grids_;
  double tol_;
  std::vector<std::optional<Portfolio>> cache_;
};

void CheckSignal(const MarketSpec& spec, double z, std::uint64_t t) {
  if (!(z >= spec.signal_lo && z <= spec.signal_hi)) {
    std::ostringstream msg;
    msg << "market signal " << z << " at round " << t << " outside [" << spec.signal_lo
        << ", " << spec.signal_hi << "]";
    Fail(ErrorCode::kMarketContractViolation, msg.str());
  }
}

void CheckReturn(const MarketSpec& spec, const ReturnVector& x, std::uint64_t t) {
  bool ok = static_cast<int>(x.size()) == spec.k;
  for (double v : x) ok = ok && v >= spec.lambda1 && v <= spec.lambda2;
  if (!ok) {
    std::ostringstream msg;
    msg << "market return at round " << t << " violates the bounds [" << spec.lambda1 << ", "
        << spec.lambda2 << "]^" << spec.k;
    Fail(ErrorCode::kMarketContractViolation, msg.str());
  }
}

StageInfo Describe(const GridSet& g, std::uint64_t t_start) {
  StageInfo s;
  s.t_start = t_start;
  s.K = g.K();
  s.M = g.M();
  s.N = g.N();
  s.D = g.forecasts.D();
  s.epsilon = g.params.epsilon;
  s.mu = g.params.mu;
  s.nu = g.signals.nu();
  s.per_axis = g.returns.per_axis();
  return s;
}

std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

Trajectory RunEpisode(const MarketSpec& spec, const EpisodeConfig& config,
                      MarketModel& market) {
  spec.Validate();
  config.schedule.Validate();
  const std::size_t k = static_cast<std::size_t>(spec.k);
  if (market.length() && *market.length() < config.rounds) {
    std::ostringstream msg;
    msg << "market provides " << *market.length() << " rounds, " << config.rounds
        << " requested";
    Fail(ErrorCode::kInvalidParams, msg.str());
  }
  for (const auto& b : config.comparators.stationary_table) {
    if (b.size() != k) Fail(ErrorCode::kInvalidParams, "stationary table has wrong dimension");
    b.Validate();
  }

  Trajectory traj;
  traj.seed = config.seed;
  traj.market = market.name();
  traj.spec = spec;
  traj.has_cover = config.comparators.cover && spec.k == 2;

  Rng investor_rng(SplitMix64(config.seed ^ 0x1ull));
  Rng market_rng(SplitMix64(config.seed ^ 0x2ull));

  std::shared_ptr<const GridSet> grids;
  std::unique_ptr<CalibratedForecaster> forecaster;
  std::unique_ptr<KellyCache> kelly;
  std::size_t stage = 0;

  std::optional<SignalGrid> stationary_cells;
  if (!config.comparators.stationary_table.empty()) {
    stationary_cells.emplace(spec.signal_lo, spec.signal_hi,
                             static_cast<int>(config.comparators.stationary_table.size()));
  }
  std::optional<CoverMixture> cover;
  if (traj.has_cover) cover.emplace(config.comparators.cover_quad_points);

  traj.rounds.reserve(config.rounds);
  const bool adaptive = market.access() == MarketModel::Access::kAdaptive;

  for (std::uint64_t t = 1; t <= config.rounds; ++t) {
    const std::size_t n = config.schedule.StageAt(t);
    if (!grids || n != stage) {
      stage = n;
      grids = std::make_shared<const GridSet>(BuildGrids(
          spec, config.schedule.stages[n].params, config.return_grid_points));
      forecaster = std::make_unique<CalibratedForecaster>(grids, config.game_tol);
      kelly = std::make_unique<KellyCache>(*grids, config.kelly_tol);
      traj.stages.push_back(Describe(*grids, t));
    }

    // Market announces z_t.
    const double z = market.NextSignal(t, market_rng);
    CheckSignal(spec, z, t);
    const std::size_t j = grids->signals.Quantize(z);

    // Investor announces P_t.
    const MixedStrategy& announced = forecaster->Announce(j);

    MarketContext ctx;
    ctx.t = t;
    ctx.grids = grids.get();
    ctx.signal_index = j;
    ctx.announced = &announced;
    if (adaptive) {
      ctx.expected_portfolio.assign(k, 0.0);
      ctx.expected_row.assign(grids->M(), 0.0);
      for (const auto& [i, p] : announced.support) {
        const Portfolio& b = kelly->For(i, j);
        for (std::size_t c = 0; c < k; ++c) ctx.expected_portfolio[c] += p * b.weights[c];
        auto row = grids->forecasts.Row(i, j);
        for (std::size_t m = 0; m < row.size(); ++m) ctx.expected_row[m] += p * row[m];
      }
    }

    // Market announces x_t.
    ReturnVector x = market.NextReturn(ctx, market_rng);
    CheckReturn(spec, x, t);
    const std::size_t bin = grids->returns.Quantize(x);

    // Investor draws p_t and holds b*(p_t | z_t).
    const ForecastDraw draw = forecaster->Draw(investor_rng);
    RoundRecord rec;
    rec.t = t;
    rec.stage = stage;
    rec.signal = z;
    rec.signal_bin = j;
    rec.return_bin = bin;
    rec.forecast_index = draw.drawn.grid_index;
    rec.announced_support = announced.support.size();
    rec.investor = kelly->For(draw.drawn.grid_index, j);
    rec.log2_investor = std::log2(rec.investor.Dot(x));
    forecaster->Observe(draw, bin);

    rec.comparators.assign(kComparatorCount, Portfolio{});
    rec.log2_comparators.assign(kComparatorCount, 0.0);
    if (auto own = market.Comparator(ctx)) {
      rec.comparators[kStationary] = *own;
    } else if (stationary_cells) {
      rec.comparators[kStationary] =
          config.comparators.stationary_table[stationary_cells->Quantize(z)];
    } else {
      rec.comparators[kStationary] = Portfolio::Uniform(k);
    }
    rec.log2_comparators[kStationary] = std::log2(rec.comparators[kStationary].Dot(x));
    if (cover) {
      rec.comparators[kCover] = t == 1 ? Portfolio{{0.5, 0.5}} : cover->Weight();
      rec.log2_comparators[kCover] = std::log2(rec.comparators[kCover].Dot(x));
      cover->Update(x);
    }
    rec.x = std::move(x);
    traj.rounds.push_back(std::move(rec));

    if (t % std::max<std::uint64_t>(1, config.sample_every) == 0 || t == config.rounds) {
      const Halfspace h = ComputeHalfspace(forecaster->mean(), TargetSet{grids->params.epsilon},
                                           config.game_tol);
      DiagnosticSample s;
      s.t = t;
      s.stage = stage;
      s.calibration_score = CalibrationScore(forecaster->ledger(), *grids);
      s.mean_l1 = forecaster->mean().L1Norm();
      s.dist_l2 = h.dist_l2;
      s.dist_l1 = h.dist_l1;
      traj.samples.push_back(s);
    }
  }

  if (!traj.rounds.empty()) {
    // Hindsight comparators.
    std::vector<ReturnVector> xs;
    xs.reserve(traj.rounds.size());
    for (const auto& r : traj.rounds) xs.push_back(r.x);
    traj.bcrp = Bcrp(xs, config.kelly_tol);

    std::size_t bins = config.comparators.piecewise_bins;
    if (bins == 0) bins = traj.stages.back().K;
    const SignalGrid cells(spec.signal_lo, spec.signal_hi, static_cast<int>(bins));
    std::vector<std::pair<std::size_t, ReturnVector>> hist;
    hist.reserve(traj.rounds.size());
    std::vector<std::size_t> cell_of(traj.rounds.size());
    for (std::size_t r = 0; r < traj.rounds.size(); ++r) {
      cell_of[r] = cells.Quantize(traj.rounds[r].signal);
      hist.emplace_back(cell_of[r], traj.rounds[r].x);
    }
    traj.piecewise = BestPiecewiseStationary(hist, bins, config.kelly_tol);

    for (std::size_t r = 0; r < traj.rounds.size(); ++r) {
      auto& rec = traj.rounds[r];
      rec.comparators[kBcrp] = traj.bcrp;
      rec.log2_comparators[kBcrp] = std::log2(traj.bcrp.Dot(rec.x));
      rec.comparators[kPiecewise] = traj.piecewise[cell_of[r]];
      rec.log2_comparators[kPiecewise] = std::log2(rec.comparators[kPiecewise].Dot(rec.x));
    }
  }

  for (const auto& rec : traj.rounds) {
    traj.log2_investor += rec.log2_investor;
    for (std::size_t c = 0; c < kComparatorCount; ++c) {
      traj.log2_comparators[c] += rec.log2_comparators[c];
    }
  }
  return traj;
}

}  // namespace calport
