#include "calport/discretization.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "calport/error.hpp"

namespace calport {

void MarketSpec::Validate() const {
  std::ostringstream msg;
  if (k < 1) {
    msg << "asset count k must be >= 1, got " << k;
  } else if (!(lambda1 > 0.0)) {
    msg << "lambda1 must be > 0, got " << lambda1;
  } else if (!(lambda1 < lambda2) || !std::isfinite(lambda2)) {
    msg << "need lambda1 < lambda2, got [" << lambda1 << ", " << lambda2 << "]";
  } else if (!(signal_lo <= signal_hi) || !std::isfinite(signal_lo) ||
             !std::isfinite(signal_hi)) {
    msg << "need signal_lo <= signal_hi, got [" << signal_lo << ", "
        << signal_hi << "]";
  } else {
    return;
  }
  Fail(ErrorCode::kInvalidParams, msg.str());
}

// ---------------------------------------------------------------------------
// SignalGrid

SignalGrid::SignalGrid(double lo, double hi, int K) : lo_(lo), hi_(hi) {
  if (K < 1) Fail(ErrorCode::kInvalidParams, "signal grid needs K >= 1");
  if (!(lo <= hi)) Fail(ErrorCode::kInvalidParams, "signal_lo > signal_hi");
  if (K == 1) {
    points_.push_back(0.5 * (lo + hi));
    nu_ = 0.5 * (hi - lo);
    return;
  }
  if (lo == hi) {
    Fail(ErrorCode::kInvalidParams,
         "degenerate signal interval admits only K = 1");
  }
  const double step = (hi - lo) / (K - 1);
  points_.reserve(K);
  for (int j = 0; j < K; ++j) points_.push_back(lo + step * j);
  points_.back() = hi;
  nu_ = 0.5 * step;
}

std::size_t SignalGrid::Quantize(double z) const {
  if (!(z >= lo_ && z <= hi_)) {
    std::ostringstream msg;
    msg << "signal " << z << " outside [" << lo_ << ", " << hi_ << "]";
    Fail(ErrorCode::kOutOfRange, msg.str());
  }
  auto it = std::lower_bound(points_.begin(), points_.end(), z);
  if (it == points_.end()) return points_.size() - 1;
  const auto hi_idx = static_cast<std::size_t>(it - points_.begin());
  if (hi_idx == 0) return 0;
  const double d_lo = z - points_[hi_idx - 1];
  const double d_hi = *it - z;
  return d_hi < d_lo ? hi_idx : hi_idx - 1;
}

// ---------------------------------------------------------------------------
// ReturnGrid

int ReturnGrid::PerAxisFor(const MarketSpec& spec, double mu) {
  if (!(mu > 0.0)) Fail(ErrorCode::kInvalidParams, "return mesh mu must be > 0");
  const double span = spec.lambda2 - spec.lambda1;
  const double raw = std::ceil(span * std::sqrt(double(spec.k)) / (2.0 * mu));
  if (raw > 1e6) Fail(ErrorCode::kInvalidParams, "return mesh mu too small");
  return std::max(2, static_cast<int>(raw) + 1);
}

ReturnGrid ReturnGrid::Uniform(const MarketSpec& spec, double mu) {
  spec.Validate();
  ReturnGrid g;
  g.k_ = spec.k;
  g.lambda1_ = spec.lambda1;
  g.lambda2_ = spec.lambda2;
  g.per_axis_ = PerAxisFor(spec, mu);
  const double span = spec.lambda2 - spec.lambda1;
  g.spacing_ = span / (g.per_axis_ - 1);
  g.mesh_ = 0.5 * g.spacing_ * std::sqrt(double(spec.k));

  const double total = std::pow(double(g.per_axis_), spec.k);
  if (total > 1e7) {
    Fail(ErrorCode::kInvalidParams, "return grid would exceed 10^7 points");
  }
  auto& axis = g.axis_;
  axis.resize(g.per_axis_);
  for (int a = 0; a < g.per_axis_; ++a) axis[a] = spec.lambda1 + g.spacing_ * a;
  axis.back() = spec.lambda2;

  const auto count = static_cast<std::size_t>(total);
  g.points_.reserve(count);
  std::vector<int> digits(spec.k, 0);
  for (std::size_t flat = 0; flat < count; ++flat) {
    ReturnVector p(spec.k);
    for (int c = 0; c < spec.k; ++c) p[c] = axis[digits[c]];
    g.points_.push_back(std::move(p));
    for (int c = spec.k - 1; c >= 0; --c) {
      if (++digits[c] < g.per_axis_) break;
      digits[c] = 0;
    }
  }
  return g;
}

ReturnGrid ReturnGrid::FromPoints(const MarketSpec& spec,
                                  std::vector<ReturnVector> points) {
  spec.Validate();
  if (points.empty()) Fail(ErrorCode::kInvalidParams, "empty return grid");
  for (const auto& p : points) {
    if (static_cast<int>(p.size()) != spec.k) {
      Fail(ErrorCode::kInvalidParams, "return grid point has wrong dimension");
    }
    for (double v : p) {
      if (!(v >= spec.lambda1 && v <= spec.lambda2)) {
        Fail(ErrorCode::kInvalidParams, "return grid point outside bounds");
      }
    }
  }
  ReturnGrid g;
  g.k_ = spec.k;
  g.lambda1_ = spec.lambda1;
  g.lambda2_ = spec.lambda2;
  g.points_ = std::move(points);
  return g;
}

std::size_t ReturnGrid::Quantize(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != k_) {
    Fail(ErrorCode::kInvalidParams, "return vector has wrong dimension");
  }
  for (std::size_t c = 0; c < x.size(); ++c) {
    if (!(x[c] >= lambda1_ && x[c] <= lambda2_)) {
      std::ostringstream msg;
      msg << "return coordinate " << c << " = " << x[c] << " outside ["
          << lambda1_ << ", " << lambda2_ << "]";
      Fail(ErrorCode::kOutOfRange, msg.str());
    }
  }
  if (uniform()) {
    // l2 distance is separable on a product grid, and rounding each
    // coordinate down on ties yields the lowest flat index.
    std::size_t flat = 0;
    for (std::size_t c = 0; c < x.size(); ++c) {
      const double r = (x[c] - lambda1_) / spacing_;
      auto a = static_cast<long>(std::ceil(r - 0.5));
      a = std::clamp<long>(a, 0, per_axis_ - 1);
      // Guard against the division landing on the wrong side of a midpoint.
      if (a > 0 && std::abs(x[c] - axis_[a - 1]) <= std::abs(x[c] - axis_[a])) {
        --a;
      } else if (a + 1 < per_axis_ &&
                 std::abs(x[c] - axis_[a + 1]) < std::abs(x[c] - axis_[a])) {
        ++a;
      }
      flat = flat * per_axis_ + static_cast<std::size_t>(a);
    }
    return flat;
  }
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points_.size(); ++i) {
    double d = 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) {
      const double diff = x[c] - points_[i][c];
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// ForecastGrid

std::uint64_t SimplexLatticeCount(std::uint64_t D, std::uint64_t M) {
  if (M == 0) return 0;
  // C(D+M-1, M-1) built incrementally; each partial product is an integer.
  const std::uint64_t r = M - 1;
  unsigned __int128 acc = 1;
  for (std::uint64_t i = 1; i <= r; ++i) {
    acc = acc * (D + i) / i;
    if (acc > std::numeric_limits<std::uint64_t>::max()) {
      return std::numeric_limits<std::uint64_t>::max();
    }
  }
  return static_cast<std::uint64_t>(acc);
}

std::uint64_t LatticeDenominator(std::size_t M, double epsilon) {
  if (!(epsilon > 0.0)) Fail(ErrorCode::kInvalidParams, "epsilon must be > 0");
  if (M < 2) return 1;
  const double raw = std::ceil(double(M - 1) / epsilon - 1e-9);
  return static_cast<std::uint64_t>(std::max(1.0, raw));
}

std::uint64_t ForecastGridSize(std::size_t M, int K, double epsilon) {
  const std::uint64_t per = SimplexLatticeCount(LatticeDenominator(M, epsilon), M);
  unsigned __int128 n = 1;
  for (int j = 0; j < K; ++j) {
    n *= per;
    if (n > std::numeric_limits<std::uint64_t>::max()) {
      return std::numeric_limits<std::uint64_t>::max();
    }
  }
  return static_cast<std::uint64_t>(n);
}

namespace {

void EnumerateCompositions(int remaining, std::size_t slot, std::vector<int>& cur,
                           std::vector<std::vector<int>>& out) {
  if (slot + 1 == cur.size()) {
    cur[slot] = remaining;
    out.push_back(cur);
    return;
  }
  for (int c = 0; c <= remaining; ++c) {
    cur[slot] = c;
    EnumerateCompositions(remaining - c, slot + 1, cur, out);
  }
}

}  // namespace

ForecastGrid::ForecastGrid(std::size_t M, int K, double epsilon,
                           std::uint64_t cap)
    : m_(M), k_(K), epsilon_(epsilon) {
  if (M < 1 || K < 1) Fail(ErrorCode::kInvalidParams, "forecast grid needs M, K >= 1");
  d_ = LatticeDenominator(M, epsilon);
  const std::uint64_t n = ForecastGridSize(M, K, epsilon);
  if (n > cap) {
    std::ostringstream msg;
    msg << "forecast grid size N = "
        << (n == std::numeric_limits<std::uint64_t>::max() ? std::string(">= 2^64")
                                                           : std::to_string(n))
        << " exceeds cap " << cap << " (M = " << M << ", K = " << K
        << ", epsilon = " << epsilon << ", D = " << d_ << ")";
    Fail(ErrorCode::kCapExceeded, msg.str());
  }
  n_ = static_cast<std::size_t>(n);

  std::vector<int> cur(M, 0);
  EnumerateCompositions(static_cast<int>(d_), 0, cur, counts_);
  probs_.reserve(counts_.size());
  for (std::size_t p = 0; p < counts_.size(); ++p) {
    std::vector<double> row(M);
    for (std::size_t m = 0; m < M; ++m) row[m] = double(counts_[p][m]) / double(d_);
    probs_.push_back(std::move(row));
    lookup_.emplace(counts_[p], p);
  }
  radix_powers_.resize(K);
  std::size_t pw = 1;
  for (int j = 0; j < K; ++j) {
    radix_powers_[j] = pw;
    pw *= counts_.size();
  }
}

std::size_t ForecastGrid::Digit(std::size_t i, std::size_t j) const {
  if (i >= n_ || j >= static_cast<std::size_t>(k_)) {
    Fail(ErrorCode::kIndexOutOfRange, "forecast or signal index out of range");
  }
  return (i / radix_powers_[j]) % counts_.size();
}

std::vector<std::size_t> ForecastGrid::Decompose(std::size_t i) const {
  std::vector<std::size_t> digits(k_);
  for (int j = 0; j < k_; ++j) digits[j] = Digit(i, j);
  return digits;
}

std::size_t ForecastGrid::Compose(std::span<const std::size_t> digits) const {
  if (digits.size() != static_cast<std::size_t>(k_)) {
    Fail(ErrorCode::kIndexOutOfRange, "digit tuple has wrong length");
  }
  std::size_t flat = 0;
  for (int j = 0; j < k_; ++j) {
    if (digits[j] >= counts_.size()) {
      Fail(ErrorCode::kIndexOutOfRange, "lattice digit out of range");
    }
    flat += digits[j] * radix_powers_[j];
  }
  return flat;
}

ConditionalForecast ForecastGrid::Forecast(std::size_t i) const {
  ConditionalForecast f;
  f.grid_index = i;
  f.rows.reserve(k_);
  for (int j = 0; j < k_; ++j) {
    auto r = Row(i, j);
    f.rows.emplace_back(r.begin(), r.end());
  }
  return f;
}

std::size_t ForecastGrid::QuantizeRow(std::span<const double> p) const {
  if (p.size() != m_) Fail(ErrorCode::kInvalidParams, "row has wrong length");
  const double D = double(d_);
  std::vector<int> c(m_);
  std::vector<double> frac(m_);
  long assigned = 0;
  for (std::size_t m = 0; m < m_; ++m) {
    if (!(p[m] >= -1e-12)) Fail(ErrorCode::kOutOfRange, "negative probability");
    const double scaled = std::max(0.0, p[m]) * D;
    const double fl = std::floor(scaled + 1e-9);
    c[m] = static_cast<int>(fl);
    frac[m] = scaled - fl;
    assigned += c[m];
  }
  long left = static_cast<long>(d_) - assigned;
  if (left < 0) Fail(ErrorCode::kOutOfRange, "row does not sum to 1");
  std::vector<std::size_t> order(m_);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t r = 0; left > 0; ++r, --left) ++c[order[r % m_]];
  auto it = lookup_.find(c);
  if (it == lookup_.end()) Fail(ErrorCode::kOutOfRange, "row does not sum to 1");
  return it->second;
}

std::size_t ForecastGrid::Quantize(const std::vector<std::vector<double>>& rows) const {
  if (rows.size() != static_cast<std::size_t>(k_)) {
    Fail(ErrorCode::kInvalidParams, "conditional forecast needs K rows");
  }
  std::vector<std::size_t> digits(k_);
  for (int j = 0; j < k_; ++j) digits[j] = QuantizeRow(rows[j]);
  return Compose(digits);
}

// ---------------------------------------------------------------------------

GridSet BuildGrids(const MarketSpec& spec, const GridStageParams& params,
                   const std::vector<ReturnVector>& explicit_returns) {
  spec.Validate();
  if (params.K < 1) Fail(ErrorCode::kInvalidParams, "K must be >= 1");
  if (!(params.epsilon > 0.0)) Fail(ErrorCode::kInvalidParams, "epsilon must be > 0");
  if (explicit_returns.empty() && !(params.mu > 0.0)) {
    Fail(ErrorCode::kInvalidParams, "mu must be > 0");
  }
  GridSet g;
  g.spec = spec;
  g.params = params;
  g.signals = SignalGrid(spec.signal_lo, spec.signal_hi, params.K);
  g.params.nu = g.signals.nu();
  g.returns = explicit_returns.empty() ? ReturnGrid::Uniform(spec, params.mu)
                                       : ReturnGrid::FromPoints(spec, explicit_returns);
  g.forecasts = ForecastGrid(g.returns.size(), params.K, params.epsilon,
                             params.max_forecast_points);
  return g;
}

std::size_t QuantizeSignal(double z, const SignalGrid& grid) { return grid.Quantize(z); }

std::size_t QuantizeReturn(std::span<const double> x, const ReturnGrid& grid) {
  return grid.Quantize(x);
}

}  // namespace calport
