#pragma once

// Finite grids over signals, return vectors and conditional forecasts, and
// nearest-point quantization onto them.

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

namespace calport {

using ReturnVector = std::vector<double>;

struct MarketSpec {
  int k = 2;
  double lambda1 = 0.5;
  double lambda2 = 2.0;
  double signal_lo = 0.0;
  double signal_hi = 1.0;

  // Throws InvalidParams.
  void Validate() const;
};

struct GridStageParams {
  int K = 1;
  double mu = 0.25;
  double epsilon = 0.25;
  // Signal mesh. Derived by BuildGrids from K and the signal interval; an
  // input value is ignored.
  double nu = 0.0;
  std::uint64_t max_forecast_points = 5000;
};

class SignalGrid {
 public:
  SignalGrid() = default;
  SignalGrid(double lo, double hi, int K);

  std::size_t size() const { return points_.size(); }
  const std::vector<double>& points() const { return points_; }
  double nu() const { return nu_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }

  // Nearest grid point; ties go to the lower index. OutOfRange outside [lo,hi].
  std::size_t Quantize(double z) const;

 private:
  double lo_ = 0.0;
  double hi_ = 0.0;
  double nu_ = 0.0;
  std::vector<double> points_;
};

class ReturnGrid {
 public:
  ReturnGrid() = default;

  // Uniform product grid over [lambda1, lambda2]^k with l2 mesh <= mu.
  static ReturnGrid Uniform(const MarketSpec& spec, double mu);

  // Grid made of explicitly listed points (e.g. the support of a discrete
  // market). mesh() is 0 on the listed points; it is not a cover of the box.
  static ReturnGrid FromPoints(const MarketSpec& spec,
                               std::vector<ReturnVector> points);

  static int PerAxisFor(const MarketSpec& spec, double mu);

  std::size_t size() const { return points_.size(); }
  int k() const { return k_; }
  int per_axis() const { return per_axis_; }
  bool uniform() const { return per_axis_ > 0; }
  double spacing() const { return spacing_; }
  // Certified l2 covering radius of the box (uniform grids only).
  double mesh() const { return mesh_; }
  const ReturnVector& point(std::size_t i) const { return points_.at(i); }
  const std::vector<ReturnVector>& points() const { return points_; }

  // Nearest point in l2, ties toward the lowest flat index. OutOfRange if
  // any coordinate leaves [lambda1, lambda2].
  std::size_t Quantize(std::span<const double> x) const;

 private:
  int k_ = 0;
  int per_axis_ = 0;
  double lambda1_ = 0.0;
  double lambda2_ = 0.0;
  double spacing_ = 0.0;
  double mesh_ = 0.0;
  std::vector<double> axis_;
  // Lexicographic order, first coordinate most significant.
  std::vector<ReturnVector> points_;
};

// Number of lattice points of the (M-1)-simplex with denominator D, i.e.
// C(D+M-1, M-1). Saturates at UINT64_MAX.
std::uint64_t SimplexLatticeCount(std::uint64_t D, std::uint64_t M);

// Smallest lattice denominator whose rounding error is <= epsilon in l1.
std::uint64_t LatticeDenominator(std::size_t M, double epsilon);

// N = SimplexLatticeCount(D, M)^K, saturating.
std::uint64_t ForecastGridSize(std::size_t M, int K, double epsilon);

struct ConditionalForecast {
  std::size_t grid_index = 0;
  // rows[j] = s(.|c_j), one probability vector of length M per signal point.
  std::vector<std::vector<double>> rows;
};

// Product over signal points of the lattice {c/D : c in N^M, sum c = D}.
// A flat forecast index i encodes a K-tuple of per-signal lattice indices
// in mixed radix, signal 0 least significant.
class ForecastGrid {
 public:
  ForecastGrid() = default;
  ForecastGrid(std::size_t M, int K, double epsilon, std::uint64_t cap);

  std::size_t N() const { return n_; }
  std::size_t M() const { return m_; }
  int K() const { return k_; }
  std::uint64_t D() const { return d_; }
  double epsilon() const { return epsilon_; }
  std::size_t per_signal_size() const { return counts_.size(); }

  // Lattice point counts (sum to D) and the matching probabilities.
  const std::vector<int>& lattice_counts(std::size_t point) const {
    return counts_.at(point);
  }
  std::span<const double> lattice_row(std::size_t point) const {
    return probs_.at(point);
  }

  std::size_t Digit(std::size_t i, std::size_t j) const;
  std::vector<std::size_t> Decompose(std::size_t i) const;
  std::size_t Compose(std::span<const std::size_t> digits) const;

  // s_i(.|c_j).
  std::span<const double> Row(std::size_t i, std::size_t j) const {
    return probs_[Digit(i, j)];
  }
  ConditionalForecast Forecast(std::size_t i) const;

  // Nearest lattice point in l1 (largest-remainder rounding).
  std::size_t QuantizeRow(std::span<const double> p) const;
  std::size_t Quantize(const std::vector<std::vector<double>>& rows) const;

 private:
  std::size_t m_ = 0;
  int k_ = 0;
  std::uint64_t d_ = 0;
  double epsilon_ = 0.0;
  std::size_t n_ = 0;
  std::vector<std::vector<int>> counts_;
  std::vector<std::vector<double>> probs_;
  std::map<std::vector<int>, std::size_t> lookup_;
  std::vector<std::size_t> radix_powers_;
};

struct GridSet {
  MarketSpec spec;
  GridStageParams params;
  SignalGrid signals;
  ReturnGrid returns;
  ForecastGrid forecasts;

  std::size_t K() const { return signals.size(); }
  std::size_t M() const { return returns.size(); }
  std::size_t N() const { return forecasts.N(); }
};

// CapExceeded if N > params.max_forecast_points, InvalidParams otherwise.
// When explicit_returns is non-empty it replaces the uniform return grid.
GridSet BuildGrids(const MarketSpec& spec, const GridStageParams& params,
                   const std::vector<ReturnVector>& explicit_returns = {});

std::size_t QuantizeSignal(double z, const SignalGrid& grid);
std::size_t QuantizeReturn(std::span<const double> x, const ReturnGrid& grid);

}  // namespace calport
