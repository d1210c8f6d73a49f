#pragma once

// Vector-payoff calibration game: sparse payoffs indexed by
// (forecast, signal) blocks, the l1 ball target set, l2 projection onto it,
// and the per-round halfspace game whose solution is the forecaster's mixed
// strategy.

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "calport/discretization.hpp"

namespace calport {

struct BlockKey {
  std::size_t forecast = 0;
  std::size_t signal = 0;

  friend auto operator<=>(const BlockKey&, const BlockKey&) = default;
};

// Payoff f(s_i, (a, c_j)): zero everywhere except block (i, j), which holds
// delta[a] - s_i(.|c_j).
struct SparsePayoff {
  BlockKey block;
  std::vector<double> values;
};

// Block-sparse vector in R^{K N M}. Missing blocks are zero.
using BlockVector = std::map<BlockKey, std::vector<double>>;

// Running average of payoffs. Internally keeps the running sums so that a
// block is exactly (1/T) times the sum of its payoffs.
class MeanPayoff {
 public:
  MeanPayoff() = default;
  explicit MeanPayoff(std::size_t M) : m_(M) {}

  std::uint64_t T() const { return t_; }
  std::size_t M() const { return m_; }
  std::size_t block_count() const { return sums_.size(); }
  const BlockVector& sums() const { return sums_; }

  // Mean value of one block (zeros if absent).
  std::vector<double> Block(const BlockKey& key) const;
  // All stored blocks divided by T (empty when T == 0).
  BlockVector Mean() const;
  double L1Norm() const;

  void Add(const SparsePayoff& payoff);

 private:
  std::size_t m_ = 0;
  std::uint64_t t_ = 0;
  BlockVector sums_;
};

struct TargetSet {
  double epsilon = 0.25;
};

struct MixedStrategy {
  // Sorted by forecast index, strictly positive probabilities.
  std::vector<std::pair<std::size_t, double>> support;
  double value = 0.0;

  double ProbabilityOf(std::size_t forecast) const;
};

SparsePayoff PayoffVector(std::size_t forecast, std::size_t signal,
                          std::size_t bin, const GridSet& grids);

// l2 projection onto {y : ||y||_1 <= epsilon} by sort-based soft
// thresholding.
std::vector<double> ProjectL1Ball(std::span<const double> v, double epsilon);

// The threshold theta used by ProjectL1Ball (0 when v is already inside).
double L1BallThreshold(std::span<const double> v, double epsilon);

// Direction and anchor of the current halfspace condition, plus distances.
struct Halfspace {
  BlockVector direction;  // u = mean - proj(mean), on mean's support
  double anchor = 0.0;    // u . proj(mean)
  double dist_l2 = 0.0;   // ||u||_2
  double dist_l1 = 0.0;   // ||u||_1
  bool inside = true;     // dist_l2 <= tol
};

Halfspace ComputeHalfspace(const MeanPayoff& mean, const TargetSet& target,
                           double tol = 1e-9);

// Scalar payoff u . f(P, (bin, c_j)).
double ScalarPayoff(const MixedStrategy& strategy, const BlockVector& direction,
                    std::size_t bin, std::size_t signal, const GridSet& grids);

// max over all M*K pure moves of the scalar payoff.
double WorstCaseScalarPayoff(const MixedStrategy& strategy,
                             const BlockVector& direction, const GridSet& grids);

MixedStrategy UniformStrategy(std::size_t n);

// Finds P with max_{(a,c_j)} u . f(P,(a,c_j)) <= anchor + tol. Forecasts
// whose blocks miss u's support form a single zero row; its mass is spread
// evenly over them. Infeasible when the bound cannot be met.
MixedStrategy SolveHalfspaceGame(const BlockVector& direction, const GridSet& grids,
                                 double anchor, double tol);

// Uniform when dist(mean, U) <= tol, the halfspace game's solution otherwise.
MixedStrategy BlackwellStrategy(const MeanPayoff& mean, const TargetSet& target,
                                const GridSet& grids, double tol = 1e-9);

MeanPayoff UpdateMeanPayoff(MeanPayoff mean, const SparsePayoff& round_payoff);

}  // namespace calport
