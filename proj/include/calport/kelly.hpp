#pragma once

// Log-optimal (Kelly) portfolios over discrete return distributions and the
// hindsight / universal comparators.

#include <cstddef>
#include <utility>
#include <vector>

#include "calport/discretization.hpp"

namespace calport {

struct Portfolio {
  std::vector<double> weights;

  static Portfolio Uniform(std::size_t k);
  static Portfolio Unit(std::size_t k, std::size_t asset);
  std::size_t size() const { return weights.size(); }
  double Dot(std::span<const double> x) const;
  // Throws InvalidParams unless weights are >= 0 and sum to 1 within 1e-10.
  void Validate() const;
};

struct ReturnAtom {
  ReturnVector x;
  double p = 0.0;
};

struct DiscreteReturnDist {
  std::vector<ReturnAtom> atoms;

  std::size_t k() const { return atoms.empty() ? 0 : atoms.front().x.size(); }
  // Nonnegative probabilities summing to 1 within 1e-12, positive returns,
  // consistent dimension.
  void Validate() const;
  // Same atoms with duplicates merged, in lexicographic order of x.
  DiscreteReturnDist Merged() const;
  // Equal-weight empirical distribution of a return sequence, merged.
  static DiscreteReturnDist Empirical(const std::vector<ReturnVector>& returns);
};

inline constexpr double kDefaultKellyTol = 1e-8;
inline constexpr int kKellyIterationBudget = 100000;

// Natural-log gradient g_j = sum_i s_i a_i(j) / (b . a_i). At the optimum
// g_j <= 1 everywhere with equality on the support, and sum_j b_j g_j = 1.
std::vector<double> KellyGradient(const Portfolio& b, const DiscreteReturnDist& dist);

// max(max_j g_j - 1, max_{b_j > tol} (1 - g_j), 0).
double KktResidual(const Portfolio& b, const DiscreteReturnDist& dist, double tol);

// argmax_b sum_i s_i log2(b . a_i), certified by the KKT residual <= tol.
// Objectives that do not depend on b yield the uniform portfolio.
// NonConvergence if the budget runs out.
Portfolio LogOptimalPortfolio(const DiscreteReturnDist& dist, double tol = kDefaultKellyTol);

// sum_i s_i log2(b . a_i).
double GrowthRate(const Portfolio& b, const DiscreteReturnDist& dist);

// Best constant rebalanced portfolio in hindsight.
Portfolio Bcrp(const std::vector<ReturnVector>& returns, double tol = kDefaultKellyTol);

// sum_t log2(b . x_t).
double LogWealth(const Portfolio& b, const std::vector<ReturnVector>& returns);

// Cover's universal portfolio for two assets under the Dirichlet(1/2, 1/2)
// prior. The substitution b1 = sin^2(theta) turns the arcsine prior into the
// uniform measure on [0, pi/2], integrated with the midpoint rule.
Portfolio CoverUniversalWeight(const std::vector<ReturnVector>& history, int k,
                               int quad_points = 512);

// Incremental form of CoverUniversalWeight for long episodes.
class CoverMixture {
 public:
  explicit CoverMixture(int quad_points = 512);

  Portfolio Weight() const;
  void Update(std::span<const double> x);

 private:
  std::vector<double> b1_;
  std::vector<double> log_wealth_;
};

// Per signal bin BCRP; bins without history get the uniform portfolio.
std::vector<Portfolio> BestPiecewiseStationary(
    const std::vector<std::pair<std::size_t, ReturnVector>>& history, std::size_t K,
    double tol = kDefaultKellyTol);

}  // namespace calport
