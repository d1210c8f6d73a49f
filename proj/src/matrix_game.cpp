#include "calport/matrix_game.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "calport/error.hpp"

namespace calport {

namespace {

constexpr double kPivotEps = 1e-12;

}  // namespace

GameSolution SolveZeroSumGame(const PayoffMatrix& game) {
  const std::size_t n = game.rows;  // LP variables
  const std::size_t m = game.cols;  // LP constraints
  if (n == 0 || m == 0) Fail(ErrorCode::kInvalidParams, "empty game matrix");

  // Work on G / max|G| so that tiny payoffs are not swamped by the shift.
  double scale = 0.0;
  for (double v : game.data) scale = std::max(scale, std::abs(v));
  if (!(scale > 0.0)) scale = 1.0;
  double lo = std::numeric_limits<double>::infinity();
  for (double v : game.data) lo = std::min(lo, v / scale);
  const double shift = lo - 1.0;

  // Tableau: m constraint rows + objective row; columns x (n), slacks (m), rhs.
  const std::size_t width = n + m + 1;
  std::vector<double> tab((m + 1) * width, 0.0);
  auto T = [&](std::size_t r, std::size_t c) -> double& { return tab[r * width + c]; };
  std::vector<std::size_t> basis(m);
  for (std::size_t c = 0; c < m; ++c) {
    for (std::size_t r = 0; r < n; ++r) T(c, r) = game.at(r, c) / scale - shift;
    T(c, n + c) = 1.0;
    T(c, n + m) = 1.0;
    basis[c] = n + c;
  }
  // Objective row holds reduced costs of max 1'x, stored negated.
  for (std::size_t r = 0; r < n; ++r) T(m, r) = -1.0;

  const std::size_t max_iter = 50 * (n + m) + 1000;
  std::size_t iter = 0;
  for (; iter < max_iter; ++iter) {
    std::size_t enter = width;
    for (std::size_t c = 0; c + 1 < width; ++c) {
      if (T(m, c) < -kPivotEps) {
        enter = c;
        break;
      }
    }
    if (enter == width) break;

    std::size_t leave = m;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < m; ++r) {
      const double a = T(r, enter);
      if (a > kPivotEps) {
        const double ratio = T(r, width - 1) / a;
        if (ratio < best - 1e-15 ||
            (ratio <= best + 1e-15 && leave < m && basis[r] < basis[leave])) {
          best = ratio;
          leave = r;
        }
      }
    }
    // The feasible region is bounded because every coefficient is >= 1.
    if (leave == m) Fail(ErrorCode::kInfeasible, "game LP unbounded");

    const double piv = T(leave, enter);
    for (std::size_t c = 0; c < width; ++c) T(leave, c) /= piv;
    for (std::size_t r = 0; r <= m; ++r) {
      if (r == leave) continue;
      const double f = T(r, enter);
      if (f == 0.0) continue;
      for (std::size_t c = 0; c < width; ++c) T(r, c) -= f * T(leave, c);
    }
    basis[leave] = enter;
  }
  if (iter == max_iter) Fail(ErrorCode::kInfeasible, "game LP did not terminate");

  GameSolution sol;
  sol.row_strategy.assign(n, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    if (basis[r] < n) sol.row_strategy[basis[r]] = std::max(0.0, T(r, width - 1));
  }
  double total = 0.0;
  for (double x : sol.row_strategy) total += x;
  if (!(total > 0.0)) Fail(ErrorCode::kInfeasible, "degenerate game LP");
  for (double& x : sol.row_strategy) x /= total;

  // Duals of the column constraints are the column player's strategy.
  sol.col_strategy.assign(m, 0.0);
  double dual_total = 0.0;
  for (std::size_t c = 0; c < m; ++c) {
    sol.col_strategy[c] = std::max(0.0, T(m, n + c));
    dual_total += sol.col_strategy[c];
  }
  if (dual_total > 0.0) {
    for (double& y : sol.col_strategy) y /= dual_total;
  }

  // Report the exact attained value of the returned row strategy.
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < m; ++c) {
    double v = 0.0;
    for (std::size_t r = 0; r < n; ++r) v += sol.row_strategy[r] * game.at(r, c);
    worst = std::max(worst, v);
  }
  sol.value = worst;
  return sol;
}

}  // namespace calport
