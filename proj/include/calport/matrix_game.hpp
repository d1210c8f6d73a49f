#pragma once

#include <cstddef>
#include <vector>

namespace calport {

// Dense row-major payoff matrix. Entry (r, c) is what the row player pays
// when row r meets column c; the row player minimizes.
struct PayoffMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  PayoffMatrix() = default;
  PayoffMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

struct GameSolution {
  double value = 0.0;
  std::vector<double> row_strategy;
  std::vector<double> col_strategy;
};

// Minimax solution by the primal simplex method (Bland's rule) on
//   max 1'x  s.t.  A'x <= 1, x >= 0,   A = G/s - min(G/s) + 1 > 0,
// with s = max|G|, so that row_strategy = x / 1'x. value is the exact worst
// case of row_strategy against G.
GameSolution SolveZeroSumGame(const PayoffMatrix& game);

}  // namespace calport
