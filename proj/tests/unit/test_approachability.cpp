#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "calport/approachability.hpp"
#include "calport/error.hpp"
#include "calport/matrix_game.hpp"

using namespace calport;

namespace {

double L1(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += std::abs(x);
  return s;
}

double L2(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

// Soft threshold at theta.
std::vector<double> Shrink(const std::vector<double>& v, double theta) {
  std::vector<double> y(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    y[i] = std::copysign(std::max(std::abs(v[i]) - theta, 0.0), v[i]);
  }
  return y;
}

// Bisection on theta: ||Shrink(v, theta)||_1 is continuous and decreasing.
std::vector<double> ProjectByBisection(const std::vector<double>& v, double eps) {
  if (L1(v) <= eps) return v;
  double lo = 0.0, hi = 0.0;
  for (double x : v) hi = std::max(hi, std::abs(x));
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (L1(Shrink(v, mid)) > eps ? lo : hi) = mid;
  }
  return Shrink(v, hi);
}

// Solves a small dense system in place; false if singular.
bool Solve(std::vector<std::vector<double>> a, std::vector<double> b, std::vector<double>& x) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    }
    if (std::abs(a[piv][c]) < 1e-12) return false;
    std::swap(a[c], a[piv]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  x.resize(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = b[i] / a[i][i];
  return true;
}

void Subsets(std::size_t n, std::size_t k, std::size_t start, std::vector<std::size_t>& cur,
             std::vector<std::vector<std::size_t>>& out) {
  if (cur.size() == k) {
    out.push_back(cur);
    return;
  }
  for (std::size_t i = start; i < n; ++i) {
    cur.push_back(i);
    Subsets(n, k, i + 1, cur, out);
    cur.pop_back();
  }
}

// Minimax value (row player minimizes) by enumerating square kernels:
// an optimal strategy is a basic solution supported on rows S with columns C
// tight, |S| = |C|.
double MinimaxByKernels(const PayoffMatrix& g) {
  double best = INFINITY;
  for (std::size_t s = 1; s <= std::min(g.rows, g.cols); ++s) {
    std::vector<std::vector<std::size_t>> rows, cols;
    std::vector<std::size_t> cur;
    Subsets(g.rows, s, 0, cur, rows);
    Subsets(g.cols, s, 0, cur, cols);
    for (const auto& S : rows) {
      for (const auto& C : cols) {
        // Unknowns x_S (s) and v; equations: columns in C tight, sum x = 1.
        std::vector<std::vector<double>> a(s + 1, std::vector<double>(s + 1, 0.0));
        std::vector<double> b(s + 1, 0.0);
        for (std::size_t e = 0; e < s; ++e) {
          for (std::size_t r = 0; r < s; ++r) a[e][r] = g.at(S[r], C[e]);
          a[e][s] = -1.0;
        }
        for (std::size_t r = 0; r < s; ++r) a[s][r] = 1.0;
        b[s] = 1.0;
        std::vector<double> x;
        if (!Solve(a, b, x)) continue;
        bool ok = true;
        for (std::size_t r = 0; r < s; ++r) ok = ok && x[r] >= -1e-12;
        if (!ok) continue;
        double worst = -INFINITY;
        for (std::size_t c = 0; c < g.cols; ++c) {
          double v = 0.0;
          for (std::size_t r = 0; r < s; ++r) v += x[r] * g.at(S[r], c);
          worst = std::max(worst, v);
        }
        best = std::min(best, worst);
      }
    }
  }
  return best;
}

GridSet SmallGrids(int K, double eps, std::vector<ReturnVector> pts = {{2.0, 1.0}, {0.5, 1.0}}) {
  MarketSpec spec;
  return BuildGrids(spec, {K, 0.75, eps, 0.0, 5000}, pts);
}

std::size_t FindForecast(const GridSet& g, std::vector<double> row) {
  for (std::size_t i = 0; i < g.N(); ++i) {
    auto r = g.forecasts.Row(i, 0);
    if (std::equal(r.begin(), r.end(), row.begin())) return i;
  }
  FAIL("forecast not found");
  return 0;
}

}  // namespace

TEST_SUITE("approachability") {

TEST_CASE("payoff vector examples") {
  GridSet g = SmallGrids(1, 0.5);
  const std::size_t half = FindForecast(g, {0.5, 0.5});
  const std::size_t point0 = FindForecast(g, {1.0, 0.0});
  SparsePayoff p = PayoffVector(half, 0, 1, g);
  CHECK(p.block == BlockKey{half, 0});
  CHECK(p.values == std::vector<double>{-0.5, 0.5});
  p = PayoffVector(half, 0, 0, g);
  CHECK(p.values == std::vector<double>{0.5, -0.5});
  p = PayoffVector(point0, 0, 0, g);
  CHECK(p.values == std::vector<double>{0.0, 0.0});
  CHECK_THROWS_AS(PayoffVector(g.N(), 0, 0, g), Error);
  CHECK_THROWS_AS(PayoffVector(0, 1, 0, g), Error);
  CHECK_THROWS_AS(PayoffVector(0, 0, 2, g), Error);
}

TEST_CASE("payoff vector identities") {
  MarketSpec spec;
  spec.k = 1;
  GridSet g = BuildGrids(spec, {2, 0.25, 1.0, 0.0, 5000});
  for (std::size_t i = 0; i < g.N(); i += 7) {
    for (std::size_t j = 0; j < g.K(); ++j) {
      for (std::size_t bin = 0; bin < g.M(); ++bin) {
        const SparsePayoff p = PayoffVector(i, j, bin, g);
        const double sum = std::accumulate(p.values.begin(), p.values.end(), 0.0);
        CHECK(std::abs(sum) <= 1e-12);
        CHECK(L1(p.values) == doctest::Approx(2.0 * (1.0 - g.forecasts.Row(i, j)[bin])));
        CHECK(L1(p.values) <= 2.0 + 1e-12);
      }
    }
  }
}

TEST_CASE("projection examples") {
  auto y = ProjectL1Ball(std::vector<double>{0.8, -0.6}, 1.0);
  CHECK(y[0] == doctest::Approx(0.6));
  CHECK(y[1] == doctest::Approx(-0.4));
  CHECK(L1BallThreshold(std::vector<double>{0.8, -0.6}, 1.0) == doctest::Approx(0.2));
  y = ProjectL1Ball(std::vector<double>{1.0, 0.0, 0.0}, 0.5);
  CHECK(y == std::vector<double>{0.5, 0.0, 0.0});
  const std::vector<double> inside = {0.1, -0.2, 0.3};
  CHECK(ProjectL1Ball(inside, 1.0) == inside);
  CHECK(L1BallThreshold(inside, 1.0) == 0.0);
}

TEST_CASE("projection matches the bisection oracle") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> dim(1, 64);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int trial = 0; trial < 2000; ++trial) {
    const double eps = std::array<double, 3>{0.1, 1.0, 10.0}[trial % 3];
    std::vector<double> a(dim(rng)), b(a.size());
    const double scale = trial % 2 ? 3.0 : 0.3;
    for (double& v : a) v = scale * gauss(rng);
    for (double& v : b) v = scale * gauss(rng);
    const auto pa = ProjectL1Ball(a, eps);
    const auto pb = ProjectL1Ball(b, eps);
    CHECK(L1(pa) <= eps + 1e-12);
    CHECK(L2(ProjectL1Ball(pa, eps), pa) <= 1e-12);
    CHECK(L2(pa, pb) <= L2(a, b) + 1e-12);
    CHECK(L2(pa, ProjectByBisection(a, eps)) <= 1e-9);
  }
}

TEST_CASE("zero-sum game solver matches kernel enumeration") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> rows(1, 8), cols(1, 6);
  std::uniform_real_distribution<double> val(-1.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    PayoffMatrix g(rows(rng), cols(rng));
    const double scale = trial % 3 == 0 ? 1e-5 : 1.0;
    for (double& v : g.data) v = scale * val(rng);
    if (trial % 5 == 0) {
      for (double& v : g.data) v = std::round(v / scale * 2.0) / 2.0 * scale;  // ties
    }
    const GameSolution sol = SolveZeroSumGame(g);
    const double oracle = MinimaxByKernels(g);
    CHECK(std::abs(sol.value - oracle) <= 1e-9 * scale);
    double total = 0.0;
    for (double x : sol.row_strategy) {
      CHECK(x >= 0.0);
      total += x;
    }
    CHECK(std::abs(total - 1.0) <= 1e-10);
    // Column strategy guarantees the same value from the other side.
    double guaranteed = INFINITY;
    for (std::size_t r = 0; r < g.rows; ++r) {
      double v = 0.0;
      for (std::size_t c = 0; c < g.cols; ++c) v += g.at(r, c) * sol.col_strategy[c];
      guaranteed = std::min(guaranteed, v);
    }
    CHECK(std::abs(guaranteed - oracle) <= 1e-8 * scale);
  }
}

TEST_CASE("zero-sum game known values") {
  PayoffMatrix pennies(2, 2);
  pennies.at(0, 0) = 1;
  pennies.at(0, 1) = -1;
  pennies.at(1, 0) = -1;
  pennies.at(1, 1) = 1;
  GameSolution s = SolveZeroSumGame(pennies);
  CHECK(s.value == doctest::Approx(0.0));
  CHECK(s.row_strategy[0] == doctest::Approx(0.5));
  PayoffMatrix dominated(2, 2);
  dominated.at(0, 0) = 3;
  dominated.at(0, 1) = 4;
  dominated.at(1, 0) = 1;
  dominated.at(1, 1) = 2;
  s = SolveZeroSumGame(dominated);
  CHECK(s.value == doctest::Approx(2.0));
  CHECK(s.row_strategy[1] == doctest::Approx(1.0));
  CHECK_THROWS_AS(SolveZeroSumGame(PayoffMatrix{}), Error);
}

TEST_CASE("zero direction yields uniform strategy") {
  GridSet g = SmallGrids(1, 0.5);
  MixedStrategy s = SolveHalfspaceGame({}, g, 0.0, 1e-9);
  CHECK(s.support.size() == g.N());
  CHECK(s.value == 0.0);
  for (const auto& [i, p] : s.support) CHECK(p == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("hand example: direction on a point-mass forecast") {
  GridSet g = SmallGrids(1, 0.5);
  const std::size_t f0 = FindForecast(g, {1.0, 0.0});
  BlockVector u;
  u[{f0, 0}] = {1.0, -1.0};
  // Scalar rows: forecast f0 pays (0, -2); others pay 0.
  MixedStrategy s = SolveHalfspaceGame(u, g, 0.0, 1e-9);
  CHECK(s.value <= 1e-12);
  CHECK(WorstCaseScalarPayoff(s, u, g) <= 1e-12);
  CHECK(ScalarPayoff(s, u, 0, 0, g) <= 1e-12);
  CHECK(ScalarPayoff(s, u, 1, 0, g) <= 1e-12);
}

TEST_CASE("halfspace certificate on random means") {
  std::mt19937_64 rng(23);
  for (int K : {1, 2}) {
    GridSet g = SmallGrids(K, 0.25);
    for (int trial = 0; trial < 40; ++trial) {
      MeanPayoff mean(g.M());
      std::uniform_int_distribution<std::size_t> fi(0, g.N() - 1), sj(0, g.K() - 1), bin(0, 1);
      const int rounds = 1 + trial * 5;
      for (int t = 0; t < rounds; ++t) mean.Add(PayoffVector(fi(rng), sj(rng), bin(rng), g));
      const TargetSet U{0.25};
      const Halfspace h = ComputeHalfspace(mean, U);
      const MixedStrategy s = BlackwellStrategy(mean, U, g);
      double total = 0.0;
      for (const auto& [i, p] : s.support) total += p;
      CHECK(std::abs(total - 1.0) <= 1e-10);
      if (h.inside) {
        CHECK(s.support.size() == g.N());
        continue;
      }
      // Exhaustive over the K*M pure moves.
      for (std::size_t j = 0; j < g.K(); ++j) {
        for (std::size_t a = 0; a < g.M(); ++a) {
          CHECK(ScalarPayoff(s, h.direction, a, j, g) <= h.anchor + 1e-9);
        }
      }
    }
  }
}

TEST_CASE("halfspace quantities") {
  GridSet g = SmallGrids(1, 0.25);
  const std::size_t half = FindForecast(g, {0.5, 0.5});
  MeanPayoff mean(g.M());
  mean.Add(PayoffVector(half, 0, 1, g));
  const Halfspace h = ComputeHalfspace(mean, TargetSet{0.25});
  // m = (-0.5, 0.5): threshold 0.375, projection (-0.125, 0.125), u = (-0.375, 0.375).
  REQUIRE(h.direction.size() == 1);
  const auto& u = h.direction.at({half, 0});
  CHECK(u[0] == doctest::Approx(-0.375));
  CHECK(u[1] == doctest::Approx(0.375));
  CHECK(h.anchor == doctest::Approx(0.375 * 0.25));
  CHECK(h.dist_l2 == doctest::Approx(0.375 * std::sqrt(2.0)));
  CHECK(h.dist_l1 == doctest::Approx(0.75));
  CHECK_FALSE(h.inside);
  const MixedStrategy s = BlackwellStrategy(mean, TargetSet{0.25}, g);
  CHECK(WorstCaseScalarPayoff(s, h.direction, g) <= h.anchor + 1e-9);
}

TEST_CASE("inside the target set the strategy is uniform") {
  GridSet g = SmallGrids(1, 0.25);
  MeanPayoff empty(g.M());
  CHECK(BlackwellStrategy(empty, TargetSet{0.25}, g).support.size() == g.N());

  // Two rounds leaving ||m||_1 = 0.25 exactly.
  const std::size_t q = FindForecast(g, {0.75, 0.25});
  MeanPayoff m(g.M());
  m.Add(PayoffVector(q, 0, 0, g));  // (0.25, -0.25)
  m.Add(PayoffVector(q, 0, 0, g));
  m.Add(PayoffVector(FindForecast(g, {1.0, 0.0}), 0, 0, g));
  m.Add(PayoffVector(FindForecast(g, {1.0, 0.0}), 0, 0, g));
  CHECK(m.L1Norm() == doctest::Approx(0.25));
  const Halfspace h = ComputeHalfspace(m, TargetSet{0.25});
  CHECK(h.inside);
  const MixedStrategy s = BlackwellStrategy(m, TargetSet{0.25}, g);
  CHECK(s.support.size() == g.N());
}

TEST_CASE("mean payoff maintenance") {
  GridSet g = SmallGrids(2, 0.25);
  MeanPayoff m(g.M());
  CHECK(m.Mean().empty());
  const SparsePayoff p = PayoffVector(3, 1, 0, g);
  m = UpdateMeanPayoff(m, p);
  CHECK(m.T() == 1);
  CHECK(m.Block(p.block) == p.values);

  SparsePayoff zero{p.block, std::vector<double>(g.M(), 0.0)};
  m = UpdateMeanPayoff(m, zero);
  CHECK(m.T() == 2);
  for (std::size_t a = 0; a < g.M(); ++a) CHECK(m.Block(p.block)[a] == doctest::Approx(p.values[a] / 2));

  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> fi(0, g.N() - 1), sj(0, 1), bin(0, 1);
  MeanPayoff inc(g.M());
  std::vector<SparsePayoff> all;
  for (int t = 0; t < 1000; ++t) {
    all.push_back(PayoffVector(fi(rng), sj(rng), bin(rng), g));
    inc = UpdateMeanPayoff(inc, all.back());
  }
  BlockVector batch;
  for (const auto& q : all) {
    auto& b = batch.try_emplace(q.block, g.M(), 0.0).first->second;
    for (std::size_t a = 0; a < g.M(); ++a) b[a] += q.values[a] / 1000.0;
  }
  CHECK(inc.block_count() <= 1000);
  CHECK(inc.block_count() <= g.N() * g.K());
  const BlockVector mean = inc.Mean();
  for (const auto& [key, b] : batch) {
    const auto got = inc.Block(key);
    for (std::size_t a = 0; a < g.M(); ++a) CHECK(std::abs(got[a] - b[a]) <= 1e-9);
  }
  for (const auto& [key, b] : mean) CHECK(batch.count(key) == 1);
}

}  // TEST_SUITE
