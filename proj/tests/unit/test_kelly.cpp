#include <doctest.h>

#include <cmath>
#include <random>

#include "calport/error.hpp"
#include "calport/kelly.hpp"

using namespace calport;

namespace {

struct Brute {
  double b1;
  double value;
};

// Grid search over b1 in steps of `step`.
Brute BruteForce(const DiscreteReturnDist& d, double step = 1e-4) {
  Brute best{0.0, -INFINITY};
  const int n = static_cast<int>(std::lround(1.0 / step));
  for (int i = 0; i <= n; ++i) {
    const double b1 = double(i) / n;
    double v = 0.0;
    for (const auto& a : d.atoms) v += a.p * std::log2(b1 * a.x[0] + (1.0 - b1) * a.x[1]);
    if (v > best.value) best = {b1, v};
  }
  return best;
}

DiscreteReturnDist RandomDist(std::mt19937_64& rng, int k = 2) {
  std::uniform_int_distribution<int> atoms(1, 6);
  std::uniform_real_distribution<double> coord(0.5, 2.0), w(0.0, 1.0);
  DiscreteReturnDist d;
  const int n = atoms(rng);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    ReturnAtom a;
    for (int c = 0; c < k; ++c) a.x.push_back(coord(rng));
    a.p = w(rng) + 1e-3;
    total += a.p;
    d.atoms.push_back(a);
  }
  for (auto& a : d.atoms) a.p /= total;
  return d;
}

// Arcsine-prior mixture by direct quadrature with b = u^2 on [0, 1/2] and
// b = 1 - u^2 on [1/2, 1]; both pieces have the bounded density
// 2 / (pi sqrt(1 - u^2)) in u.
double CoverOracle(const std::vector<ReturnVector>& history, int nodes) {
  double num = 0.0, den = 0.0;
  const double top = std::sqrt(0.5);
  for (int piece = 0; piece < 2; ++piece) {
    for (int i = 0; i < nodes; ++i) {
      const double u = top * (i + 0.5) / nodes;
      const double b = piece == 0 ? u * u : 1.0 - u * u;
      double wealth = 1.0;
      for (const auto& x : history) wealth *= b * x[0] + (1.0 - b) * x[1];
      const double w = wealth / std::sqrt(1.0 - u * u);
      num += b * w;
      den += w;
    }
  }
  return num / den;
}

}  // namespace

TEST_SUITE("kelly") {

TEST_CASE("log optimal examples") {
  DiscreteReturnDist d{{{{2.0, 1.0}, 0.5}, {{0.5, 1.0}, 0.5}}};
  Portfolio b = LogOptimalPortfolio(d);
  CHECK(b.weights[0] == doctest::Approx(0.5).epsilon(1e-7));
  CHECK(KktResidual(b, d, 1e-8) <= 1e-8);
  const Brute bf = BruteForce(d, 1e-3);
  CHECK(bf.b1 == doctest::Approx(0.5));

  Portfolio one = LogOptimalPortfolio(DiscreteReturnDist{{{{2.0, 1.0}, 1.0}}});
  CHECK(one.weights[0] == doctest::Approx(1.0));
  CHECK(GrowthRate(one, DiscreteReturnDist{{{{2.0, 1.0}, 1.0}}}) == doctest::Approx(1.0));

  Portfolio flat = LogOptimalPortfolio(DiscreteReturnDist{{{{1.5, 1.5}, 1.0}}});
  CHECK(flat.weights == std::vector<double>{0.5, 0.5});
  Portfolio flat3 = LogOptimalPortfolio(
      DiscreteReturnDist{{{{1.5, 1.5, 1.5}, 0.4}, {{0.7, 0.7, 0.7}, 0.6}}});
  for (double w : flat3.weights) CHECK(w == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("growth rate examples") {
  DiscreteReturnDist d{{{{2.0, 1.0}, 0.5}, {{0.5, 1.0}, 0.5}}};
  CHECK(GrowthRate(Portfolio::Uniform(2), DiscreteReturnDist{{{{2.0, 2.0}, 1.0}}}) ==
        doctest::Approx(1.0));
  CHECK(GrowthRate(Portfolio{{1.0, 0.0}}, d) == doctest::Approx(0.0));
  CHECK(GrowthRate(Portfolio{{0.5, 0.5}}, d) == doctest::Approx(0.0849625007211562));
}

TEST_CASE("solver matches brute force on random two-asset distributions") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const DiscreteReturnDist d = RandomDist(rng);
    const Portfolio b = LogOptimalPortfolio(d, 1e-8);
    const Brute bf = BruteForce(d);
    const double v = GrowthRate(b, d);
    CHECK(v >= bf.value - 1e-12);
    CHECK(v - bf.value <= 1e-6);
    CHECK(KktResidual(b, d, 1e-8) <= 1e-8);
    // The objective is flat near the optimum; compare arguments only where it is not.
    const double curvature = [&] {
      double c = 0.0;
      for (const auto& a : d.atoms) {
        const double den = b.weights[0] * a.x[0] + b.weights[1] * a.x[1];
        c += a.p * (a.x[0] - a.x[1]) * (a.x[0] - a.x[1]) / (den * den);
      }
      return c;
    }();
    if (curvature > 1e-2) CHECK(std::abs(b.weights[0] - bf.b1) <= 1e-3);
  }
}

TEST_CASE("KKT certificate and scale behavior") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 2 + trial % 4;
    const DiscreteReturnDist d = RandomDist(rng, k);
    const Portfolio b = LogOptimalPortfolio(d);
    b.Validate();
    const auto g = KellyGradient(b, d);
    double bg = 0.0, gmax = -INFINITY;
    for (int j = 0; j < k; ++j) {
      bg += b.weights[j] * g[j];
      gmax = std::max(gmax, g[j]);
      if (b.weights[j] > 1e-8) CHECK(g[j] >= 1.0 - 1e-8);
    }
    CHECK(std::abs(bg - 1.0) <= 1e-9);
    CHECK(gmax <= 1.0 + 1e-8);

    const double gamma = 0.5 + trial * 0.01;
    DiscreteReturnDist scaled = d;
    for (auto& a : scaled.atoms) {
      for (double& v : a.x) v *= gamma;
    }
    const Portfolio bs = LogOptimalPortfolio(scaled);
    CHECK(GrowthRate(bs, scaled) == doctest::Approx(GrowthRate(b, d) + std::log2(gamma)).epsilon(1e-9));
    CHECK(GrowthRate(b, scaled) >= GrowthRate(bs, scaled) - 1e-9);
  }
}

TEST_CASE("invalid inputs") {
  CHECK_THROWS_AS(LogOptimalPortfolio(DiscreteReturnDist{}), Error);
  CHECK_THROWS_AS(LogOptimalPortfolio(DiscreteReturnDist{{{{2.0, 1.0}, 0.7}}}), Error);
  CHECK_THROWS_AS(LogOptimalPortfolio(DiscreteReturnDist{{{{2.0, 1.0}, 0.5}, {{1.0}, 0.5}}}),
                  Error);
  CHECK_THROWS_AS(Portfolio({{0.7, 0.4}}).Validate(), Error);
  CHECK_THROWS_AS(Portfolio({{1.2, -0.2}}).Validate(), Error);
  CHECK_THROWS_AS(Bcrp({}), Error);
}

TEST_CASE("bcrp examples") {
  CHECK(Bcrp({{2.0, 1.0}, {2.0, 1.0}}).weights[0] == doctest::Approx(1.0));
  std::vector<ReturnVector> alt;
  for (int i = 0; i < 50; ++i) {
    alt.push_back({2.0, 1.0});
    alt.push_back({0.5, 1.0});
  }
  CHECK(Bcrp(alt).weights[0] == doctest::Approx(0.5).epsilon(1e-7));

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> coord(0.5, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<ReturnVector> xs(30);
    for (auto& x : xs) x = {coord(rng), coord(rng), coord(rng)};
    const Portfolio b = Bcrp(xs);
    for (std::size_t a = 0; a < 3; ++a) {
      CHECK(LogWealth(b, xs) >= LogWealth(Portfolio::Unit(3, a), xs) - 1e-9);
    }
  }
}

TEST_CASE("cover universal weight") {
  const Portfolio empty = CoverUniversalWeight({}, 2);
  CHECK(empty.weights[0] == 0.5);
  CHECK(empty.weights[1] == 0.5);

  const Portfolio one = CoverUniversalWeight({{2.0, 1.0}}, 2);
  CHECK(std::abs(one.weights[0] - 7.0 / 12.0) <= 1e-6);
  CHECK(std::abs(CoverOracle({{2.0, 1.0}}, 500000) - 7.0 / 12.0) <= 1e-6);
  CHECK(std::abs(one.weights[0] - CoverOracle({{2.0, 1.0}}, 500000)) <= 1e-6);

  const Portfolio flat = CoverUniversalWeight(std::vector<ReturnVector>(40, {1.0, 1.0}), 2);
  CHECK(flat.weights[0] == doctest::Approx(0.5).epsilon(1e-12));

  std::vector<ReturnVector> mixed = {{2.0, 1.0}, {0.5, 1.0}, {1.3, 0.9}, {0.7, 1.8}, {2.0, 0.5}};
  CHECK(CoverUniversalWeight(mixed, 2).weights[0] ==
        doctest::Approx(CoverOracle(mixed, 200000)).epsilon(1e-6));

  CHECK_THROWS_AS(CoverUniversalWeight({{1.0, 1.0, 1.0}}, 3), Error);
  try {
    CoverUniversalWeight({}, 3);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kUnsupported);
  }
}

TEST_CASE("cover mixture is incremental and tracks the bcrp") {
  std::mt19937_64 rng(12);
  CoverMixture mix;
  std::vector<ReturnVector> hist;
  for (int t = 1; t <= 2000; ++t) {
    const ReturnVector x = (rng() & 1) ? ReturnVector{2.0, 1.0} : ReturnVector{0.5, 1.0};
    mix.Update(x);
    hist.push_back(x);
    if (t == 1 || t == 17 || t == 300) {
      CHECK(mix.Weight().weights[0] ==
            doctest::Approx(CoverUniversalWeight(hist, 2).weights[0]).epsilon(1e-12));
    }
    mix.Weight().Validate();
  }
  // The realized stream's bcrp is 3p - 1 in the frequency p of (2,1).
  CHECK(std::abs(mix.Weight().weights[0] - Bcrp(hist).weights[0]) <= 0.05);

  CoverMixture balanced;
  for (int t = 0; t < 2000; ++t) {
    balanced.Update(t % 2 ? ReturnVector{0.5, 1.0} : ReturnVector{2.0, 1.0});
  }
  CHECK(std::abs(balanced.Weight().weights[0] - 0.5) <= 0.05);
}

TEST_CASE("best piecewise stationary") {
  std::vector<std::pair<std::size_t, ReturnVector>> h;
  std::vector<ReturnVector> all;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> coord(0.5, 2.0);
  for (int t = 0; t < 40; ++t) {
    h.push_back({0, {coord(rng), coord(rng)}});
    all.push_back(h.back().second);
  }
  const auto single = BestPiecewiseStationary(h, 1);
  CHECK(single[0].weights[0] == doctest::Approx(Bcrp(all).weights[0]).epsilon(1e-9));

  const auto two = BestPiecewiseStationary({{0, {2.0, 1.0}}, {1, {0.5, 2.0}}, {0, {2.0, 1.0}}}, 2);
  CHECK(two[0].weights[0] == doctest::Approx(1.0));
  CHECK(two[1].weights[1] == doctest::Approx(1.0));

  const auto sparse = BestPiecewiseStationary({{0, {2.0, 1.0}}}, 3);
  CHECK(sparse[2].weights == std::vector<double>{0.5, 0.5});

  for (auto& [j, x] : h) j = x[0] > x[1] ? 1 : 0;
  const auto pw = BestPiecewiseStationary(h, 2);
  double pw_wealth = 0.0;
  for (const auto& [j, x] : h) pw_wealth += std::log2(pw[j].Dot(x));
  CHECK(pw_wealth >= LogWealth(Bcrp(all), all) - 1e-9);
  CHECK_THROWS_AS(BestPiecewiseStationary({}, 2), Error);
}

}  // TEST_SUITE
