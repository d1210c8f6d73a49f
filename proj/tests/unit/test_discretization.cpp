#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "calport/discretization.hpp"
#include "calport/error.hpp"

using namespace calport;

namespace {

ErrorCode CodeOf(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an exception");
  return ErrorCode::kInvalidParams;
}

std::uint64_t Binomial(std::uint64_t n, std::uint64_t r) {
  std::uint64_t out = 1;
  for (std::uint64_t i = 1; i <= r; ++i) out = out * (n - r + i) / i;
  return out;
}

// Counts compositions of D into M nonnegative parts by recursion.
std::uint64_t CountCompositions(int D, int M) {
  if (M == 1) return 1;
  std::uint64_t n = 0;
  for (int first = 0; first <= D; ++first) n += CountCompositions(D - first, M - 1);
  return n;
}

std::size_t NearestByScan(const ReturnGrid& g, const std::vector<double>& x) {
  std::size_t best = 0;
  double best_d = INFINITY;
  for (std::size_t i = 0; i < g.size(); ++i) {
    double d = 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) d += (x[c] - g.point(i)[c]) * (x[c] - g.point(i)[c]);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

}  // namespace

TEST_SUITE("discretization") {

TEST_CASE("return grid for k=1 and mu=0.25 has four points") {
  MarketSpec spec;
  spec.k = 1;
  GridSet g = BuildGrids(spec, {1, 0.25, 0.25, 0.0, 5000});
  REQUIRE(g.M() == 4);
  CHECK(g.returns.per_axis() == 4);
  const double expected[] = {0.5, 1.0, 1.5, 2.0};
  for (std::size_t i = 0; i < 4; ++i) CHECK(g.returns.point(i)[0] == doctest::Approx(expected[i]));
  CHECK(g.returns.mesh() == doctest::Approx(0.25));
}

TEST_CASE("degenerate bounds are rejected") {
  MarketSpec spec;
  spec.lambda1 = spec.lambda2 = 1.0;
  CHECK(CodeOf([&] { BuildGrids(spec, {}); }) == ErrorCode::kInvalidParams);
  MarketSpec neg;
  neg.lambda1 = 0.0;
  CHECK(CodeOf([&] { neg.Validate(); }) == ErrorCode::kInvalidParams);
  MarketSpec flipped;
  flipped.signal_lo = 1.0;
  flipped.signal_hi = 0.0;
  CHECK(CodeOf([&] { flipped.Validate(); }) == ErrorCode::kInvalidParams);
}

TEST_CASE("M=3 eps=1 gives D=2, six lattice points, N=36 at K=2") {
  ForecastGrid f(3, 2, 1.0, 5000);
  CHECK(f.D() == 2);
  CHECK(f.per_signal_size() == 6);
  CHECK(f.N() == 36);
  CHECK(CountCompositions(2, 3) == 6);
}

TEST_CASE("lattice counts match composition enumeration") {
  for (int M = 1; M <= 5; ++M) {
    for (int D = 1; D <= 6; ++D) {
      CHECK(SimplexLatticeCount(D, M) == CountCompositions(D, M));
      CHECK(SimplexLatticeCount(D, M) == Binomial(D + M - 1, M - 1));
    }
  }
}

TEST_CASE("lattice denominator bounds the rounding error") {
  CHECK(LatticeDenominator(2, 0.25) == 4);
  CHECK(LatticeDenominator(3, 1.0) == 2);
  CHECK(LatticeDenominator(4, 0.5) == 6);
}

TEST_CASE("cap violations are reported") {
  MarketSpec spec;
  GridStageParams p{2, 0.25, 0.25, 0.0, 100};
  CHECK(CodeOf([&] { BuildGrids(spec, p); }) == ErrorCode::kCapExceeded);
  try {
    BuildGrids(spec, p);
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("cap 100") != std::string::npos);
  }
}

TEST_CASE("signal quantization") {
  SignalGrid g(0.0, 1.0, 3);
  REQUIRE(g.size() == 3);
  CHECK(g.nu() == doctest::Approx(0.25));
  CHECK(g.Quantize(0.5) == 1);
  CHECK(g.Quantize(0.74) == 1);
  CHECK(g.Quantize(0.25) == 0);  // tie goes low
  CHECK(g.Quantize(0.75) == 1);
  CHECK(g.Quantize(1.0) == 2);
  CHECK(CodeOf([&] { g.Quantize(1.01); }) == ErrorCode::kOutOfRange);
  CHECK(CodeOf([&] { g.Quantize(-0.01); }) == ErrorCode::kOutOfRange);
}

TEST_CASE("single signal point sits at the midpoint") {
  SignalGrid g(0.0, 1.0, 1);
  CHECK(g.points()[0] == doctest::Approx(0.5));
  CHECK(g.nu() == doctest::Approx(0.5));
  CHECK(g.Quantize(0.0) == 0);
  CHECK(g.Quantize(1.0) == 0);
}

TEST_CASE("return quantization examples") {
  MarketSpec spec;
  spec.k = 1;
  ReturnGrid g = ReturnGrid::Uniform(spec, 0.25);
  CHECK(g.Quantize(std::vector<double>{1.2}) == 1);
  CHECK(g.Quantize(std::vector<double>{1.25}) == 1);  // tie goes low
  CHECK(g.Quantize(std::vector<double>{2.0}) == 3);
  CHECK(CodeOf([&] { g.Quantize(std::vector<double>{2.5}); }) == ErrorCode::kOutOfRange);
  CHECK(CodeOf([&] { g.Quantize(std::vector<double>{0.4}); }) == ErrorCode::kOutOfRange);
}

TEST_CASE("explicit return grid") {
  MarketSpec spec;
  ReturnGrid g = ReturnGrid::FromPoints(spec, {{2.0, 1.0}, {0.5, 1.0}});
  CHECK(g.size() == 2);
  CHECK_FALSE(g.uniform());
  CHECK(g.Quantize(std::vector<double>{2.0, 1.0}) == 0);
  CHECK(g.Quantize(std::vector<double>{0.6, 1.9}) == 1);
  CHECK(CodeOf([&] { ReturnGrid::FromPoints(spec, {{2.5, 1.0}}); }) == ErrorCode::kInvalidParams);
}

TEST_CASE("mesh certification by sampling") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int k : {1, 2, 3}) {
    for (double mu : {0.1, 0.25, 0.6}) {
      MarketSpec spec;
      spec.k = k;
      ReturnGrid g = ReturnGrid::Uniform(spec, mu);
      CHECK(g.mesh() <= mu + 1e-12);
      CHECK(g.size() == static_cast<std::size_t>(std::pow(g.per_axis(), k) + 0.5));
      for (int s = 0; s < 10000; ++s) {
        std::vector<double> x(k);
        for (double& v : x) v = spec.lambda1 + (spec.lambda2 - spec.lambda1) * unit(rng);
        const std::size_t i = g.Quantize(x);
        double d = 0.0;
        for (int c = 0; c < k; ++c) d += (x[c] - g.point(i)[c]) * (x[c] - g.point(i)[c]);
        REQUIRE(std::sqrt(d) <= mu + 1e-12);
        // Same answer as an exhaustive scan, up to exact ties.
        const std::size_t j = NearestByScan(g, x);
        double dj = 0.0;
        for (int c = 0; c < k; ++c) dj += (x[c] - g.point(j)[c]) * (x[c] - g.point(j)[c]);
        REQUIRE(d == doctest::Approx(dj).epsilon(1e-12));
      }
    }
  }

  SignalGrid sg(-1.0, 3.0, 5);
  for (int s = 0; s < 10000; ++s) {
    const double z = -1.0 + 4.0 * unit(rng);
    REQUIRE(std::abs(z - sg.points()[sg.Quantize(z)]) <= sg.nu() + 1e-12);
  }

  for (std::size_t M : {2u, 3u, 5u}) {
    for (double eps : {0.1, 0.25, 1.0}) {
      ForecastGrid f(M, 1, eps, 1u << 30);
      std::gamma_distribution<double> gam(1.0, 1.0);
      for (int s = 0; s < (M == 5 && eps == 0.1 ? 500 : 10000); ++s) {
        std::vector<double> p(M);
        double total = 0.0;
        for (double& v : p) total += (v = gam(rng));
        for (double& v : p) v /= total;
        const auto row = f.lattice_row(f.QuantizeRow(p));
        double l1 = 0.0;
        for (std::size_t m = 0; m < M; ++m) l1 += std::abs(p[m] - row[m]);
        REQUIRE(l1 <= eps + 1e-12);
      }
    }
  }
}

TEST_CASE("round trip on grid points") {
  MarketSpec spec;
  spec.k = 2;
  GridSet g = BuildGrids(spec, {2, 0.9, 4.0, 0.0, 5000});
  REQUIRE(g.M() == 9);
  REQUIRE(g.N() == 45 * 45);
  for (std::size_t j = 0; j < g.K(); ++j) CHECK(g.signals.Quantize(g.signals.points()[j]) == j);
  for (std::size_t i = 0; i < g.M(); ++i) CHECK(g.returns.Quantize(g.returns.point(i)) == i);
  for (std::size_t p = 0; p < g.forecasts.per_signal_size(); ++p) {
    const auto row = g.forecasts.lattice_row(p);
    CHECK(g.forecasts.QuantizeRow(std::vector<double>(row.begin(), row.end())) == p);
  }
}

TEST_CASE("forecast indexing is a bijection") {
  ForecastGrid f(3, 3, 1.0, 10000);
  REQUIRE(f.N() == 216);
  std::vector<bool> seen(f.N(), false);
  for (std::size_t i = 0; i < f.N(); ++i) {
    const auto digits = f.Decompose(i);
    REQUIRE(digits.size() == 3);
    CHECK(digits[0] == i % 6);  // signal 0 least significant
    CHECK(f.Compose(digits) == i);
    const ConditionalForecast cf = f.Forecast(i);
    REQUIRE(cf.rows.size() == 3);
    CHECK(f.Quantize(cf.rows) == i);
    for (const auto& row : cf.rows) {
      double s = 0.0;
      for (double v : row) {
        CHECK(v >= 0.0);
        s += v;
      }
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
    seen[i] = true;
  }
  for (bool b : seen) CHECK(b);
  CHECK(CodeOf([&] { f.Digit(f.N(), 0); }) == ErrorCode::kIndexOutOfRange);
}

TEST_CASE("lattice rows are exact rationals") {
  ForecastGrid f(4, 1, 0.5, 1000);
  for (std::size_t p = 0; p < f.per_signal_size(); ++p) {
    int total = 0;
    for (int c : f.lattice_counts(p)) {
      CHECK(c >= 0);
      total += c;
    }
    CHECK(static_cast<std::uint64_t>(total) == f.D());
  }
}

}  // TEST_SUITE
