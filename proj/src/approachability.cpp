#include "calport/approachability.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include "calport/error.hpp"
#include "calport/matrix_game.hpp"

namespace calport {

std::vector<double> MeanPayoff::Block(const BlockKey& key) const {
  auto it = sums_.find(key);
  std::vector<double> out(m_, 0.0);
  if (it == sums_.end() || t_ == 0) return out;
  for (std::size_t m = 0; m < m_; ++m) out[m] = it->second[m] / double(t_);
  return out;
}

BlockVector MeanPayoff::Mean() const {
  BlockVector out;
  if (t_ == 0) return out;
  const double inv = 1.0 / double(t_);
  for (const auto& [key, sum] : sums_) {
    std::vector<double> v(sum.size());
    for (std::size_t m = 0; m < sum.size(); ++m) v[m] = sum[m] * inv;
    out.emplace(key, std::move(v));
  }
  return out;
}

double MeanPayoff::L1Norm() const {
  if (t_ == 0) return 0.0;
  double acc = 0.0;
  for (const auto& [key, sum] : sums_) {
    for (double v : sum) acc += std::abs(v);
  }
  return acc / double(t_);
}

void MeanPayoff::Add(const SparsePayoff& payoff) {
  if (payoff.values.size() != m_) {
    Fail(ErrorCode::kInvalidParams, "payoff block length differs from M");
  }
  ++t_;
  bool nonzero = false;
  for (double v : payoff.values) nonzero = nonzero || v != 0.0;
  if (!nonzero) return;
  auto [it, inserted] = sums_.try_emplace(payoff.block, m_, 0.0);
  for (std::size_t m = 0; m < m_; ++m) it->second[m] += payoff.values[m];
}

MeanPayoff UpdateMeanPayoff(MeanPayoff mean, const SparsePayoff& round_payoff) {
  mean.Add(round_payoff);
  return mean;
}

double MixedStrategy::ProbabilityOf(std::size_t forecast) const {
  auto it = std::lower_bound(
      support.begin(), support.end(), forecast,
      [](const std::pair<std::size_t, double>& e, std::size_t f) { return e.first < f; });
  return (it != support.end() && it->first == forecast) ? it->second : 0.0;
}

SparsePayoff PayoffVector(std::size_t forecast, std::size_t signal, std::size_t bin,
                          const GridSet& grids) {
  if (forecast >= grids.N() || signal >= grids.K() || bin >= grids.M()) {
    std::ostringstream msg;
    msg << "payoff index out of range: forecast " << forecast << "/" << grids.N()
        << ", signal " << signal << "/" << grids.K() << ", bin " << bin << "/"
        << grids.M();
    Fail(ErrorCode::kIndexOutOfRange, msg.str());
  }
  SparsePayoff p;
  p.block = {forecast, signal};
  auto row = grids.forecasts.Row(forecast, signal);
  p.values.assign(row.begin(), row.end());
  for (double& v : p.values) v = -v;
  p.values[bin] += 1.0;
  return p;
}

double L1BallThreshold(std::span<const double> v, double epsilon) {
  if (!(epsilon > 0.0)) Fail(ErrorCode::kInvalidParams, "epsilon must be > 0");
  double l1 = 0.0;
  for (double x : v) l1 += std::abs(x);
  if (l1 <= epsilon) return 0.0;
  std::vector<double> mag(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) mag[i] = std::abs(v[i]);
  std::sort(mag.begin(), mag.end(), std::greater<>());
  double cum = 0.0;
  double theta = 0.0;
  for (std::size_t j = 0; j < mag.size(); ++j) {
    cum += mag[j];
    const double t = (cum - epsilon) / double(j + 1);
    if (mag[j] - t > 0.0) theta = t;
  }
  return std::max(theta, 0.0);
}

std::vector<double> ProjectL1Ball(std::span<const double> v, double epsilon) {
  const double theta = L1BallThreshold(v, epsilon);
  std::vector<double> out(v.begin(), v.end());
  if (theta == 0.0) return out;
  for (double& x : out) {
    const double shrunk = std::max(std::abs(x) - theta, 0.0);
    x = std::copysign(shrunk, x);
    if (shrunk == 0.0) x = 0.0;
  }
  return out;
}

Halfspace ComputeHalfspace(const MeanPayoff& mean, const TargetSet& target, double tol) {
  Halfspace h;
  const BlockVector m = mean.Mean();
  std::vector<double> flat;
  flat.reserve(m.size() * mean.M());
  for (const auto& [key, block] : m) flat.insert(flat.end(), block.begin(), block.end());
  const std::vector<double> proj = ProjectL1Ball(flat, target.epsilon);

  double l2sq = 0.0;
  std::size_t pos = 0;
  for (const auto& [key, block] : m) {
    std::vector<double> u(block.size());
    bool any = false;
    for (std::size_t c = 0; c < block.size(); ++c, ++pos) {
      u[c] = flat[pos] - proj[pos];
      h.anchor += u[c] * proj[pos];
      l2sq += u[c] * u[c];
      h.dist_l1 += std::abs(u[c]);
      any = any || u[c] != 0.0;
    }
    if (any) h.direction.emplace(key, std::move(u));
  }
  h.dist_l2 = std::sqrt(l2sq);
  h.inside = h.dist_l2 <= tol;
  return h;
}

double ScalarPayoff(const MixedStrategy& strategy, const BlockVector& direction,
                    std::size_t bin, std::size_t signal, const GridSet& grids) {
  double acc = 0.0;
  for (const auto& [forecast, prob] : strategy.support) {
    auto it = direction.find(BlockKey{forecast, signal});
    if (it == direction.end()) continue;
    const auto& u = it->second;
    auto row = grids.forecasts.Row(forecast, signal);
    double g = u[bin];
    for (std::size_t m = 0; m < u.size(); ++m) g -= u[m] * row[m];
    acc += prob * g;
  }
  return acc;
}

double WorstCaseScalarPayoff(const MixedStrategy& strategy, const BlockVector& direction,
                             const GridSet& grids) {
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < grids.K(); ++j) {
    for (std::size_t a = 0; a < grids.M(); ++a) {
      worst = std::max(worst, ScalarPayoff(strategy, direction, a, j, grids));
    }
  }
  return worst;
}

MixedStrategy UniformStrategy(std::size_t n) {
  MixedStrategy s;
  s.support.reserve(n);
  const double p = 1.0 / double(n);
  for (std::size_t i = 0; i < n; ++i) s.support.emplace_back(i, p);
  return s;
}

MixedStrategy SolveHalfspaceGame(const BlockVector& direction, const GridSet& grids,
                                 double anchor, double tol) {
  const std::size_t N = grids.N();
  const std::size_t K = grids.K();
  const std::size_t M = grids.M();

  std::vector<std::size_t> rows;
  for (const auto& [key, u] : direction) {
    if (key.forecast >= N || key.signal >= K || u.size() != M) {
      Fail(ErrorCode::kIndexOutOfRange, "direction block outside the grids");
    }
    if (rows.empty() || rows.back() != key.forecast) rows.push_back(key.forecast);
  }
  // std::map order on (forecast, signal) keeps rows sorted and unique.
  if (rows.empty()) {
    MixedStrategy s = UniformStrategy(N);
    s.value = 0.0;
    return s;
  }
  const bool zero_row = rows.size() < N;

  PayoffMatrix game(rows.size() + (zero_row ? 1 : 0), K * M);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t j = 0; j < K; ++j) {
      auto it = direction.find(BlockKey{rows[r], j});
      if (it == direction.end()) continue;
      const auto& u = it->second;
      auto srow = grids.forecasts.Row(rows[r], j);
      double dot = 0.0;
      for (std::size_t m = 0; m < M; ++m) dot += u[m] * srow[m];
      for (std::size_t a = 0; a < M; ++a) game.at(r, j * M + a) = u[a] - dot;
    }
  }
  const GameSolution sol = SolveZeroSumGame(game);

  std::vector<double> dense(N, 0.0);
  for (std::size_t r = 0; r < rows.size(); ++r) dense[rows[r]] = sol.row_strategy[r];
  if (zero_row) {
    const double mass = sol.row_strategy.back();
    if (mass > 0.0) {
      const double share = mass / double(N - rows.size());
      std::size_t r = 0;
      for (std::size_t i = 0; i < N; ++i) {
        if (r < rows.size() && rows[r] == i) {
          ++r;
          continue;
        }
        dense[i] = share;
      }
    }
  }
  MixedStrategy s;
  for (std::size_t i = 0; i < N; ++i) {
    if (dense[i] > 0.0) s.support.emplace_back(i, dense[i]);
  }
  s.value = sol.value;
  if (s.value > anchor + tol) {
    std::ostringstream msg;
    msg << "halfspace game value " << s.value << " exceeds anchor " << anchor
        << " + tol " << tol;
    Fail(ErrorCode::kInfeasible, msg.str());
  }
  return s;
}

MixedStrategy BlackwellStrategy(const MeanPayoff& mean, const TargetSet& target,
                                const GridSet& grids, double tol) {
  const Halfspace h = ComputeHalfspace(mean, target, tol);
  if (h.inside) return UniformStrategy(grids.N());
  return SolveHalfspaceGame(h.direction, grids, h.anchor, tol);
}

}  // namespace calport
