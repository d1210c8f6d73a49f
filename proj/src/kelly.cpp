#include "calport/kelly.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include "calport/error.hpp"

namespace calport {

Portfolio Portfolio::Uniform(std::size_t k) {
  return Portfolio{std::vector<double>(k, 1.0 / double(k))};
}

Portfolio Portfolio::Unit(std::size_t k, std::size_t asset) {
  Portfolio b{std::vector<double>(k, 0.0)};
  b.weights.at(asset) = 1.0;
  return b;
}

double Portfolio::Dot(std::span<const double> x) const {
  if (x.size() != weights.size()) {
    Fail(ErrorCode::kInvalidParams, "portfolio and return vector differ in size");
  }
  double acc = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) acc += weights[j] * x[j];
  return acc;
}

void Portfolio::Validate() const {
  if (weights.empty()) Fail(ErrorCode::kInvalidParams, "empty portfolio");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) Fail(ErrorCode::kInvalidParams, "negative portfolio weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-10) {
    Fail(ErrorCode::kInvalidParams, "portfolio weights do not sum to 1");
  }
}

void DiscreteReturnDist::Validate() const {
  if (atoms.empty()) Fail(ErrorCode::kInvalidParams, "empty return distribution");
  const std::size_t dim = atoms.front().x.size();
  if (dim == 0) Fail(ErrorCode::kInvalidParams, "zero-dimensional return vector");
  double total = 0.0;
  for (const auto& a : atoms) {
    if (a.x.size() != dim) Fail(ErrorCode::kInvalidParams, "atoms differ in dimension");
    if (!(a.p >= 0.0)) Fail(ErrorCode::kInvalidParams, "negative atom probability");
    for (double v : a.x) {
      if (!(v > 0.0) || !std::isfinite(v)) {
        Fail(ErrorCode::kInvalidParams, "return coordinates must be positive");
      }
    }
    total += a.p;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    Fail(ErrorCode::kInvalidParams, "atom probabilities do not sum to 1");
  }
}

DiscreteReturnDist DiscreteReturnDist::Merged() const {
  std::map<ReturnVector, double> acc;
  for (const auto& a : atoms) acc[a.x] += a.p;
  DiscreteReturnDist out;
  out.atoms.reserve(acc.size());
  for (auto& [x, p] : acc) out.atoms.push_back({x, p});
  return out;
}

DiscreteReturnDist DiscreteReturnDist::Empirical(const std::vector<ReturnVector>& returns) {
  if (returns.empty()) Fail(ErrorCode::kInvalidParams, "empty return history");
  std::map<ReturnVector, std::size_t> counts;
  for (const auto& x : returns) ++counts[x];
  DiscreteReturnDist out;
  out.atoms.reserve(counts.size());
  const double n = double(returns.size());
  for (auto& [x, c] : counts) out.atoms.push_back({x, double(c) / n});
  // Exact renormalization so the probabilities pass Validate().
  double total = 0.0;
  for (const auto& a : out.atoms) total += a.p;
  for (auto& a : out.atoms) a.p /= total;
  return out;
}

namespace {

struct Evaluation {
  double objective = 0.0;  // natural log
  std::vector<double> grad;
};

Evaluation Evaluate(const std::vector<double>& b, const DiscreteReturnDist& dist) {
  const std::size_t k = b.size();
  Evaluation e;
  e.grad.assign(k, 0.0);
  for (const auto& a : dist.atoms) {
    if (a.p == 0.0) continue;
    double r = 0.0;
    for (std::size_t j = 0; j < k; ++j) r += b[j] * a.x[j];
    e.objective += a.p * std::log(r);
    const double w = a.p / r;
    for (std::size_t j = 0; j < k; ++j) e.grad[j] += w * a.x[j];
  }
  return e;
}

double Objective(const std::vector<double>& b, const DiscreteReturnDist& dist) {
  double f = 0.0;
  for (const auto& a : dist.atoms) {
    if (a.p == 0.0) continue;
    double r = 0.0;
    for (std::size_t j = 0; j < b.size(); ++j) r += b[j] * a.x[j];
    f += a.p * std::log(r);
  }
  return f;
}

double Residual(const std::vector<double>& b, const std::vector<double>& g, double tol) {
  double res = 0.0;
  for (std::size_t j = 0; j < b.size(); ++j) {
    res = std::max(res, g[j] - 1.0);
    if (b[j] > tol) res = std::max(res, 1.0 - g[j]);
  }
  return res;
}

bool ObjectiveIsConstant(const DiscreteReturnDist& dist) {
  for (const auto& a : dist.atoms) {
    if (a.p == 0.0) continue;
    for (double v : a.x) {
      if (std::abs(v - a.x.front()) > 1e-14 * std::abs(a.x.front())) return false;
    }
  }
  return true;
}

// Solves (H + ridge I) z = rhs for a small symmetric positive definite H.
std::vector<double> CholeskySolve(std::vector<double> H, std::size_t n,
                                  std::vector<double> rhs) {
  for (std::size_t c = 0; c < n; ++c) {
    double d = H[c * n + c];
    for (std::size_t p = 0; p < c; ++p) d -= H[c * n + p] * H[c * n + p];
    d = std::sqrt(std::max(d, 1e-300));
    H[c * n + c] = d;
    for (std::size_t r = c + 1; r < n; ++r) {
      double v = H[r * n + c];
      for (std::size_t p = 0; p < c; ++p) v -= H[r * n + p] * H[c * n + p];
      H[r * n + c] = v / d;
    }
  }
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t p = 0; p < r; ++p) rhs[r] -= H[r * n + p] * rhs[p];
    rhs[r] /= H[r * n + r];
  }
  for (std::size_t r = n; r-- > 0;) {
    for (std::size_t p = r + 1; p < n; ++p) rhs[r] -= H[p * n + r] * rhs[p];
    rhs[r] /= H[r * n + r];
  }
  return rhs;
}

// Newton direction for max f on the face {b_F : sum b_F = 1}.
std::vector<double> FaceNewtonDirection(const std::vector<double>& b,
                                        const std::vector<double>& g,
                                        const std::vector<std::size_t>& face,
                                        const DiscreteReturnDist& dist) {
  const std::size_t n = face.size();
  std::vector<double> H(n * n, 0.0);
  for (const auto& a : dist.atoms) {
    if (a.p == 0.0) continue;
    double r = 0.0;
    for (std::size_t j = 0; j < b.size(); ++j) r += b[j] * a.x[j];
    const double w = a.p / (r * r);
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = 0; q <= p; ++q) {
        H[p * n + q] += w * a.x[face[p]] * a.x[face[q]];
      }
    }
  }
  double trace = 0.0;
  for (std::size_t p = 0; p < n; ++p) trace += H[p * n + p];
  const double ridge = 1e-12 * trace / double(n) + 1e-300;
  for (std::size_t p = 0; p < n; ++p) {
    H[p * n + p] += ridge;
    for (std::size_t q = 0; q < p; ++q) H[q * n + p] = H[p * n + q];
  }
  std::vector<double> gF(n), ones(n, 1.0);
  for (std::size_t p = 0; p < n; ++p) gF[p] = g[face[p]];
  const auto Hg = CholeskySolve(H, n, gF);
  const auto H1 = CholeskySolve(H, n, ones);
  double num = 0.0, den = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    num += Hg[p];
    den += H1[p];
  }
  const double lambda = num / den;
  std::vector<double> d(b.size(), 0.0);
  for (std::size_t p = 0; p < n; ++p) d[face[p]] = Hg[p] - lambda * H1[p];
  return d;
}

// Armijo backtracking along d from b, capped at alpha_max. Returns the
// accepted step or 0.
double LineSearch(const std::vector<double>& b, const std::vector<double>& d,
                  double f0, double slope, double alpha_max,
                  const DiscreteReturnDist& dist) {
  double alpha = std::min(1.0, alpha_max);
  std::vector<double> trial(b.size());
  for (int halvings = 0; halvings < 80; ++halvings, alpha *= 0.5) {
    for (std::size_t j = 0; j < b.size(); ++j) trial[j] = std::max(0.0, b[j] + alpha * d[j]);
    const double f = Objective(trial, dist);
    if (f >= f0 + 1e-4 * alpha * slope) return alpha;
  }
  return 0.0;
}

void Renormalize(std::vector<double>& b) {
  double s = 0.0;
  for (double& w : b) {
    if (w < 0.0) w = 0.0;
    s += w;
  }
  for (double& w : b) w /= s;
}

}  // namespace

std::vector<double> KellyGradient(const Portfolio& b, const DiscreteReturnDist& dist) {
  return Evaluate(b.weights, dist).grad;
}

double KktResidual(const Portfolio& b, const DiscreteReturnDist& dist, double tol) {
  return Residual(b.weights, KellyGradient(b, dist), tol);
}

Portfolio LogOptimalPortfolio(const DiscreteReturnDist& dist, double tol) {
  dist.Validate();
  if (!(tol > 0.0)) Fail(ErrorCode::kInvalidParams, "tolerance must be > 0");
  const std::size_t k = dist.k();
  if (k == 1 || ObjectiveIsConstant(dist)) return Portfolio::Uniform(k);

  std::vector<double> b(k, 1.0 / double(k));
  double res = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < kKellyIterationBudget; ++iter) {
    const Evaluation e = Evaluate(b, dist);
    const auto& g = e.grad;
    res = Residual(b, g, tol);
    if (res <= tol) return Portfolio{b};

    std::vector<std::size_t> face;
    double face_gap = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (b[j] > 0.0) {
        face.push_back(j);
        face_gap = std::max(face_gap, std::abs(g[j] - 1.0));
      }
    }
    std::size_t best_out = k;
    for (std::size_t j = 0; j < k; ++j) {
      if (b[j] == 0.0 && g[j] > 1.0 + tol && (best_out == k || g[j] > g[best_out])) {
        best_out = j;
      }
    }

    std::vector<double> d;
    if (best_out != k && face_gap <= 0.25 * tol) {
      // Face is optimal; move mass toward the most attractive inactive asset.
      d.assign(k, 0.0);
      for (std::size_t j = 0; j < k; ++j) d[j] = -b[j];
      d[best_out] += 1.0;
    } else {
      d = FaceNewtonDirection(b, g, face, dist);
    }
    double slope = 0.0;
    for (std::size_t j = 0; j < k; ++j) slope += g[j] * d[j];
    if (!(slope > 0.0)) {
      // Fall back to the projected gradient on the face.
      double mean_g = 0.0;
      for (std::size_t j : face) mean_g += g[j];
      mean_g /= double(face.size());
      d.assign(k, 0.0);
      for (std::size_t j : face) d[j] = g[j] - mean_g;
      if (best_out != k) d[best_out] = g[best_out] - mean_g;
      slope = 0.0;
      for (std::size_t j = 0; j < k; ++j) slope += g[j] * d[j];
      if (!(slope > 0.0)) break;
    }

    double alpha_max = std::numeric_limits<double>::infinity();
    std::size_t blocking = k;
    for (std::size_t j = 0; j < k; ++j) {
      if (d[j] < 0.0) {
        const double a = -b[j] / d[j];
        if (a < alpha_max) {
          alpha_max = a;
          blocking = j;
        }
      }
    }
    const double alpha = LineSearch(b, d, e.objective, slope, alpha_max, dist);
    if (alpha == 0.0) break;
    for (std::size_t j = 0; j < k; ++j) b[j] = std::max(0.0, b[j] + alpha * d[j]);
    if (alpha == alpha_max && blocking != k) b[blocking] = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (b[j] < 1e-15) b[j] = 0.0;
    }
    Renormalize(b);
  }
  res = Residual(b, KellyGradient(Portfolio{b}, dist), tol);
  if (res <= tol) return Portfolio{b};
  std::ostringstream msg;
  msg << "log-optimal solver stopped with KKT residual " << res << " > tol " << tol;
  Fail(ErrorCode::kNonConvergence, msg.str());
}

double GrowthRate(const Portfolio& b, const DiscreteReturnDist& dist) {
  double acc = 0.0;
  for (const auto& a : dist.atoms) {
    if (a.p == 0.0) continue;
    acc += a.p * std::log2(b.Dot(a.x));
  }
  return acc;
}

Portfolio Bcrp(const std::vector<ReturnVector>& returns, double tol) {
  return LogOptimalPortfolio(DiscreteReturnDist::Empirical(returns), tol);
}

double LogWealth(const Portfolio& b, const std::vector<ReturnVector>& returns) {
  double acc = 0.0;
  for (const auto& x : returns) acc += std::log2(b.Dot(x));
  return acc;
}

CoverMixture::CoverMixture(int quad_points) {
  if (quad_points < 1) Fail(ErrorCode::kInvalidParams, "quad_points must be >= 1");
  b1_.resize(quad_points);
  log_wealth_.assign(quad_points, 0.0);
  const double h = 0.5 * std::numbers::pi / quad_points;
  for (int q = 0; q < quad_points; ++q) {
    const double s = std::sin((q + 0.5) * h);
    b1_[q] = s * s;
  }
}

void CoverMixture::Update(std::span<const double> x) {
  if (x.size() != 2) Fail(ErrorCode::kUnsupported, "Cover mixture supports k = 2 only");
  for (std::size_t q = 0; q < b1_.size(); ++q) {
    log_wealth_[q] += std::log(b1_[q] * x[0] + (1.0 - b1_[q]) * x[1]);
  }
}

Portfolio CoverMixture::Weight() const {
  const double top = *std::max_element(log_wealth_.begin(), log_wealth_.end());
  double num = 0.0, den = 0.0;
  for (std::size_t q = 0; q < b1_.size(); ++q) {
    const double w = std::exp(log_wealth_[q] - top);
    num += w * b1_[q];
    den += w;
  }
  const double b1 = num / den;
  if (!std::isfinite(b1) || !std::isfinite(top)) {
    Fail(ErrorCode::kQuadratureUnstable, "non-finite universal portfolio weight");
  }
  return Portfolio{{b1, 1.0 - b1}};
}

Portfolio CoverUniversalWeight(const std::vector<ReturnVector>& history, int k,
                               int quad_points) {
  if (k != 2) Fail(ErrorCode::kUnsupported, "Cover universal portfolio needs k = 2");
  CoverMixture mix(quad_points);
  for (const auto& x : history) mix.Update(x);
  if (history.empty()) return Portfolio{{0.5, 0.5}};
  return mix.Weight();
}

std::vector<Portfolio> BestPiecewiseStationary(
    const std::vector<std::pair<std::size_t, ReturnVector>>& history, std::size_t K,
    double tol) {
  if (history.empty()) Fail(ErrorCode::kInvalidParams, "empty history");
  if (K == 0) Fail(ErrorCode::kInvalidParams, "K must be >= 1");
  const std::size_t k = history.front().second.size();
  std::vector<std::vector<ReturnVector>> per_bin(K);
  for (const auto& [bin, x] : history) {
    if (bin >= K) Fail(ErrorCode::kIndexOutOfRange, "signal bin out of range");
    per_bin[bin].push_back(x);
  }
  std::vector<Portfolio> out;
  out.reserve(K);
  for (const auto& xs : per_bin) {
    out.push_back(xs.empty() ? Portfolio::Uniform(k) : Bcrp(xs, tol));
  }
  return out;
}

}  // namespace calport
