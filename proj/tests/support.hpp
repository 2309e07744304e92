#pragma once

// Reference implementations used as test oracles. They recompute everything from raw
// rows with textbook formulas, sharing no code with the streaming kernels beyond the
// basic matrix type and posterior_params.

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "bocpd/conjugate_model.hpp"
#include "bocpd/outlier_guard.hpp"

namespace bocpd::testing {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Stream {
  std::vector<std::vector<double>> x;
  std::vector<std::vector<double>> y;
  std::size_t size() const { return y.size(); }
};

inline double lse(const std::vector<double>& v) {
  double m = kNegInf;
  for (double a : v) m = std::max(m, a);
  if (m == kNegInf) return m;
  double s = 0.0;
  for (double a : v) s += std::exp(a - m);
  return m + std::log(s);
}

inline SymMatrix random_spd(std::size_t n, std::mt19937_64& rng, double ridge = 0.5) {
  std::normal_distribution<double> z;
  Matrix a(n, n);
  for (auto& v : a.data()) v = z(rng);
  Matrix s = a * a.transpose();
  for (std::size_t i = 0; i < n; ++i) s(i, i) += ridge;
  return SymMatrix(s);
}

inline Hyperparameters random_prior(std::size_t d, std::size_t k, std::mt19937_64& rng) {
  std::normal_distribution<double> z;
  Hyperparameters eta;
  eta.B0 = Matrix(k, d);
  for (auto& v : eta.B0.data()) v = 0.5 * z(rng);
  eta.Lambda0 = random_spd(k, rng, 1.0);
  eta.V0 = random_spd(d, rng, 0.5);
  eta.nu0 = static_cast<double>(d) + 2.0 + std::uniform_real_distribution<double>(0.0, 5.0)(rng);
  return eta;
}

/// Rows from one regression with an intercept column first.
inline Stream random_stream(std::size_t n, std::size_t d, std::size_t k, std::mt19937_64& rng) {
  std::normal_distribution<double> z;
  Matrix beta(k, d);
  for (auto& v : beta.data()) v = z(rng);
  Stream s;
  for (std::size_t t = 0; t < n; ++t) {
    std::vector<double> x(k), y(d);
    x[0] = 1.0;
    for (std::size_t i = 1; i < k; ++i) x[i] = z(rng);
    for (std::size_t j = 0; j < d; ++j) {
      double m = 0.0;
      for (std::size_t i = 0; i < k; ++i) m += x[i] * beta(i, j);
      y[j] = m + 0.5 * z(rng);
    }
    s.x.push_back(std::move(x));
    s.y.push_back(std::move(y));
  }
  return s;
}

/// Statistics summed directly over the rows in [first, last] (1-based, inclusive),
/// leaving out row `skip` when it is in range.
inline SufficientStats batch_stats(const Stream& s, long first, long last, long skip,
                                   std::size_t d, std::size_t k) {
  SufficientStats out = SufficientStats::zeros(d, k);
  Matrix g(d, d), h(k, k), kk(k, d);
  long n = 0;
  for (long t = first; t <= last; ++t) {
    if (t == skip) continue;
    const auto& x = s.x[static_cast<std::size_t>(t - 1)];
    const auto& y = s.y[static_cast<std::size_t>(t - 1)];
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) g(a, b) += y[a] * y[b];
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b) h(a, b) += x[a] * x[b];
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < d; ++b) kk(a, b) += x[a] * y[b];
    ++n;
  }
  out.G = SymMatrix(g);
  out.H = SymMatrix(h);
  out.K = kk;
  out.n = n;
  return out;
}

inline double log_det(const Matrix& a) { return cholesky_logdet(SymMatrix(a)).logdet; }

/// Posterior predictive as an explicit multivariate t:
/// y | x ~ t_{ν−d+1}(Bᵀx, (1 + xᵀΛ⁻¹x) V / (ν−d+1)).
inline double mvt_predictive(const Hyperparameters& eta, const SufficientStats& s,
                             const std::vector<double>& x, const std::vector<double>& y) {
  const PosteriorParams p = posterior_params(eta, s);
  const std::size_t d = eta.d();
  const std::size_t k = eta.k();
  const double dof = p.nu - static_cast<double>(d) + 1.0;
  const Matrix xc = Matrix::column(x);
  const Matrix lx = solve_spd(p.Lambda, xc);
  double q = 0.0;
  for (std::size_t i = 0; i < k; ++i) q += x[i] * lx(i, 0);
  Matrix scale = p.V.matrix() * ((1.0 + q) / dof);
  Matrix delta(d, 1);
  for (std::size_t j = 0; j < d; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < k; ++i) m += x[i] * p.B(i, j);
    delta(j, 0) = y[j] - m;
  }
  const Matrix sd = solve_spd(SymMatrix(scale), delta);
  double maha = 0.0;
  for (std::size_t j = 0; j < d; ++j) maha += delta(j, 0) * sd(j, 0);
  const double dd = static_cast<double>(d);
  return std::lgamma(0.5 * (dof + dd)) - std::lgamma(0.5 * dof) -
         0.5 * dd * std::log(dof * std::numbers::pi) - 0.5 * log_det(scale) -
         0.5 * (dof + dd) * std::log1p(maha / dof);
}

inline double gaussian_log_density(const std::vector<double>& y, const OutlierConfig& cfg) {
  const std::size_t d = y.size();
  Matrix delta(d, 1);
  for (std::size_t j = 0; j < d; ++j) delta(j, 0) = y[j] - cfg.mu0[j];
  const Matrix sd = solve_spd(cfg.Omega0, delta);
  double maha = 0.0;
  for (std::size_t j = 0; j < d; ++j) maha += delta(j, 0) * sd(j, 0);
  return -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi) -
         0.5 * log_det(cfg.Omega0.matrix()) - 0.5 * maha;
}

struct DenseResult {
  std::vector<double> log_joint;  ///< index r = 0..T, unnormalized
  double log_evidence = 0.0;
};

/// Untruncated run-length recursion over the first T rows. A run of length r at time
/// u holds rows u−r+1..u; the fresh r = 0 hypothesis scores y_u under the new-run
/// density and holds no rows. When outlier > 0, that row is scored under the outlier
/// density in every hypothesis and kept out of all statistics.
inline DenseResult dense_recursion(const Hyperparameters& eta, double hazard, const Stream& s,
                                   long T, long outlier = 0, const OutlierConfig* ocfg = nullptr) {
  const std::size_t d = eta.d();
  const std::size_t k = eta.k();
  std::vector<double> joint{0.0};
  for (long u = 1; u <= T; ++u) {
    const auto& x = s.x[static_cast<std::size_t>(u - 1)];
    const auto& y = s.y[static_cast<std::size_t>(u - 1)];
    const bool is_out = (u == outlier);
    const double out_density = is_out ? gaussian_log_density(y, *ocfg) : 0.0;
    std::vector<double> next(joint.size() + 1, kNegInf);
    const double prior_pred =
        is_out ? out_density : mvt_predictive(eta, SufficientStats::zeros(d, k), x, y);
    next[0] = lse(joint) + std::log(hazard) + prior_pred;
    for (std::size_t r = 0; r < joint.size(); ++r) {
      // run r at time u-1 covers rows u-r..u-1
      const long first = u - static_cast<long>(r);
      const double pred =
          is_out ? out_density
                 : mvt_predictive(eta, batch_stats(s, first, u - 1, outlier, d, k), x, y);
      next[r + 1] = joint[r] + std::log1p(-hazard) + pred;
    }
    joint = std::move(next);
  }
  return {joint, lse(joint)};
}

/// Σ ~ IW(V, ν) for integer ν via Σ⁻¹ = Σ z zᵀ with z ~ N(0, V⁻¹).
inline SymMatrix naive_inverse_wishart(const SymMatrix& V, int nu, std::mt19937_64& rng) {
  const std::size_t d = V.dim();
  const Matrix L = cholesky_logdet(inverse_spd(V)).factor;
  std::normal_distribution<double> z;
  SymMatrix w(d);
  std::vector<double> e(d), v(d);
  for (int i = 0; i < nu; ++i) {
    for (auto& a : e) a = z(rng);
    for (std::size_t r = 0; r < d; ++r) {
      v[r] = 0.0;
      for (std::size_t c = 0; c <= r; ++c) v[r] += L(r, c) * e[c];
    }
    w.add_outer(v);
  }
  return inverse_spd(w);
}

inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline Hyperparameters scalar_prior(double b0, double lambda0, double v0, double nu0) {
  return {Matrix::from_rows({{b0}}), SymMatrix::from_rows({{lambda0}}),
          SymMatrix::from_rows({{v0}}), nu0};
}

// log ∫∫ Π N(y_i | x_i β, σ²) N(β | b0, σ²/λ0) IG(σ²; ν0/2, v0/2) dβ dσ² by nested
// Gauss-Kronrod, outer variable log σ² on a finite range, inner the standardized β.
inline double quadrature_marginal(const Hyperparameters& eta, const std::vector<double>& xs,
                                  const std::vector<double>& ys) {
  using boost::math::quadrature::gauss_kronrod;
  const double b0 = eta.B0(0, 0), l0 = eta.Lambda0(0, 0), v0 = eta.V0(0, 0), nu = eta.nu0;
  auto outer = [&](double s) {
    const double var = std::exp(s);
    const double sd = std::sqrt(var);
    auto inner = [&](double u) {
      const double beta = b0 + u * sd / std::sqrt(l0);
      double ll = -0.5 * u * u - 0.5 * std::log(2.0 * std::numbers::pi);
      for (std::size_t i = 0; i < ys.size(); ++i) {
        const double r = ys[i] - xs[i] * beta;
        ll += -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * r * r / var;
      }
      return std::exp(ll);
    };
    const double in = gauss_kronrod<double, 61>::integrate(inner, -kInf, kInf, 15, 1e-13);
    // inverse gamma in σ², times the Jacobian dσ²/ds = σ²
    const double log_ig = 0.5 * nu * std::log(0.5 * v0) - std::lgamma(0.5 * nu) -
                          (0.5 * nu + 1.0) * s - 0.5 * v0 / var;
    return in * std::exp(log_ig + s);
  };
  // The integrand is negligible outside σ² ∈ [e⁻⁴⁰, e⁴⁰] for these settings.
  return std::log(gauss_kronrod<double, 61>::integrate(outer, -40.0, 40.0, 20, 1e-13));
}

inline SufficientStats stats_of(const std::vector<double>& xs, const std::vector<double>& ys) {
  SufficientStats s = SufficientStats::zeros(1, 1);
  for (std::size_t i = 0; i < xs.size(); ++i) s.add(std::vector{xs[i]}, std::vector{ys[i]});
  return s;
}

struct ScalarCase {
  double b0, l0, v0, nu;
  std::vector<double> xs, ys;
};

/// One-dimensional settings checked against quadrature; one has ν0 < 2.
inline std::vector<ScalarCase> scalar_cases() {
  return {
      {0.0, 1.0, 1.0, 3.0, {1.0}, {0.0}},
      {0.5, 2.0, 0.5, 4.5, {1.0}, {0.8}},
      {-1.0, 0.5, 2.0, 2.5, {2.0}, {-1.5}},
      {0.0, 1.0, 1.0, 3.0, {1.0, 1.0}, {0.2, -0.3}},
      {0.2, 0.1, 0.3, 6.0, {1.0, -1.0}, {0.1, 0.4}},
      {1.0, 4.0, 1.5, 5.0, {0.5, 1.5, 1.0}, {0.7, 1.4, 1.1}},
      {0.0, 0.3, 0.2, 8.0, {1.0, 2.0, 3.0}, {0.1, 0.3, 0.2}},
      {2.0, 1.0, 3.0, 1.5, {1.0}, {1.0}},
      {-0.5, 2.5, 0.8, 10.0, {1.0, 0.2}, {-0.6, -0.4}},
      {0.3, 1.0, 0.05, 12.0, {1.0, 1.0, 1.0}, {0.3, 0.35, 0.28}},
  };
}

struct MonteCarloCheck {
  double exact = 0.0;
  double log_mean = 0.0;  ///< log of the Monte Carlo average likelihood
  double log_se = 0.0;    ///< its standard error on the log scale
};

/// Marginal likelihood of three bivariate points under a one-covariate prior, exact and
/// by averaging the likelihood over draws from the prior.
inline MonteCarloCheck bivariate_marginal_mc(int draws, std::uint64_t seed) {
  Hyperparameters eta{Matrix::from_rows({{0.2, -0.1}}), SymMatrix::from_rows({{2.0}}),
                      SymMatrix::from_rows({{1.0, 0.3}, {0.3, 0.8}}), 6.0};
  const std::vector<std::vector<double>> ys{{0.5, -0.2}, {-0.1, 0.3}, {0.9, 0.1}};
  SufficientStats s = SufficientStats::zeros(2, 1);
  for (const auto& y : ys) s.add(std::vector{1.0}, y);
  const double exact = log_marginal(eta, s);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  const Matrix vinv_l = cholesky_logdet(inverse_spd(eta.V0)).factor;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < draws; ++i) {
    // Σ⁻¹ as a sum of ν0 outer products, then β ~ N(B0, Σ/λ0)
    double w00 = 0, w01 = 0, w11 = 0;
    for (int j = 0; j < 6; ++j) {
      const double e0 = z(rng), e1 = z(rng);
      const double a = vinv_l(0, 0) * e0;
      const double b = vinv_l(1, 0) * e0 + vinv_l(1, 1) * e1;
      w00 += a * a;
      w01 += a * b;
      w11 += b * b;
    }
    const double det_w = w00 * w11 - w01 * w01;
    const double s00 = w11 / det_w, s01 = -w01 / det_w, s11 = w00 / det_w;
    const double l00 = std::sqrt(s00), l10 = s01 / l00, l11 = std::sqrt(s11 - l10 * l10);
    const double u0 = z(rng), u1 = z(rng);
    const double scale = 1.0 / std::sqrt(2.0);
    const double b0 = 0.2 + scale * l00 * u0;
    const double b1 = -0.1 + scale * (l10 * u0 + l11 * u1);
    double ll = 0.0;
    for (const auto& y : ys) {
      const double r0 = y[0] - b0, r1 = y[1] - b1;
      const double q = w00 * r0 * r0 + 2.0 * w01 * r0 * r1 + w11 * r1 * r1;
      ll += -std::log(2.0 * std::numbers::pi) + 0.5 * std::log(det_w) - 0.5 * q;
    }
    const double v = std::exp(ll);
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / draws;
  const double se = std::sqrt((sum2 / draws - mean * mean) / draws);
  return {exact, std::log(mean), se / mean};
}

// Steps live and bank without the trigger or truncation.
inline void manual_step(Detector& live, ShadowBank& bank, const OutlierConfig& cfg,
                        const std::vector<double>& x, const std::vector<double>& y) {
  shadow_step(bank, live, cfg, x, y);
  const double z = live.advance(x, y);
  for (auto& e : bank.entries) shift_log_joints(e.hypotheses, z);
}

inline bool same_stats(const SufficientStats& a, const SufficientStats& b, double tol) {
  if (a.n != b.n) return false;
  const double scale = 1.0 + b.G.matrix().norm() + b.H.matrix().norm() + b.K.norm();
  return (a.G.matrix() - b.G.matrix()).norm() <= tol * scale &&
         (a.H.matrix() - b.H.matrix()).norm() <= tol * scale && (a.K - b.K).norm() <= tol * scale;
}

struct Constructed {
  Hyperparameters eta;
  Stream data;
};

// Stable regression rows; when `spike` > 0 that row is pushed 8 prior sd away.
inline Constructed constructed(std::uint64_t seed, long spike) {
  std::mt19937_64 rng(seed);
  Constructed c{random_prior(2, 2, rng), random_stream(30, 2, 2, rng)};
  c.eta.V0 = 0.25 * static_cast<double>(c.eta.nu0 - 3.0) * SymMatrix::identity(2);
  if (spike > 0) {
    const double sd = std::sqrt(c.eta.V0(0, 0) / (c.eta.nu0 - 3.0));
    for (auto& v : c.data.y[static_cast<std::size_t>(spike - 1)]) v += 8.0 * sd;
  }
  return c;
}

inline OutlierPosterior exhaustive_posterior(const Constructed& c, double hazard,
                                             const OutlierConfig& cfg, long t,
                                             const std::vector<long>& candidates) {
  std::vector<double> logw;
  logw.push_back(std::log(cfg.p0) + dense_recursion(c.eta, hazard, c.data, t).log_evidence);
  const double per = (1.0 - cfg.p0) / static_cast<double>(cfg.outlier_window - 1);
  for (long s : candidates)
    logw.push_back(std::log(per) + dense_recursion(c.eta, hazard, c.data, t, s, &cfg).log_evidence);
  const double z = lse(logw);
  OutlierPosterior p;
  p.none = std::exp(logw[0] - z);
  for (std::size_t i = 0; i < candidates.size(); ++i)
    p.candidates.emplace_back(candidates[i], std::exp(logw[i + 1] - z));
  return p;
}

}  // namespace bocpd::testing
