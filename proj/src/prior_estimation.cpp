#include "bocpd/prior_estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "bocpd/error.hpp"

namespace bocpd {

namespace {

constexpr double kNuEps = 1e-6;
constexpr double kNuMax = 1e6;

}  // namespace

SegmentFit fit_segment(const Matrix& X, const Matrix& Y) {
  const std::size_t n = X.rows();
  const std::size_t k = X.cols();
  const std::size_t d = Y.cols();
  if (Y.rows() != n) throw DimensionMismatch("fit_segment: X and Y row counts differ");
  if (k == 0 || d == 0) throw DimensionMismatch("fit_segment: empty design or response");
  if (n < k + d) {
    throw TooFewObservations("fit_segment: need at least " + std::to_string(k + d) +
                             " rows, got " + std::to_string(n));
  }
  const Matrix xt = X.transpose();
  const SymMatrix xtx(xt * X);
  Cholesky chol;
  try {
    chol = cholesky_logdet(xtx);
  } catch (const NotPositiveDefinite&) {
    throw RankDeficient("fit_segment: design matrix is rank deficient");
  }
  double max_diag = 0.0;
  double min_pivot = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < k; ++i) {
    max_diag = std::max(max_diag, xtx(i, i));
    min_pivot = std::min(min_pivot, chol.factor(i, i) * chol.factor(i, i));
  }
  if (min_pivot <= 1e-12 * max_diag) throw RankDeficient("fit_segment: design matrix is rank deficient");

  SegmentFit fit;
  fit.B_hat = xt * Y;
  cholesky_solve_in_place(chol.factor, fit.B_hat);
  const Matrix resid = Y - X * fit.B_hat;
  Matrix s = resid.transpose() * resid;
  s *= 1.0 / static_cast<double>(n - k);
  fit.Sigma_hat = SymMatrix(s);
  fit.n_obs = static_cast<long>(n);

  // Residual covariance must be clearly positive relative to the response scale.
  double scale = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += Y(i, j) * Y(i, j);
    scale = std::max(scale, ss / static_cast<double>(n));
  }
  Cholesky sc;
  try {
    sc = cholesky_logdet(fit.Sigma_hat);
  } catch (const NotPositiveDefinite&) {
    throw NotPositiveDefinite("fit_segment: residual covariance is not positive definite");
  }
  for (std::size_t j = 0; j < d; ++j) {
    if (sc.factor(j, j) * sc.factor(j, j) <= 1e-12 * scale) {
      throw NotPositiveDefinite("fit_segment: residual covariance is numerically zero");
    }
  }
  return fit;
}

double nu_score(std::span<const SymMatrix> sigma_fits, double nu) {
  if (sigma_fits.empty()) throw TooFewObservations("nu_score: no covariance fits");
  const std::size_t d = sigma_fits.front().dim();
  const double dd = static_cast<double>(d);
  const double n = static_cast<double>(sigma_fits.size());
  if (!(nu > dd + 1.0)) throw DomainError("nu_score: nu must exceed d + 1");
  SymMatrix total(d);
  double sum_logdet = 0.0;
  for (const auto& s : sigma_fits) {
    if (s.dim() != d) throw DimensionMismatch("nu_score: covariance dimensions differ");
    total += s;
    sum_logdet += cholesky_logdet(s).logdet;
  }
  // log|V̂0(ν)| = d log((ν − d − 1)/n) + log|Σ Σ̂_i|
  const double logdet_v = dd * std::log((nu - dd - 1.0) / n) + cholesky_logdet(total).logdet;
  double psi = 0.0;
  for (std::size_t j = 1; j <= d; ++j) psi += digamma(0.5 * (nu + 1.0 - static_cast<double>(j)));
  return 0.5 * n * logdet_v - 0.5 * n * dd * std::numbers::ln2 - 0.5 * sum_logdet - 0.5 * n * psi;
}

double solve_nu(std::span<const SymMatrix> sigma_fits, std::size_t d) {
  if (sigma_fits.empty()) throw TooFewObservations("solve_nu: no covariance fits");
  const double lo_bound = static_cast<double>(d) + 1.0 + kNuEps;
  auto score = [&](double nu) { return nu_score(sigma_fits, nu); };

  // Geometric scan on the offset above d + 1 for the first sign change.
  double a = lo_bound;
  double fa = score(a);
  if (fa == 0.0) return a;
  double b = a;
  double fb = fa;
  bool found = false;
  for (double offset = 2.0 * kNuEps;; offset *= 2.0) {
    const double nu = std::min(static_cast<double>(d) + 1.0 + offset, kNuMax);
    const double f = score(nu);
    if ((f > 0.0) != (fa > 0.0) || f == 0.0) {
      b = nu;
      fb = f;
      found = true;
      break;
    }
    a = nu;
    fa = f;
    if (nu >= kNuMax) break;
  }
  if (!found) throw NoRoot("solve_nu: score has no sign change on (d+1, 1e6]");
  if (fb == 0.0) return b;

  // Secant step when it stays inside the bracket, bisection otherwise.
  for (int iter = 0; iter < 300; ++iter) {
    double c = b - fb * (b - a) / (fb - fa);
    const double lo = std::min(a, b);
    const double hi = std::max(a, b);
    if (!(c > lo && c < hi) || iter % 4 == 3) c = 0.5 * (a + b);
    const double fc = score(c);
    if (fc == 0.0) return c;
    if ((fc > 0.0) == (fa > 0.0)) {
      a = c;
      fa = fc;
    } else {
      b = c;
      fb = fc;
    }
    if (std::abs(b - a) <= 4.0 * std::numeric_limits<double>::epsilon() * std::abs(b)) break;
    if (std::min(std::abs(fa), std::abs(fb)) <= 1e-12) break;
  }
  return std::abs(fa) < std::abs(fb) ? a : b;
}

Hyperparameters estimate_hyperparameters(std::span<const SegmentFit> fits, std::size_t d,
                                         std::size_t k) {
  if (fits.size() < 2) throw TooFewObservations("estimate_hyperparameters: need at least 2 fits");
  std::vector<SymMatrix> sigmas;
  sigmas.reserve(fits.size());
  for (const auto& f : fits) {
    if (f.B_hat.rows() != k || f.B_hat.cols() != d || f.Sigma_hat.dim() != d) {
      throw DimensionMismatch("estimate_hyperparameters: fit dimensions differ");
    }
    sigmas.push_back(f.Sigma_hat);
  }
  const double n = static_cast<double>(fits.size());
  const double dd = static_cast<double>(d);

  Hyperparameters eta;
  eta.nu0 = solve_nu(sigmas, d);

  SymMatrix total(d);
  for (const auto& s : sigmas) total += s;
  eta.V0 = ((eta.nu0 - dd - 1.0) / n) * total;

  eta.B0 = Matrix(k, d);
  for (const auto& f : fits) eta.B0 += f.B_hat;
  eta.B0 *= 1.0 / n;

  Matrix scatter(k, k);
  for (const auto& f : fits) {
    const Matrix dev = f.B_hat - eta.B0;
    const Matrix w = solve_spd(f.Sigma_hat, dev.transpose());  // Σ̂_i⁻¹ (B̂_i − B̂0)ᵀ
    scatter += dev * w;
  }
  scatter *= 1.0 / (n * dd);
  const SymMatrix lambda_inv(scatter);
  try {
    const Cholesky chol = cholesky_logdet(lambda_inv);
    double max_diag = 0.0;
    double min_pivot = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < k; ++i) {
      max_diag = std::max(max_diag, lambda_inv(i, i));
      min_pivot = std::min(min_pivot, chol.factor(i, i) * chol.factor(i, i));
    }
    if (min_pivot <= 1e-14 * max_diag) throw NotPositiveDefinite("scatter");
  } catch (const NotPositiveDefinite&) {
    throw SingularLambda("estimate_hyperparameters: coefficient scatter is singular");
  }
  eta.Lambda0 = inverse_spd(lambda_inv);
  eta.validate();
  return eta;
}

}  // namespace bocpd
