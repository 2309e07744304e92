#include "bocpd/conjugate_model.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "bocpd/error.hpp"

namespace bocpd {

namespace {

constexpr std::size_t kGammaTable = 2048;

// In-place lower Cholesky of an n×n row-major block. Returns false on a non-positive pivot.
bool cholesky_in_place(double* a, std::size_t n, double& logdet) {
  logdet = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double pivot = a[j * n + j];
    for (std::size_t p = 0; p < j; ++p) pivot -= a[j * n + p] * a[j * n + p];
    if (!(pivot > 0.0)) return false;
    const double ljj = std::sqrt(pivot);
    a[j * n + j] = ljj;
    logdet += 2.0 * std::log(ljj);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (std::size_t p = 0; p < j; ++p) s -= a[i * n + p] * a[j * n + p];
      a[i * n + j] = s / ljj;
    }
  }
  return true;
}

// Factorize with one diagonal jitter retry of 1e-12·trace/n.
template <std::size_t N>
double factor_with_jitter(std::array<double, N>& a, std::size_t n, const char* what) {
  std::array<double, N> saved = a;
  double logdet = 0.0;
  if (cholesky_in_place(a.data(), n, logdet)) return logdet;
  double trace = 0.0;
  for (std::size_t i = 0; i < n; ++i) trace += saved[i * n + i];
  const double jitter = 1e-12 * std::abs(trace) / static_cast<double>(n);
  a = saved;
  for (std::size_t i = 0; i < n; ++i) a[i * n + i] += jitter;
  if (cholesky_in_place(a.data(), n, logdet)) return logdet;
  throw NotPositiveDefinite(std::string(what) + " is not positive definite");
}

}  // namespace

void Hyperparameters::validate() const {
  const std::size_t dd = d();
  const std::size_t kk = k();
  if (dd == 0 || kk == 0) throw InvalidConfig("hyperparameters: d and k must be positive");
  if (B0.rows() != kk || B0.cols() != dd) {
    throw InvalidConfig("hyperparameters: B0 must be " + std::to_string(kk) + "x" +
                        std::to_string(dd));
  }
  if (!(nu0 > static_cast<double>(dd) - 1.0)) {
    throw InvalidConfig("hyperparameters: nu0 must exceed d - 1");
  }
  try {
    cholesky_logdet(Lambda0);
  } catch (const NotPositiveDefinite&) {
    throw InvalidConfig("hyperparameters: Lambda0 is not positive definite");
  }
  try {
    cholesky_logdet(V0);
  } catch (const NotPositiveDefinite&) {
    throw InvalidConfig("hyperparameters: V0 is not positive definite");
  }
}

SufficientStats SufficientStats::zeros(std::size_t d, std::size_t k) {
  return {SymMatrix(d), SymMatrix(k), RectMatrix(k, d), 0};
}

void SufficientStats::add(std::span<const double> x, std::span<const double> y) {
  if (x.size() != k() || y.size() != d()) throw DimensionMismatch("stats update: (x, y) size");
  G.add_outer(y, 1.0);
  H.add_outer(x, 1.0);
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j) K(i, j) += x[i] * y[j];
  ++n;
}

void SufficientStats::remove(std::span<const double> x, std::span<const double> y) {
  if (n <= 0) throw EmptyStats("stats downdate on empty statistics");
  if (x.size() != k() || y.size() != d()) throw DimensionMismatch("stats downdate: (x, y) size");
  G.add_outer(y, -1.0);
  H.add_outer(x, -1.0);
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j) K(i, j) -= x[i] * y[j];
  --n;
}

SufficientStats stats_update(SufficientStats s, std::span<const double> x,
                             std::span<const double> y) {
  s.add(x, y);
  return s;
}

SufficientStats stats_downdate(SufficientStats s, std::span<const double> x,
                               std::span<const double> y) {
  s.remove(x, y);
  return s;
}

PosteriorParams posterior_params(const Hyperparameters& eta, const SufficientStats& s) {
  if (s.d() != eta.d() || s.k() != eta.k()) throw DimensionMismatch("posterior_params");
  PosteriorParams post;
  post.Lambda = s.H + eta.Lambda0;
  const Matrix shifted = s.K + eta.Lambda0.matrix() * eta.B0;
  post.B = solve_spd(post.Lambda, shifted);
  const Matrix bt = post.B.transpose();
  const Matrix diff = post.B - eta.B0;
  Matrix v = eta.V0.matrix() + s.G.matrix();
  v -= s.K.transpose() * post.B;
  v -= bt * s.K;
  v += bt * s.H.matrix() * post.B;
  v += diff.transpose() * eta.Lambda0.matrix() * diff;
  post.V = SymMatrix(v);
  post.nu = eta.nu0 + static_cast<double>(s.n);
  return post;
}

double log_marginal(const Hyperparameters& eta, const SufficientStats& s) {
  return ConjugateModel(eta).log_marginal(s);
}

double log_predictive(const Hyperparameters& eta, const SufficientStats& s,
                      std::span<const double> x, std::span<const double> y) {
  const ConjugateModel model(eta);
  return model.log_marginal_with(s, x, y) - model.log_marginal(s);
}

ConjugateModel::ConjugateModel(Hyperparameters eta) : eta_(std::move(eta)) {
  eta_.validate();
  d_ = eta_.d();
  k_ = eta_.k();
  if (d_ > kMaxD || k_ > kMaxK) {
    throw InvalidConfig("model dimensions exceed d <= " + std::to_string(kMaxD) +
                        ", k <= " + std::to_string(kMaxK));
  }
  lambda0_.assign(eta_.Lambda0.matrix().data().begin(), eta_.Lambda0.matrix().data().end());
  const Matrix shift = eta_.Lambda0.matrix() * eta_.B0;
  prior_shift_.assign(shift.data().begin(), shift.data().end());
  const Matrix scale = eta_.V0.matrix() + eta_.B0.transpose() * shift;
  prior_scale_.assign(scale.data().begin(), scale.data().end());

  const auto dd = static_cast<int>(d_);
  gamma_table_.resize(kGammaTable);
  for (std::size_t n = 0; n < kGammaTable; ++n) {
    gamma_table_[n] = log_multigamma(dd, 0.5 * (eta_.nu0 + static_cast<double>(n)));
  }
  const double half_d = 0.5 * static_cast<double>(d_);
  constant_ = -gamma_table_[0] + half_d * cholesky_logdet(eta_.Lambda0).logdet +
              0.5 * eta_.nu0 * cholesky_logdet(eta_.V0).logdet;
}

double ConjugateModel::log_multigamma_at(long n) const {
  if (n >= 0 && static_cast<std::size_t>(n) < gamma_table_.size()) return gamma_table_[n];
  return log_multigamma(static_cast<int>(d_), 0.5 * (eta_.nu0 + static_cast<double>(n)));
}

void ConjugateModel::check_dims(std::span<const double> x, std::span<const double> y) const {
  if (x.size() != k_ || y.size() != d_) {
    throw DimensionMismatch("expected x of size " + std::to_string(k_) + " and y of size " +
                            std::to_string(d_) + ", got " + std::to_string(x.size()) + " and " +
                            std::to_string(y.size()));
  }
}

double ConjugateModel::log_marginal(const SufficientStats& s) const {
  if (s.d() != d_ || s.k() != k_) throw DimensionMismatch("log_marginal: stats dimensions");
  return evaluate(s, nullptr, nullptr, 0.0);
}

double ConjugateModel::log_marginal_with(const SufficientStats& s, std::span<const double> x,
                                         std::span<const double> y, double sign) const {
  if (s.d() != d_ || s.k() != k_) throw DimensionMismatch("log_marginal: stats dimensions");
  check_dims(x, y);
  return evaluate(s, x.data(), y.data(), sign);
}

double ConjugateModel::log_prior_predictive(std::span<const double> x,
                                            std::span<const double> y) const {
  return log_marginal_with(SufficientStats::zeros(d_, k_), x, y);
}

double ConjugateModel::evaluate(const SufficientStats& s, const double* x, const double* y,
                                double sign) const {
  const long n = s.n + (x != nullptr ? static_cast<long>(sign) : 0L);
  if (n < 0) throw EmptyStats("log_marginal: negative observation count");
  if (n == 0) return 0.0;

  const std::size_t k = k_;
  const std::size_t d = d_;
  std::array<double, kMaxK * kMaxK> lambda{};
  std::array<double, kMaxK * kMaxD> w{};
  std::array<double, kMaxD * kMaxD> v{};

  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      double h = s.H(i, j) + lambda0_[i * k + j];
      if (x != nullptr) h += sign * (x[i] * x[j]);
      lambda[i * k + j] = h;
    }
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t c = 0; c < d; ++c) {
      double m = s.K(i, c) + prior_shift_[i * d + c];
      if (x != nullptr) m += sign * (x[i] * y[c]);
      w[i * d + c] = m;
    }
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) {
      double g = prior_scale_[a * d + b] + s.G(a, b);
      if (y != nullptr) g += sign * (y[a] * y[b]);
      v[a * d + b] = g;
    }

  const double logdet_lambda = factor_with_jitter(lambda, k, "posterior Lambda");

  // W <- L⁻¹ (K + Λ0 B0), so that (K + Λ0B0)ᵀ Λ⁻¹ (K + Λ0B0) = WᵀW.
  for (std::size_t c = 0; c < d; ++c)
    for (std::size_t i = 0; i < k; ++i) {
      double acc = w[i * d + c];
      for (std::size_t p = 0; p < i; ++p) acc -= lambda[i * k + p] * w[p * d + c];
      w[i * d + c] = acc / lambda[i * k + i];
    }
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) {
      double acc = 0.0;
      for (std::size_t i = 0; i < k; ++i) acc += w[i * d + a] * w[i * d + b];
      v[a * d + b] -= acc;
    }

  const double logdet_v = factor_with_jitter(v, d, "posterior V");

  const double dn = static_cast<double>(n);
  const double dd = static_cast<double>(d);
  return -0.5 * dn * dd * std::log(std::numbers::pi) + log_multigamma_at(n) + constant_ -
         0.5 * dd * logdet_lambda - 0.5 * (eta_.nu0 + dn) * logdet_v;
}

}  // namespace bocpd
