#include "bocpd/simgen.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "bocpd/error.hpp"

namespace bocpd {

namespace {

constexpr double kDaysPerYear = 365.0;

SymMatrix noise_scale(double rho) {
  return SymMatrix::from_rows({{1e-3, 1e-3 * rho}, {1e-3 * rho, 1e-3}});
}

}  // namespace

void ScenarioSpec::validate() const {
  if (length < 2) throw InvalidSpec("scenario length must be at least 2");
  if (t_star < 1 || t_star > length) throw InvalidSpec("t_star must lie in 1..length");
  if (!(std::abs(rho0) < 1.0)) throw InvalidSpec("rho0 must lie in (-1, 1)");
  if (rho_star && !(std::abs(*rho_star) < 1.0)) throw InvalidSpec("rho_star must lie in (-1, 1)");
  if (outlier_value.size() != 2) throw InvalidSpec("outlier_value must have 2 entries");
  if (outlier_lo < 1 || outlier_hi > length || outlier_lo > outlier_hi) {
    throw InvalidSpec("outlier range must lie within 1..length");
  }
  if (!std::isfinite(mu_star)) throw InvalidSpec("mu_star must be finite");
}

ScenarioSpec scenario(int case_id) {
  struct Row {
    double mu_star, rho0;
    bool seasonal;
  };
  static constexpr Row kRows[8] = {{0.4, 0.0, false}, {0.3, 0.0, false}, {0.4, 0.9, false},
                                   {0.3, 0.9, false}, {0.4, 0.0, true},  {0.3, 0.0, true},
                                   {0.4, 0.9, true},  {0.3, 0.9, true}};
  ScenarioSpec spec;
  spec.case_id = case_id;
  if (case_id >= 1 && case_id <= 8) {
    const Row& r = kRows[case_id - 1];
    spec.mu_star = r.mu_star;
    spec.rho0 = r.rho0;
    spec.seasonal = r.seasonal;
  } else if (case_id == 9) {
    spec.mu_star = 0.5;
    spec.rho0 = 0.5;
    spec.rho_star = -0.5;
    spec.seasonal = true;
  } else {
    throw InvalidSpec("case must be 1..9, got " + std::to_string(case_id));
  }
  return spec;
}

SymMatrix sample_inverse_wishart(const SymMatrix& V, double nu, std::mt19937_64& rng) {
  const std::size_t d = V.dim();
  if (!(nu > static_cast<double>(d) - 1.0)) throw DomainError("inverse Wishart: nu <= d - 1");
  const Matrix l = cholesky_logdet(inverse_spd(V)).factor;
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix a(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    std::chi_squared_distribution<double> chi2(nu - static_cast<double>(i));
    a(i, i) = std::sqrt(chi2(rng));
    for (std::size_t j = 0; j < i; ++j) a(i, j) = normal(rng);
  }
  const Matrix la = l * a;
  const SymMatrix wishart(la * la.transpose());
  return inverse_spd(wishart);
}

Matrix sample_matrix_normal(const Matrix& M, const SymMatrix& U, const SymMatrix& S,
                            std::mt19937_64& rng) {
  if (U.dim() != M.rows() || S.dim() != M.cols()) throw DimensionMismatch("matrix normal sizes");
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix z(M.rows(), M.cols());
  for (double& v : z.data()) v = normal(rng);
  const Matrix lu = cholesky_logdet(U).factor;
  const Matrix ls = cholesky_logdet(S).factor;
  return M + lu * z * ls.transpose();
}

LabeledSeries generate(const ScenarioSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double nu = 20.0;

  const SymMatrix sigma0 = sample_inverse_wishart(noise_scale(spec.rho0), nu, rng);
  Matrix beta(3, 2);
  if (spec.seasonal) {
    const Matrix b = Matrix::from_rows({{0.1, 0.1}, {0.04, 0.04}, {0.0, 0.0}});
    beta = sample_matrix_normal(b, 0.1 * SymMatrix::identity(3), sigma0, rng);
  }
  SymMatrix sigma_star = sigma0;
  if (spec.rho_star) sigma_star = sample_inverse_wishart(noise_scale(*spec.rho_star), nu, rng);
  const Matrix l0 = cholesky_logdet(sigma0).factor;
  const Matrix ls = cholesky_logdet(sigma_star).factor;

  LabeledSeries out;
  out.seed = seed;
  out.true_changepoint = spec.t_star;
  const auto n = static_cast<std::size_t>(spec.length);
  out.X = Matrix(n, 3);
  out.Y = Matrix(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i + 1);
    const double phase = 2.0 * std::numbers::pi * t / kDaysPerYear;
    out.X(i, 0) = std::sin(phase);
    out.X(i, 1) = std::cos(phase);
    out.X(i, 2) = t / static_cast<double>(spec.length);
    const bool after = static_cast<long>(i + 1) >= spec.t_star;
    const double mu = after ? spec.mu_star : 0.5;
    const Matrix& chol = after ? ls : l0;
    const double z0 = normal(rng);
    const double z1 = normal(rng);
    const double e[2] = {chol(0, 0) * z0, chol(1, 0) * z0 + chol(1, 1) * z1};
    for (std::size_t c = 0; c < 2; ++c) {
      double trend = 0.0;
      for (std::size_t j = 0; j < 3; ++j) trend += out.X(i, j) * beta(j, c);
      out.Y(i, c) = mu + trend + e[c];
    }
  }
  std::uniform_int_distribution<long> pick(spec.outlier_lo, spec.outlier_hi);
  out.outlier_time = pick(rng);
  const auto s = static_cast<std::size_t>(out.outlier_time - 1);
  out.Y(s, 0) = spec.outlier_value[0];
  out.Y(s, 1) = spec.outlier_value[1];
  return out;
}

std::vector<LabeledSeries> batch(const ScenarioSpec& spec, int n_reps, std::uint64_t base_seed) {
  if (n_reps < 1) throw InvalidSpec("n_reps must be at least 1");
  std::vector<LabeledSeries> out;
  out.reserve(static_cast<std::size_t>(n_reps));
  for (int i = 0; i < n_reps; ++i) out.push_back(generate(spec, base_seed + static_cast<std::uint64_t>(i)));
  return out;
}

Hyperparameters simulation_prior(bool seasonal) {
  Hyperparameters eta;
  eta.nu0 = 20.0;
  eta.B0 = seasonal ? Matrix::from_rows({{0.5, 0.5}, {0.1, 0.1}, {0.04, 0.04}, {0.0, 0.0}})
                    : Matrix::from_rows({{0.5, 0.5}, {0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}});
  eta.V0 = ((eta.nu0 - 2.0 - 1.0) * 1e-3) * SymMatrix::from_rows({{1.0, 0.9}, {0.9, 1.0}});
  const double diag[4] = {0.1, 10.0, 10.0, 10.0};
  eta.Lambda0 = 0.01 * SymMatrix(Matrix::diagonal(diag));
  return eta;
}

}  // namespace bocpd
