#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "bocpd/conjugate_model.hpp"

namespace bocpd {

/// One simulation scenario: mean shift and/or correlation switch at t_star, one outlier.
struct ScenarioSpec {
  int case_id = 0;
  double mu_star = 0.5;
  double rho0 = 0.0;
  std::optional<double> rho_star;  ///< covariance redrawn with this correlation from t_star on
  bool seasonal = false;
  long t_star = 181;
  long length = 270;
  std::vector<double> outlier_value{0.8, 0.1};
  long outlier_lo = 90;
  long outlier_hi = 270;

  /// Throws InvalidSpec.
  void validate() const;
};

/// The nine standard scenarios, case_id 1..9. Throws InvalidSpec otherwise.
ScenarioSpec scenario(int case_id);

struct LabeledSeries {
  Matrix X;  ///< n×3: sin(2πt/365), cos(2πt/365), t/length for t = 1..n
  Matrix Y;  ///< n×2
  long true_changepoint = 0;
  long outlier_time = 0;
  std::uint64_t seed = 0;
};

LabeledSeries generate(const ScenarioSpec& spec, std::uint64_t seed);

/// Seeds base_seed .. base_seed + n_reps − 1.
std::vector<LabeledSeries> batch(const ScenarioSpec& spec, int n_reps, std::uint64_t base_seed);

/// Detector prior matching the generator, with covariates [1, sin, cos, trend].
Hyperparameters simulation_prior(bool seasonal);

/// Σ ~ IW(V, ν) through the Bartlett decomposition of Σ⁻¹ ~ W(V⁻¹, ν).
SymMatrix sample_inverse_wishart(const SymMatrix& V, double nu, std::mt19937_64& rng);

/// β ~ MN(M, U, S): rows covary by U, columns by S.
Matrix sample_matrix_normal(const Matrix& M, const SymMatrix& U, const SymMatrix& S,
                            std::mt19937_64& rng);

}  // namespace bocpd
