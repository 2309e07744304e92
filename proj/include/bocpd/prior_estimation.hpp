#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bocpd/conjugate_model.hpp"

namespace bocpd {

/// Least-squares fit of one historical stable segment.
struct SegmentFit {
  RectMatrix B_hat;    ///< k×d
  SymMatrix Sigma_hat; ///< d×d residual covariance, divisor n − k
  long n_obs = 0;
};

/// Multivariate OLS. Throws TooFewObservations when n < k + d, RankDeficient when XᵀX is
/// numerically singular, NotPositiveDefinite when the residual covariance collapses.
SegmentFit fit_segment(const Matrix& X, const Matrix& Y);

/// ∂L/∂ν of the inverse-Wishart likelihood of the fitted covariances, with V0
/// replaced by its moment estimate ((ν − d − 1)/n) Σ Σ̂_i.
double nu_score(std::span<const SymMatrix> sigma_fits, double nu);

/// Root of nu_score on (d + 1 + 1e-6, 1e6]. Throws NoRoot without a sign change.
double solve_nu(std::span<const SymMatrix> sigma_fits, std::size_t d);

/// Moment and likelihood estimates of (B0, Λ0, V0, ν0) from per-segment fits.
/// Throws SingularLambda when the coefficient scatter is not invertible.
Hyperparameters estimate_hyperparameters(std::span<const SegmentFit> fits, std::size_t d,
                                         std::size_t k);

}  // namespace bocpd
