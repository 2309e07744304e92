#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bocpd/numerics.hpp"

namespace bocpd {

/// Matrix-normal inverse-Wishart prior for Y = X β + E, rows of E ~ N(0, Σ):
///   β | Σ ~ MN(B0, Λ0⁻¹, Σ),  Σ ~ IW(V0, ν0).
/// B0 is k×d, Λ0 is k×k, V0 is d×d; ν0 is real-valued.
struct Hyperparameters {
  RectMatrix B0;
  SymMatrix Lambda0;
  SymMatrix V0;
  double nu0 = 0.0;

  std::size_t d() const noexcept { return V0.dim(); }
  std::size_t k() const noexcept { return Lambda0.dim(); }

  /// Throws InvalidConfig unless dimensions agree, Λ0 and V0 are PD and ν0 > d - 1.
  void validate() const;
};

/// Run-length sufficient statistics: G = YᵀY, H = XᵀX, K = XᵀY, n rows.
struct SufficientStats {
  SymMatrix G;
  SymMatrix H;
  RectMatrix K;
  long n = 0;

  static SufficientStats zeros(std::size_t d, std::size_t k);

  std::size_t d() const noexcept { return G.dim(); }
  std::size_t k() const noexcept { return H.dim(); }

  /// In-place G += yyᵀ, H += xxᵀ, K += xyᵀ, n += 1.
  void add(std::span<const double> x, std::span<const double> y);
  /// In-place inverse of add. Throws EmptyStats when n == 0.
  void remove(std::span<const double> x, std::span<const double> y);

  bool operator==(const SufficientStats&) const = default;
};

struct PosteriorParams {
  RectMatrix B;
  SymMatrix Lambda;
  SymMatrix V;
  double nu = 0.0;
};

SufficientStats stats_update(SufficientStats s, std::span<const double> x, std::span<const double> y);
SufficientStats stats_downdate(SufficientStats s, std::span<const double> x,
                               std::span<const double> y);

PosteriorParams posterior_params(const Hyperparameters& eta, const SufficientStats& s);

/// log ∫ f(Y | β, Σ) f(β, Σ | η) dβ dΣ for the rows summarized by s.
double log_marginal(const Hyperparameters& eta, const SufficientStats& s);

/// log f(y | x, rows in s): the matrix-t posterior predictive, computed as a marginal ratio.
double log_predictive(const Hyperparameters& eta, const SufficientStats& s,
                      std::span<const double> x, std::span<const double> y);

/// Precomputes prior-only terms so the streaming filter can evaluate marginals cheaply.
/// Immutable after construction; safe to share across threads.
class ConjugateModel {
 public:
  static constexpr std::size_t kMaxD = 8;
  static constexpr std::size_t kMaxK = 12;

  explicit ConjugateModel(Hyperparameters eta);

  const Hyperparameters& hyperparameters() const noexcept { return eta_; }
  std::size_t d() const noexcept { return d_; }
  std::size_t k() const noexcept { return k_; }

  double log_marginal(const SufficientStats& s) const;

  /// log_marginal of s with (x, y) added (sign = +1) or removed (sign = -1), without copying s.
  double log_marginal_with(const SufficientStats& s, std::span<const double> x,
                           std::span<const double> y, double sign = 1.0) const;

  /// Log predictive density of (x, y) under the prior (empty stats).
  double log_prior_predictive(std::span<const double> x, std::span<const double> y) const;

  void check_dims(std::span<const double> x, std::span<const double> y) const;

 private:
  double evaluate(const SufficientStats& s, const double* x, const double* y, double sign) const;
  double log_multigamma_at(long n) const;

  Hyperparameters eta_;
  std::size_t d_;
  std::size_t k_;
  std::vector<double> lambda0_;     // k×k, row-major
  std::vector<double> prior_shift_; // Λ0 B0, k×d
  std::vector<double> prior_scale_; // V0 + B0ᵀ Λ0 B0, d×d
  double constant_ = 0.0;
  std::vector<double> gamma_table_;  // log Γ_d((ν0 + n)/2) for small n
};

}  // namespace bocpd
