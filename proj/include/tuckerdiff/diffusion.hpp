#pragma once

#include <memory>
#include <span>
#include <vector>

#include "tuckerdiff/factor_model.hpp"
#include "tuckerdiff/linalg.hpp"
#include "tuckerdiff/rng.hpp"
#include "tuckerdiff/tensor.hpp"

namespace tucker {

/// Ornstein-Uhlenbeck forward process with v_t = 1 on [t0, T].
struct DiffusionSchedule {
  double t0 = 1e-3;
  double T = 5.0;

  void validate() const;
};

struct AlphaH {
  double alpha;  // e^{-t/2}
  double h;      // 1 - alpha^2
};

AlphaH alpha_h(const DiffusionSchedule& sched, double t);

/// alpha_t x0 + sqrt(h_t) z for a caller-supplied standard normal z.
DenseTensor forward_sample(const DenseTensor& x0, double t, const DiffusionSchedule& sched, const DenseTensor& z);
DenseTensor forward_sample(const DenseTensor& x0, double t, const DiffusionSchedule& sched, Rng& rng);

/// ∇ log Φ_t(x_t | x_0) = -(x_t - alpha_t x_0) / h_t.
DenseTensor transition_score(const DenseTensor& xt, const DenseTensor& x0, double t,
                             const DiffusionSchedule& sched);

/// Data law X_0 = F ×_d A_d + p^{-β/2} E with Gaussian core
/// vec(F) ~ N(core_mean, core_cov) and independent entrywise noise of
/// variance noise_var. core_cov need not be diagonal; the homogeneous
/// closed form requires it to be.
struct GaussianModel {
  TuckerBasis basis;
  Vector core_mean;       // r, row-major vec of the core
  Matrix core_cov;        // r × r SPD
  DenseTensor noise_var;  // data-shaped, entries σ²
  std::vector<double> betas;

  Shape shape() const;
  std::size_t core_size() const { return basis.core_size(); }
  double p_beta() const;
  bool homogeneous_noise() const;
  bool diagonal_core() const;
  void validate() const;
};

/// Exact Gaussian law of a benchmark spec under raw scaling: frames are the
/// orthonormalized loadings, the raw loadings' triangular factors are folded
/// into the core mean/covariance, and β = 0.
GaussianModel gaussian_model_from_raw_spec(const FactorModelSpec& spec);

/// Σ_t^Tucker: entrywise h_t + alpha_t² p^{-β} σ².
DenseTensor sigma_t_tucker(const GaussianModel& m, double t, const DiffusionSchedule& sched);

/// Homogeneous closed form; needs homogeneous noise, diagonal core
/// covariance and zero core mean.
DenseTensor oracle_score_gaussian_homog(const GaussianModel& m, const DenseTensor& xt, double t,
                                        const DiffusionSchedule& sched);

/// Subspace score minus complement score, with the Gaussian core score in
/// closed form. Handles heterogeneous noise.
DenseTensor oracle_score_general(const GaussianModel& m, const DenseTensor& xt, double t,
                                 const DiffusionSchedule& sched);

/// -Σ_full^{-1}(x - alpha_t A μ) with the p × p covariance assembled from
/// explicit Kronecker products. p ≤ 4096.
DenseTensor brute_force_gaussian_score(const GaussianModel& m, const DenseTensor& xt, double t,
                                       const DiffusionSchedule& sched);

/// Vectorized marginal covariance of X_t: alpha² A Σ_f Aᵀ + diag(Σ_t).
Matrix full_covariance(const GaussianModel& m, double t, const DiffusionSchedule& sched);

/// Core-space map ξ(g, t) = Σ_{A_t} ∇log p_core^t(g) + g.
Vector core_function_xi(const GaussianModel& m, const Vector& g, double t, const DiffusionSchedule& sched);

/// g_t = Σ_{A_t} vec((x_t ⊘ Σ_t^Tucker) ×_d A_dᵀ).
Vector encode_core(const GaussianModel& m, const DenseTensor& xt, double t, const DiffusionSchedule& sched);

/// Per-time factorizations shared by every oracle evaluation at that time.
class GaussianScoreContext {
 public:
  GaussianScoreContext(const GaussianModel& m, double t, const DiffusionSchedule& sched);

  double t() const noexcept { return t_; }
  const DenseTensor& sigma_t() const noexcept { return sigma_t_; }
  /// Σ_{A_t} = (Aᵀ Σ_t^{-1} A)^{-1}.
  const Matrix& sigma_a() const noexcept { return sigma_a_; }

  Vector encode(const DenseTensor& xt) const;
  Vector core_score(const Vector& g) const;  // ∇ log p_core^t(g)
  Vector xi(const Vector& g) const;
  DenseTensor score(const DenseTensor& xt) const;

 private:
  const GaussianModel* model_;
  double t_;
  AlphaH ah_;
  DenseTensor sigma_t_;
  Matrix sigma_a_;
  Eigen::LLT<Matrix> precision_;  // Aᵀ Σ_t^{-1} A
  Eigen::LLT<Matrix> core_marginal_;  // Σ_{A_t} + alpha² Σ_f
};

}  // namespace tucker
