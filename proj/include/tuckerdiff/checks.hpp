#pragma once

#include <string>
#include <vector>

#include "tuckerdiff/diffusion.hpp"
#include "tuckerdiff/rng.hpp"

namespace tucker::checks {

struct CheckResult {
  std::string name;
  bool pass = false;
  double value = 0.0;  // worst observed error
  double tol = 0.0;
  std::string detail;
  double seconds = 0.0;
};

struct RandomModelOptions {
  bool heterogeneous = true;
  bool separable_noise = false;  // noise variance a Kronecker product across modes
  bool zero_mean = true;
  bool diagonal_core = true;
  double sigma_lo = 0.5;  // noise standard deviation range
  double sigma_hi = 1.5;
  bool random_betas = true;
  double core_var_lo = 0.5;
  double core_var_hi = 4.0;
};

/// Random orthonormal frames, core variances in [core_var_lo, core_var_hi],
/// noise σ in [sigma_lo, sigma_hi].
GaussianModel random_gaussian_model(const Shape& shape, const std::vector<std::size_t>& ranks,
                                    const RandomModelOptions& opts, Rng& rng);

/// ‖a − b‖ / ‖b‖, with ‖b‖ floored at 1e-300.
double relative_error(const DenseTensor& a, const DenseTensor& b);

/// Subspace-form score vs brute-force covariance score vs (homogeneous cases) the
/// closed form, pairwise, over `cases` random models and inputs. perturb
/// scales the subspace-form score by (1 + perturb) as a negative control.
CheckResult oracle_triangle(std::uint64_t seed, std::size_t cases = 120, double perturb = 0.0, double tol = 1e-8);

/// A net with ground-truth frames, ω = σ² and the analytic ξ core against
/// the subspace-form score.
CheckResult representability(std::uint64_t seed, std::size_t cases = 50, double tol = 1e-8);

/// Finite-difference check of the score-matching loss gradient of a full
/// network on shape (4, 3), ranks (2, 2), all parameter groups.
CheckResult network_gradients(std::uint64_t seed, double tol = 1e-4);

/// Oracle-driven sampling on shape (6, 5), ranks (2, 2), one noise level,
/// core variances in [2, 5]; returns the top
/// eigenvalue, bulk eigenvalue and subspace recovery checks.
std::vector<CheckResult> sampler_covariance(std::uint64_t seed, std::size_t n_gen = 5000, std::size_t steps = 200);

}  // namespace tucker::checks
