#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tuckerdiff/dataset.hpp"
#include "tuckerdiff/diffusion.hpp"
#include "tuckerdiff/tucker_net.hpp"

namespace tucker {

enum class Scheme { kEulerMaruyama, kDdim };

std::string to_string(Scheme s);
Scheme parse_scheme(const std::string& s);  // "em" | "euler_maruyama" | "ddim"

enum class TimeGrid { kUniform, kGeometric };
std::string to_string(TimeGrid g);
TimeGrid parse_time_grid(const std::string& s);  // "uniform" | "geometric"

struct SamplerConfig {
  std::size_t steps = 50;
  Scheme scheme = Scheme::kDdim;
  TimeGrid grid = TimeGrid::kUniform;
  DiffusionSchedule sched;
  std::size_t n_gen = 1;

  void validate() const;
};

/// Fills out[j] with the score at (xs[j], t). Called once per step with the
/// whole population; must not keep references past the call.
using ScoreSource = std::function<void(std::span<const DenseTensor> xs, double t, std::span<DenseTensor> out)>;

/// t0 = t_0 < ... < t_N = T, uniform or geometric spacing per cfg.grid.
std::vector<double> time_grid(const SamplerConfig& cfg);

/// Starts every trajectory j from N(0, I) drawn on substream (kSampler, j)
/// and integrates from T down to t0.
Dataset generate(const ScoreSource& score, const Shape& shape, const SamplerConfig& cfg, const Rng& rng);

ScoreSource net_score_source(const TuckerScoreNet& net);

/// Exact score of a Gaussian model; perturb > 0 scales it by (1 + perturb).
ScoreSource gaussian_score_source(const GaussianModel& m, const DiffusionSchedule& sched, double perturb = 0.0);

struct CovarianceReport {
  Dataset generated;
  Vector empirical;  // sorted eigenvalues of the sample covariance, descending
  Vector analytic;   // sorted eigenvalues of the marginal covariance at t0
  std::size_t r = 0;
  double top_max_rel_err = 0.0;   // first r pairs
  double bulk_max_rel_err = 0.0;  // remaining pairs
  double bulk_level_rel_err = 0.0;  // mean of the remaining eigenvalues vs its analytic value
  std::vector<double> recovery;   // D(hooi(generated), A_d) per mode
};

/// Samples with the subspace-form oracle and compares spectra against the exact
/// covariance at t0.
CovarianceReport generate_tucker_gaussian_check(const GaussianModel& m, const SamplerConfig& cfg, const Rng& rng);

}  // namespace tucker
