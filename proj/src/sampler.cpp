#include "tuckerdiff/sampler.hpp"

#include <cmath>
#include <memory>

namespace tucker {

std::string to_string(Scheme s) { return s == Scheme::kDdim ? "ddim" : "em"; }

Scheme parse_scheme(const std::string& s) {
  if (s == "em" || s == "euler_maruyama") return Scheme::kEulerMaruyama;
  if (s == "ddim") return Scheme::kDdim;
  throw ValidationError("scheme must be em or ddim, got '" + s + "'");
}

std::string to_string(TimeGrid g) { return g == TimeGrid::kUniform ? "uniform" : "geometric"; }

TimeGrid parse_time_grid(const std::string& s) {
  if (s == "uniform") return TimeGrid::kUniform;
  if (s == "geometric") return TimeGrid::kGeometric;
  throw ValidationError("grid must be uniform or geometric, got '" + s + "'");
}

void SamplerConfig::validate() const {
  if (steps == 0) throw ValidationError("sampler steps must be >= 1");
  if (n_gen == 0) throw ValidationError("n_gen must be >= 1");
  sched.validate();
}

std::vector<double> time_grid(const SamplerConfig& cfg) {
  cfg.validate();
  std::vector<double> grid(cfg.steps + 1);
  const auto n = static_cast<double>(cfg.steps);
  const double dt = (cfg.sched.T - cfg.sched.t0) / n;
  const double ratio = std::log(cfg.sched.T / cfg.sched.t0) / n;
  for (std::size_t k = 0; k <= cfg.steps; ++k) {
    const auto kk = static_cast<double>(k);
    grid[k] = cfg.grid == TimeGrid::kUniform ? cfg.sched.t0 + kk * dt : cfg.sched.t0 * std::exp(kk * ratio);
  }
  grid.back() = cfg.sched.T;
  return grid;
}

Dataset generate(const ScoreSource& score, const Shape& shape, const SamplerConfig& cfg, const Rng& rng) {
  cfg.validate();
  const std::vector<double> grid = time_grid(cfg);
  const std::size_t n = cfg.n_gen;
  const auto count = static_cast<std::ptrdiff_t>(n);

  std::vector<Rng> streams;
  streams.reserve(n);
  for (std::size_t j = 0; j < n; ++j) streams.push_back(rng.substream(Stream::kSampler, j));

  std::vector<DenseTensor> x(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t j = 0; j < count; ++j) x[j] = sample_standard_normal(shape, streams[j]);

  std::vector<DenseTensor> s(n);
  for (std::size_t k = cfg.steps; k >= 1; --k) {
    const double t = grid[k];
    const double t_next = grid[k - 1];
    for (DenseTensor& v : s) v = DenseTensor(shape);
    score(x, t, s);

    const AlphaH at = alpha_h(cfg.sched, t);
    const AlphaH as = alpha_h(cfg.sched, t_next);
    const double delta = t - t_next;
    const double sq = std::sqrt(delta);
    std::vector<char> bad(n, 0);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t j = 0; j < count; ++j) {
      DenseTensor& xj = x[j];
      const DenseTensor& sj = s[j];
      if (sj.shape() != shape) {
        bad[j] = 1;
        continue;
      }
      if (cfg.scheme == Scheme::kEulerMaruyama) {
        for (std::size_t i = 0; i < xj.size(); ++i)
          xj[i] += delta * (0.5 * xj[i] + sj[i]) + sq * streams[j].normal();
      } else {
        const double sh = std::sqrt(at.h);
        const double shs = std::sqrt(as.h);
        for (std::size_t i = 0; i < xj.size(); ++i) {
          const double x0 = (xj[i] + at.h * sj[i]) / at.alpha;
          const double eps = -sh * sj[i];
          xj[i] = as.alpha * x0 + shs * eps;
        }
      }
      if (!xj.all_finite()) bad[j] = 1;
    }
    for (std::size_t j = 0; j < n; ++j)
      if (bad[j])
        throw NumericalError("non-finite sampler state at step " + std::to_string(cfg.steps - k + 1) + " (t = " +
                             std::to_string(t) + ", trajectory " + std::to_string(j) + ")");
  }

  Dataset out;
  out.samples = std::move(x);
  out.meta.seed = rng.seed();
  out.meta.provenance = "generated";
  out.meta.split = "generated";
  return out;
}

ScoreSource net_score_source(const TuckerScoreNet& net) {
  return [&net](std::span<const DenseTensor> xs, double t, std::span<DenseTensor> out) {
    std::vector<DenseTensor> s = net.score_batch(xs, t);
    for (std::size_t j = 0; j < s.size(); ++j) out[j] = std::move(s[j]);
  };
}

ScoreSource gaussian_score_source(const GaussianModel& m, const DiffusionSchedule& sched, double perturb) {
  auto model = std::make_shared<GaussianModel>(m);
  return [model, sched, perturb](std::span<const DenseTensor> xs, double t, std::span<DenseTensor> out) {
    const GaussianScoreContext ctx(*model, t, sched);
    const auto count = static_cast<std::ptrdiff_t>(xs.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t j = 0; j < count; ++j) {
      out[j] = ctx.score(xs[j]);
      if (perturb != 0.0) out[j] *= 1.0 + perturb;
    }
  };
}

CovarianceReport generate_tucker_gaussian_check(const GaussianModel& m, const SamplerConfig& cfg, const Rng& rng) {
  m.validate();
  const Matrix sigma = full_covariance(m, cfg.sched.t0, cfg.sched);
  CovarianceReport rep;
  rep.generated = generate(gaussian_score_source(m, cfg.sched), m.shape(), cfg, rng);
  if (rep.generated.size() < 2) throw ValidationError("covariance check needs n_gen >= 2");

  const auto p = static_cast<Eigen::Index>(m.shape().total());
  Vector mean = Vector::Zero(p);
  for (const DenseTensor& x : rep.generated.samples) mean += x.vec();
  mean /= static_cast<double>(rep.generated.size());
  Matrix cov = Matrix::Zero(p, p);
  for (const DenseTensor& x : rep.generated.samples) {
    const Vector c = x.vec() - mean;
    cov.noalias() += c * c.transpose();
  }
  cov /= static_cast<double>(rep.generated.size() - 1);

  rep.empirical = symmetric_eigen(cov).values;
  rep.analytic = symmetric_eigen(sigma).values;
  rep.r = m.core_size();
  double emp_bulk = 0.0;
  double ana_bulk = 0.0;
  for (Eigen::Index k = 0; k < p; ++k) {
    if (static_cast<std::size_t>(k) >= rep.r) {
      emp_bulk += rep.empirical[k];
      ana_bulk += rep.analytic[k];
    }
    const double rel = std::abs(rep.empirical[k] - rep.analytic[k]) / rep.analytic[k];
    if (static_cast<std::size_t>(k) < rep.r)
      rep.top_max_rel_err = std::max(rep.top_max_rel_err, rel);
    else
      rep.bulk_max_rel_err = std::max(rep.bulk_max_rel_err, rel);
  }
  if (ana_bulk > 0.0) rep.bulk_level_rel_err = std::abs(emp_bulk - ana_bulk) / ana_bulk;
  const HooiResult est = hooi(rep.generated, m.basis.ranks());
  for (std::size_t d = 0; d < m.basis.order(); ++d)
    rep.recovery.push_back(projection_metric(est.basis.frames[d], m.basis.frames[d]));
  return rep;
}

}  // namespace tucker
