#include "tuckerdiff/checks.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "tuckerdiff/sampler.hpp"
#include "tuckerdiff/trainer.hpp"
#include "tuckerdiff/tucker_net.hpp"

namespace tucker::checks {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

Matrix random_frame(std::size_t p, std::size_t r, Rng& rng) {
  Matrix g(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(r));
  for (Eigen::Index j = 0; j < g.cols(); ++j)
    for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = rng.normal();
  return qr_orthonormalize(g);
}

DenseTensor random_tensor(const Shape& shape, Rng& rng, double scale) {
  DenseTensor x = sample_standard_normal(shape, rng);
  x *= scale;
  return x;
}

}  // namespace

GaussianModel random_gaussian_model(const Shape& shape, const std::vector<std::size_t>& ranks,
                                    const RandomModelOptions& opts, Rng& rng) {
  GaussianModel m;
  for (std::size_t d = 0; d < shape.order(); ++d) {
    m.basis.frames.push_back(random_frame(shape[d], ranks[d], rng));
    m.betas.push_back(opts.random_betas ? rng.uniform(0.0, 1.0) : 0.0);
  }
  const auto r = static_cast<Eigen::Index>(m.basis.core_size());
  Vector var(r);
  for (Eigen::Index k = 0; k < r; ++k) var[k] = rng.uniform(opts.core_var_lo, opts.core_var_hi);
  if (opts.diagonal_core) {
    m.core_cov = var.asDiagonal();
  } else {
    const Matrix q = random_frame(static_cast<std::size_t>(r), static_cast<std::size_t>(r), rng);
    m.core_cov = q * var.asDiagonal() * q.transpose();
    m.core_cov = 0.5 * (m.core_cov + m.core_cov.transpose());
  }
  m.core_mean = Vector::Zero(r);
  if (!opts.zero_mean)
    for (Eigen::Index k = 0; k < r; ++k) m.core_mean[k] = rng.uniform(-1.0, 1.0);

  m.noise_var = DenseTensor(shape);
  const double lo2 = opts.sigma_lo * opts.sigma_lo;
  const double hi2 = opts.sigma_hi * opts.sigma_hi;
  if (!opts.heterogeneous) {
    const double s = rng.uniform(opts.sigma_lo, opts.sigma_hi);
    for (double& v : m.noise_var.data()) v = s * s;
  } else if (opts.separable_noise) {
    // Product of per-mode factors, each in [lo2^{1/D}, hi2^{1/D}].
    const double e = 1.0 / static_cast<double>(shape.order());
    std::vector<Vector> f;
    for (std::size_t d = 0; d < shape.order(); ++d) {
      Vector v(static_cast<Eigen::Index>(shape[d]));
      for (Eigen::Index j = 0; j < v.size(); ++j) v[j] = rng.uniform(std::pow(lo2, e), std::pow(hi2, e));
      f.push_back(v);
    }
    std::vector<std::size_t> idx(shape.order(), 0);
    for (std::size_t i = 0; i < m.noise_var.size(); ++i) {
      double v = 1.0;
      for (std::size_t d = 0; d < shape.order(); ++d) v *= f[d][static_cast<Eigen::Index>(idx[d])];
      m.noise_var[i] = v;
      for (std::size_t d = shape.order(); d-- > 0;) {
        if (++idx[d] < shape[d]) break;
        idx[d] = 0;
      }
    }
  } else {
    for (double& v : m.noise_var.data()) {
      const double s = rng.uniform(opts.sigma_lo, opts.sigma_hi);
      v = s * s;
    }
  }
  return m;
}

double relative_error(const DenseTensor& a, const DenseTensor& b) {
  return frobenius_norm(a - b) / std::max(frobenius_norm(b), 1e-300);
}

CheckResult oracle_triangle(std::uint64_t seed, std::size_t cases, double perturb, double tol) {
  const auto start = Clock::now();
  struct Case {
    Shape shape;
    std::vector<std::size_t> ranks;
  };
  const std::vector<Case> layouts = {
      {Shape{6, 5}, {2, 2}}, {Shape{4, 3}, {2, 1}},       {Shape{6, 5, 4}, {3, 2, 2}},
      {Shape{5, 4, 3}, {2, 2, 1}}, {Shape{3, 2, 2}, {1, 1, 1}}, {Shape{6, 5, 4}, {1, 2, 2}},
  };
  const DiffusionSchedule sched;
  Rng root(seed);
  CheckResult res;
  res.name = "oracle triangle";
  res.tol = tol;
  std::size_t homog_cases = 0;
  for (std::size_t c = 0; c < cases; ++c) {
    Rng rng = root.substream(Stream::kTest, c);
    const Case& layout = layouts[c % layouts.size()];
    RandomModelOptions opts;
    const std::size_t kind = (c / layouts.size()) % 4;
    opts.heterogeneous = kind != 0;
    opts.zero_mean = kind != 3;
    opts.diagonal_core = kind != 3;
    const GaussianModel m = random_gaussian_model(layout.shape, layout.ranks, opts, rng);
    // log-uniform over [t0, T] so that small times are exercised
    const double t = sched.t0 * std::pow(sched.T / sched.t0, rng.uniform());
    const DenseTensor x = random_tensor(layout.shape, rng, rng.uniform(0.2, 3.0));

    DenseTensor sub = oracle_score_general(m, x, t, sched);
    if (perturb != 0.0) sub *= 1.0 + perturb;
    const DenseTensor brute = brute_force_gaussian_score(m, x, t, sched);
    double worst = relative_error(sub, brute);
    if (m.homogeneous_noise() && m.diagonal_core() && m.core_mean.isZero(0.0)) {
      const DenseTensor homog = oracle_score_gaussian_homog(m, x, t, sched);
      worst = std::max({worst, relative_error(homog, brute), relative_error(sub, homog)});
      ++homog_cases;
    }
    res.value = std::max(res.value, worst);
  }
  res.pass = res.value <= tol;
  std::ostringstream os;
  os << cases << " cases (" << homog_cases << " with the homogeneous form), shapes up to (6,5,4)";
  res.detail = os.str();
  res.seconds = since(start);
  return res;
}

CheckResult representability(std::uint64_t seed, std::size_t cases, double tol) {
  const auto start = Clock::now();
  const DiffusionSchedule sched;
  Rng root(seed);
  CheckResult res;
  res.name = "representability";
  res.tol = tol;
  const std::vector<std::pair<Shape, std::vector<std::size_t>>> layouts = {
      {Shape{6, 5}, {2, 2}}, {Shape{4, 3}, {2, 2}}, {Shape{5, 4, 3}, {2, 2, 1}}};
  for (std::size_t c = 0; c < cases; ++c) {
    Rng rng = root.substream(Stream::kTest, 1000 + c);
    const auto& [shape, ranks] = layouts[c % layouts.size()];
    RandomModelOptions opts;
    opts.heterogeneous = c % 3 != 0;
    opts.separable_noise = true;
    opts.zero_mean = c % 2 == 0;
    opts.diagonal_core = c % 4 != 1;
    const GaussianModel m = random_gaussian_model(shape, ranks, opts, rng);
    const TuckerScoreNet net = net_from_gaussian_model(m, sched);
    for (int k = 0; k < 4; ++k) {
      const double t = sched.t0 * std::pow(sched.T / sched.t0, rng.uniform());
      const DenseTensor x = random_tensor(shape, rng, rng.uniform(0.2, 3.0));
      res.value = std::max(res.value, relative_error(net.score(x, t), oracle_score_general(m, x, t, sched)));
    }
  }
  res.pass = res.value <= tol;
  res.detail = std::to_string(cases * 4) + " (model, X_t, t) cases";
  res.seconds = since(start);
  return res;
}

CheckResult network_gradients(std::uint64_t seed, double tol) {
  const auto start = Clock::now();
  Rng rng = Rng(seed).substream(Stream::kTest, 2000);
  NetConfig cfg;
  cfg.shape = Shape{4, 3};
  cfg.ranks = {2, 2};
  cfg.mode = InitMode::kWarm;
  cfg.heterogeneity = true;
  cfg.hidden = {8, 8};
  cfg.sigma_max2 = 10.0;
  cfg.seed = seed;
  std::vector<Matrix> frames{random_frame(4, 2, rng), random_frame(3, 2, rng)};
  std::vector<Vector> omega;
  for (std::size_t p : {4, 3}) {
    Vector w(static_cast<Eigen::Index>(p));
    for (Eigen::Index j = 0; j < w.size(); ++j) w[j] = rng.uniform(0.3, 1.2);
    omega.push_back(w);
  }
  TuckerScoreNet net(cfg, frames, omega);
  // The output layer starts at zero; randomize it so every group gets signal.
  nn::Param& last = net.params()[net.core().weight_index(net.core().spec().layers() - 1)];
  for (Eigen::Index j = 0; j < last.value.cols(); ++j)
    for (Eigen::Index i = 0; i < last.value.rows(); ++i) last.value(i, j) = rng.uniform(-0.5, 0.5);
  net.params().touch();

  std::vector<DenseTensor> batch;
  std::vector<std::vector<DsmDraw>> draws;
  for (int i = 0; i < 3; ++i) {
    batch.push_back(random_tensor(cfg.shape, rng, 1.0));
    draws.push_back(draw_dsm(2, cfg.shape, cfg.sched, rng));
  }
  auto loss = [&](bool grad) { return dsm_loss(net, batch, draws, grad).loss; };
  const nn::GradCheckResult r = nn::check_gradients(net.params(), loss, rng, 20, 1e-5);

  CheckResult res;
  res.name = "network gradients";
  res.tol = tol;
  res.value = r.worst_mean();
  res.pass = res.value < tol;
  std::ostringstream os;
  os << r.entries.size() << " parameter groups, worst single-direction error " << r.worst_max();
  res.detail = os.str();
  res.seconds = since(start);
  return res;
}

std::vector<CheckResult> sampler_covariance(std::uint64_t seed, std::size_t n_gen, std::size_t steps) {
  const auto start = Clock::now();
  Rng rng = Rng(seed).substream(Stream::kTest, 3000);
  RandomModelOptions opts;
  opts.heterogeneous = false;
  opts.random_betas = false;
  opts.core_var_lo = 2.0;
  opts.core_var_hi = 5.0;
  const GaussianModel m = random_gaussian_model(Shape{6, 5}, {2, 2}, opts, rng);
  SamplerConfig cfg;
  cfg.steps = steps;
  cfg.n_gen = n_gen;
  cfg.scheme = Scheme::kDdim;
  const CovarianceReport rep = generate_tucker_gaussian_check(m, cfg, Rng(seed).substream(Stream::kTest, 3001));
  const double secs = since(start);

  std::vector<CheckResult> out(3);
  out[0].name = "sampler top-r eigenvalues";
  out[0].tol = 0.10;
  out[0].value = rep.top_max_rel_err;
  out[1].name = "sampler bulk noise level";
  out[1].tol = 0.15;
  out[1].value = rep.bulk_level_rel_err;
  out[2].name = "sampler subspace recovery";
  out[2].tol = 0.10;
  for (double d : rep.recovery) out[2].value = std::max(out[2].value, d);
  for (CheckResult& c : out) {
    c.pass = c.value <= c.tol;
    c.seconds = secs;
    c.detail = "n_gen " + std::to_string(n_gen) + ", " + std::to_string(steps) + " ddim steps";
  }
  out[1].detail += ", worst single bulk eigenvalue " + std::to_string(rep.bulk_max_rel_err);
  return out;
}

}  // namespace tucker::checks
