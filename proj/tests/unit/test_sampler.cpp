#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "tuckerdiff/checks.hpp"
#include "tuckerdiff/error.hpp"
#include "tuckerdiff/sampler.hpp"

using namespace tucker;

namespace {

// Exact score of the 1-D law N(0, s²) under the OU forward process.
ScoreSource scalar_score(double s, const DiffusionSchedule& sched) {
  return [=](std::span<const DenseTensor> xs, double t, std::span<DenseTensor> out) {
    const AlphaH ah = alpha_h(sched, t);
    const double v = ah.alpha * ah.alpha * s * s + ah.h;
    for (std::size_t j = 0; j < xs.size(); ++j) {
      out[j] = xs[j];
      out[j] *= -1.0 / v;
    }
  };
}

double variance(const Dataset& d) {
  double m = 0.0, m2 = 0.0;
  for (const DenseTensor& x : d.samples) {
    m += x[0];
    m2 += x[0] * x[0];
  }
  const double n = static_cast<double>(d.size());
  m /= n;
  return (m2 - n * m * m) / (n - 1.0);
}

double mean(const Dataset& d) {
  double m = 0.0;
  for (const DenseTensor& x : d.samples) m += x[0];
  return m / static_cast<double>(d.size());
}

SamplerConfig config(Scheme scheme, std::size_t steps, std::size_t n) {
  SamplerConfig cfg;
  cfg.scheme = scheme;
  cfg.steps = steps;
  cfg.n_gen = n;
  return cfg;
}

double target_variance(double s, const DiffusionSchedule& sched) {
  const AlphaH a = alpha_h(sched, sched.t0);
  return a.alpha * a.alpha * s * s + a.h;
}

}  // namespace

// Deterministic DDIM on a 1-D Gaussian is linear: x_t0 = G x_T with G the
// product of the per-step gains α_s(1 − h_t/v_t)/α_t + √(h_s h_t)/v_t.
double ddim_gain(double s, const SamplerConfig& cfg) {
  const auto g = time_grid(cfg);
  double gain = 1.0;
  for (std::size_t k = cfg.steps; k >= 1; --k) {
    const AlphaH at = alpha_h(cfg.sched, g[k]), as = alpha_h(cfg.sched, g[k - 1]);
    const double v = at.alpha * at.alpha * s * s + at.h;
    gain *= as.alpha * (1.0 - at.h / v) / at.alpha + std::sqrt(as.h * at.h) / v;
  }
  return gain;
}

// Single-run variance for EM; for DDIM the seed-averaged variance, since its
// discretization bias (about 4% at N = 200) leaves a single n = 5000 draw
// near the tolerance edge.
void expect_variance_within_5pct(double s, SamplerConfig cfg) {
  const double target = target_variance(s, cfg.sched);
  if (cfg.scheme == Scheme::kEulerMaruyama) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const Dataset d = generate(scalar_score(s, cfg.sched), Shape{1}, cfg, Rng(seed));
      EXPECT_NEAR(variance(d) / target, 1.0, 0.05) << "em seed " << seed;
    }
    return;
  }
  double avg = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed)
    avg += variance(generate(scalar_score(s, cfg.sched), Shape{1}, cfg, Rng(seed))) / 5.0;
  EXPECT_NEAR(avg / target, 1.0, 0.05) << "ddim " << to_string(cfg.grid);
}

TEST(Sampler, StandardNormalIsAFixedPoint) {
  for (Scheme scheme : {Scheme::kEulerMaruyama, Scheme::kDdim})
    expect_variance_within_5pct(1.0, config(scheme, 200, 5000));
}

TEST(Sampler, ScalarGaussianVarianceWithin5Percent) {
  for (Scheme scheme : {Scheme::kEulerMaruyama, Scheme::kDdim})
    expect_variance_within_5pct(2.0, config(scheme, 200, 5000));
}

TEST(Sampler, DdimIsTheExactLinearMapOnScalarGaussians) {
  for (TimeGrid grid : {TimeGrid::kUniform, TimeGrid::kGeometric})
    for (std::size_t steps : {1u, 7u, 50u}) {
      SamplerConfig cfg = config(Scheme::kDdim, steps, 20);
      cfg.grid = grid;
      const double s = 2.0;
      const Rng rng(11);
      const Dataset d = generate(scalar_score(s, cfg.sched), Shape{1}, cfg, rng);
      const double gain = ddim_gain(s, cfg);
      for (std::size_t j = 0; j < d.size(); ++j) {
        Rng stream = rng.substream(Stream::kSampler, j);
        const double x = stream.normal();
        EXPECT_NEAR(d.samples[j][0], gain * x, 1e-12 * std::abs(gain * x)) << steps;
      }
    }
}

TEST(Sampler, SchemesAgreeOnMoments) {
  const double s = 2.0;
  const SamplerConfig ddim = config(Scheme::kDdim, 200, 5000);
  const Dataset dd = generate(scalar_score(s, ddim.sched), Shape{1}, ddim, Rng(3));
  double em_var = 0.0, em_mean = 0.0;
  const int seeds = 4;
  for (int k = 0; k < seeds; ++k) {
    const SamplerConfig em = config(Scheme::kEulerMaruyama, 200, 5000);
    const Dataset de = generate(scalar_score(s, em.sched), Shape{1}, em, Rng(100 + k));
    em_var += variance(de) / seeds;
    em_mean += mean(de) / seeds;
  }
  EXPECT_NEAR(em_var / variance(dd), 1.0, 0.05);
  // means are zero; compare on the scale of the standard deviation
  EXPECT_NEAR(em_mean - mean(dd), 0.0, 0.05 * std::sqrt(variance(dd)));
}

TEST(Sampler, SingleDdimStepIsDenoiserIdentity) {
  Rng mrng(4);
  checks::RandomModelOptions opts;
  const GaussianModel m = checks::random_gaussian_model(Shape{4, 3}, {2, 1}, opts, mrng);
  SamplerConfig cfg = config(Scheme::kDdim, 1, 3);
  const Rng rng(5);
  const Dataset d = generate(gaussian_score_source(m, cfg.sched), m.shape(), cfg, rng);
  const AlphaH aT = alpha_h(cfg.sched, cfg.sched.T), a0 = alpha_h(cfg.sched, cfg.sched.t0);
  for (std::size_t j = 0; j < 3; ++j) {
    Rng stream = rng.substream(Stream::kSampler, j);
    const DenseTensor x = sample_standard_normal(m.shape(), stream);
    const DenseTensor s = oracle_score_general(m, x, cfg.sched.T, cfg.sched);
    DenseTensor x0 = x + aT.h * s;
    x0 *= 1.0 / aT.alpha;
    DenseTensor eps = s;
    eps *= -std::sqrt(aT.h);
    const DenseTensor expect = a0.alpha * x0 + std::sqrt(a0.h) * eps;
    EXPECT_LT(test::rel_err(d.samples[j], expect), 1e-13);
  }
}

TEST(Sampler, RefinementReducesVarianceError) {
  const double s = 2.0;
  std::vector<double> err;
  for (std::size_t steps : {25u, 50u, 100u, 200u, 400u}) {
    const SamplerConfig cfg = config(Scheme::kDdim, steps, 20000);
    const Dataset d = generate(scalar_score(s, cfg.sched), Shape{1}, cfg, Rng(6));
    err.push_back(std::abs(variance(d) / target_variance(s, cfg.sched) - 1.0));
  }
  // common initial draws; "within noise" is the 1% sampling error of a variance at n = 20000
  for (std::size_t k = 1; k < err.size(); ++k) EXPECT_LE(err[k], err[k - 1] + 0.01) << k;
  EXPECT_LT(err.back(), err.front());
}

TEST(Sampler, Deterministic) {
  for (Scheme scheme : {Scheme::kEulerMaruyama, Scheme::kDdim}) {
    const SamplerConfig cfg = config(scheme, 20, 50);
    const auto score = scalar_score(1.5, cfg.sched);
    const Dataset a = generate(score, Shape{2}, cfg, Rng(7));
    const Dataset b = generate(score, Shape{2}, cfg, Rng(7));
    const Dataset c = generate(score, Shape{2}, cfg, Rng(8));
    for (std::size_t j = 0; j < a.size(); ++j) EXPECT_TRUE(a.samples[j].vec() == b.samples[j].vec());
    EXPECT_FALSE(a.samples[0].vec() == c.samples[0].vec());
  }
}

TEST(Sampler, TimeGrids) {
  SamplerConfig cfg = config(Scheme::kDdim, 10, 1);
  const auto uni = time_grid(cfg);
  ASSERT_EQ(uni.size(), 11u);
  EXPECT_DOUBLE_EQ(uni.front(), cfg.sched.t0);
  EXPECT_DOUBLE_EQ(uni.back(), cfg.sched.T);
  for (std::size_t k = 1; k < uni.size(); ++k)
    EXPECT_NEAR(uni[k] - uni[k - 1], (cfg.sched.T - cfg.sched.t0) / 10.0, 1e-12);
  cfg.grid = TimeGrid::kGeometric;
  const auto geo = time_grid(cfg);
  EXPECT_DOUBLE_EQ(geo.front(), cfg.sched.t0);
  EXPECT_NEAR(geo.back(), cfg.sched.T, 1e-12);
  const double ratio = std::pow(cfg.sched.T / cfg.sched.t0, 0.1);
  for (std::size_t k = 1; k < geo.size(); ++k) EXPECT_NEAR(geo[k] / geo[k - 1], ratio, 1e-12);
  EXPECT_EQ(parse_time_grid("geometric"), TimeGrid::kGeometric);
  EXPECT_THROW(parse_time_grid("log"), ValidationError);
}

TEST(Sampler, GeometricGridAlsoSamplesTheLaw) {
  for (Scheme scheme : {Scheme::kEulerMaruyama, Scheme::kDdim}) {
    SamplerConfig cfg = config(scheme, 200, 5000);
    cfg.grid = TimeGrid::kGeometric;
    expect_variance_within_5pct(2.0, cfg);
  }
}

TEST(Sampler, GaussianSourceMatchesOracle) {
  Rng rng(10);
  checks::RandomModelOptions opts;
  const GaussianModel m = checks::random_gaussian_model(Shape{5, 4}, {2, 2}, opts, rng);
  const DiffusionSchedule sched;
  std::vector<DenseTensor> xs{sample_standard_normal(m.shape(), rng), sample_standard_normal(m.shape(), rng)};
  std::vector<DenseTensor> out(2), pert(2);
  gaussian_score_source(m, sched)(xs, 0.3, out);
  gaussian_score_source(m, sched, 0.1)(xs, 0.3, pert);
  for (std::size_t j = 0; j < 2; ++j) {
    const DenseTensor ref = oracle_score_general(m, xs[j], 0.3, sched);
    EXPECT_LT(test::rel_err(out[j], ref), 1e-14);
    EXPECT_LT(test::rel_err(pert[j], 1.1 * ref), 1e-14);
  }
}

TEST(Sampler, RejectsBadInputs) {
  SamplerConfig cfg = config(Scheme::kDdim, 0, 1);
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = config(Scheme::kEulerMaruyama, 5, 3);
  const ScoreSource nan_score = [](std::span<const DenseTensor> xs, double, std::span<DenseTensor> out) {
    for (std::size_t j = 0; j < xs.size(); ++j) {
      out[j] = xs[j];
      out[j][0] = std::nan("");
    }
  };
  EXPECT_THROW(generate(nan_score, Shape{2}, cfg, Rng(1)), NumericalError);
  EXPECT_EQ(parse_scheme("em"), Scheme::kEulerMaruyama);
  EXPECT_THROW(parse_scheme("heun"), ValidationError);
}
