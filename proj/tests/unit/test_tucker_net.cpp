#include <gtest/gtest.h>

#include "helpers.hpp"
#include "tuckerdiff/checks.hpp"
#include "tuckerdiff/error.hpp"
#include "tuckerdiff/linalg.hpp"
#include "tuckerdiff/trainer.hpp"
#include "tuckerdiff/tucker_net.hpp"

using namespace tucker;

namespace {

NetConfig small_config(InitMode mode = InitMode::kWarm, bool het = true) {
  NetConfig cfg;
  cfg.shape = Shape{5, 4};
  cfg.ranks = {2, 2};
  cfg.mode = mode;
  cfg.heterogeneity = het;
  cfg.hidden = {8, 8};
  cfg.sigma_max2 = 10.0;
  return cfg;
}

std::vector<Vector> random_omega(const NetConfig& cfg, Rng& rng) {
  std::vector<Vector> w;
  if (!cfg.heterogeneity) return {Vector::Constant(1, rng.uniform(0.3, 1.2))};
  for (std::size_t d = 0; d < cfg.shape.order(); ++d) {
    Vector v(static_cast<Eigen::Index>(cfg.shape[d]));
    for (Eigen::Index j = 0; j < v.size(); ++j) v[j] = rng.uniform(0.3, 1.2);
    w.push_back(v);
  }
  return w;
}

TuckerScoreNet random_net(const NetConfig& cfg, Rng& rng, bool randomize_core = true) {
  std::vector<Matrix> frames;
  for (std::size_t d = 0; d < cfg.shape.order(); ++d)
    frames.push_back(test::random_stiefel(static_cast<Eigen::Index>(cfg.shape[d]),
                                          static_cast<Eigen::Index>(cfg.ranks[d]), rng));
  TuckerScoreNet net(cfg, frames, random_omega(cfg, rng));
  if (randomize_core) {
    for (nn::Param& p : net.params().all())
      if (p.name.rfind("core.", 0) == 0)
        for (Eigen::Index j = 0; j < p.value.cols(); ++j)
          for (Eigen::Index i = 0; i < p.value.rows(); ++i) p.value(i, j) = 0.4 * rng.normal();
    net.params().touch();
  }
  return net;
}

// Entry variances Ω_t written out from the per-mode ω vectors.
Vector dense_omega_t(const TuckerScoreNet& net, double t) {
  const double a2 = std::exp(-t), h = -std::expm1(-t);
  const Shape& s = net.config().shape;
  const auto w = net.omega();
  Vector out(static_cast<Eigen::Index>(s.total()));
  for (std::size_t i = 0; i < s.total(); ++i) {
    const auto idx = test::unravel(i, s);
    double e = 1.0;
    if (net.config().heterogeneity)
      for (std::size_t d = 0; d < s.order(); ++d) e *= w[d][static_cast<Eigen::Index>(idx[d])];
    else
      e = w[0][0];
    out[static_cast<Eigen::Index>(i)] = h + a2 * e / net.config().p_beta();
  }
  return out;
}

}  // namespace

TEST(TuckerNet, ZeroCoreSharedZeroOmegaIsStationarySkip) {
  Rng rng(1);
  NetConfig cfg = small_config(InitMode::kCold, false);
  std::vector<Matrix> frames{test::random_stiefel(5, 2, rng), test::random_stiefel(4, 2, rng)};
  const TuckerScoreNet net(cfg, frames, {Vector::Zero(1)});
  for (double t : {1e-3, 0.2, 3.0}) {
    const DenseTensor x = sample_standard_normal(cfg.shape, rng);
    const double h = -std::expm1(-t);
    const DenseTensor s = net.score(x, t);
    for (std::size_t k = 0; k < x.size(); ++k) EXPECT_NEAR(s[k], -x[k] / h, 1e-14 * std::abs(x[k] / h));
  }
}

TEST(TuckerNet, RepresentsGaussianScores) {
  const checks::CheckResult r = checks::representability(3, 30);
  EXPECT_TRUE(r.pass) << r.value;
  EXPECT_LE(r.value, 1e-8);
}

TEST(TuckerNet, LinearCoreGivesExplicitLinearMap) {
  Rng rng(4);
  const NetConfig cfg = small_config();
  TuckerScoreNet net = random_net(cfg, rng, false);
  const Matrix b = test::random_matrix(4, 4, rng);
  net.set_core_function([b](const Vector& s, double) -> Vector { return b * s; });
  const double t = 0.7;
  const Matrix u = kron_all(std::vector<Matrix>{net.frame(0), net.frame(1)});
  const Vector w = dense_omega_t(net, t).cwiseInverse();
  const Matrix wm = w.asDiagonal();
  const Matrix m = u.transpose() * wm * u;
  // S = W (U B M^{-1} Uᵀ W − I) x
  const Matrix lin = wm * (u * b * m.ldlt().solve(u.transpose() * wm) - Matrix::Identity(20, 20));
  const DenseTensor x = sample_standard_normal(cfg.shape, rng), y = sample_standard_normal(cfg.shape, rng);
  const Vector sx = net.score(x, t).vec();
  EXPECT_LT((sx - lin * x.vec()).norm() / sx.norm(), 1e-12);
  const DenseTensor combo = 2.0 * x - 0.5 * y;
  const Vector sc = net.score(combo, t).vec();
  EXPECT_LT((sc - (2.0 * sx - 0.5 * net.score(y, t).vec())).norm() / sc.norm(), 1e-12);
}

TEST(TuckerNet, GradientsMatchFiniteDifferencesEntrywise) {
  for (bool het : {true, false}) {
    Rng rng(5);
    NetConfig cfg = small_config(InitMode::kWarm, het);
    cfg.shape = Shape{4, 3};
    TuckerScoreNet net = random_net(cfg, rng);
    std::vector<DenseTensor> xs;
    std::vector<double> ts;
    std::vector<DenseTensor> gs;
    for (int i = 0; i < 3; ++i) {
      xs.push_back(sample_standard_normal(cfg.shape, rng));
      ts.push_back(rng.uniform(0.01, 2.0));
      gs.push_back(sample_standard_normal(cfg.shape, rng));
    }
    // L = Σ_i <g_i, S(x_i, t_i)>
    auto loss = [&] {
      const auto out = net.forward(xs, ts);
      double l = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i) l += out[i].vec().dot(gs[i].vec());
      return l;
    };
    net.params().zero_grad();
    NetTape tape;
    net.forward(xs, ts, &tape);
    net.backward(tape, gs);
    const double h = 1e-6;
    for (nn::Param& p : net.params().all()) {
      const Matrix analytic = p.grad;
      double num = 0.0, den = 0.0;
      for (Eigen::Index j = 0; j < p.value.cols(); ++j)
        for (Eigen::Index i = 0; i < p.value.rows(); ++i) {
          const double saved = p.value(i, j);
          p.value(i, j) = saved + h;
          net.params().touch();
          const double up = loss();
          p.value(i, j) = saved - h;
          net.params().touch();
          const double down = loss();
          p.value(i, j) = saved;
          net.params().touch();
          const double fd = (up - down) / (2 * h);
          num += (fd - analytic(i, j)) * (fd - analytic(i, j));
          den += fd * fd;
        }
      EXPECT_LT(std::sqrt(num / std::max(den, 1e-30)), 1e-6) << p.name << " het=" << het;
    }
  }
}

TEST(TuckerNet, NetworkGradientCheck) {
  const checks::CheckResult r = checks::network_gradients(11);
  EXPECT_TRUE(r.pass) << r.value << " " << r.detail;
}

TEST(TuckerNet, ZeroOutputGradGivesZeroGradients) {
  Rng rng(6);
  TuckerScoreNet net = random_net(small_config(), rng);
  std::vector<DenseTensor> xs{sample_standard_normal(net.config().shape, rng)};
  std::vector<double> ts{0.4};
  NetTape tape;
  net.params().zero_grad();
  net.forward(xs, ts, &tape);
  net.backward(tape, std::vector<DenseTensor>{DenseTensor(net.config().shape)});
  for (const nn::Param& p : net.params().all()) EXPECT_TRUE(p.grad.isZero(0.0)) << p.name;
}

TEST(TuckerNet, FixedModeSuppressesFrameGradients) {
  Rng rng(7);
  TuckerScoreNet net = random_net(small_config(InitMode::kFixed), rng);
  std::vector<DenseTensor> xs{sample_standard_normal(net.config().shape, rng)};
  std::vector<double> ts{0.4};
  NetTape tape;
  net.params().zero_grad();
  net.forward(xs, ts, &tape);
  net.backward(tape, std::vector<DenseTensor>{sample_standard_normal(net.config().shape, rng)});
  for (const nn::Param& p : net.params().all()) {
    if (p.name[0] == 'U') {
      EXPECT_FALSE(p.trainable);
      EXPECT_TRUE(p.grad.isZero(0.0));
    } else {
      EXPECT_TRUE(p.trainable);
    }
  }
}

TEST(TuckerNet, StaleTapeRejected) {
  Rng rng(8);
  TuckerScoreNet net = random_net(small_config(), rng);
  std::vector<DenseTensor> xs{sample_standard_normal(net.config().shape, rng)};
  std::vector<double> ts{0.4};
  NetTape tape;
  net.forward(xs, ts, &tape);
  net.project_parameters();
  EXPECT_THROW(net.backward(tape, xs), ValidationError);
}

TEST(TuckerNet, ColdInitDeterministic) {
  NetConfig cfg = small_config(InitMode::kCold);
  cfg.seed = 21;
  const TuckerScoreNet a = init_net(cfg, nullptr), b = init_net(cfg, nullptr);
  for (std::size_t d = 0; d < 2; ++d) {
    EXPECT_TRUE(a.frame(d) == b.frame(d));
    EXPECT_LT(stiefel_defect(a.frame(d)), 1e-12);
  }
  cfg.seed = 22;
  EXPECT_FALSE(init_net(cfg, nullptr).frame(0) == a.frame(0));
  EXPECT_THROW(init_net(small_config(InitMode::kWarm), nullptr), ValidationError);
}

TEST(TuckerNet, WarmInitRecoversNoiselessFrames) {
  Rng rng(9);
  const std::vector<Matrix> truth{test::random_stiefel(5, 2, rng), test::random_stiefel(4, 2, rng)};
  Dataset d;
  for (int i = 0; i < 100; ++i) d.samples.push_back(multi_mode_product(sample_standard_normal(Shape{2, 2}, rng), truth));
  NetConfig cfg = small_config(InitMode::kWarm);
  cfg.sigma_max2 = 0.0;
  const TuckerScoreNet net = init_net(cfg, &d);
  for (std::size_t k = 0; k < 2; ++k) EXPECT_LE(projection_metric(net.frame(k), truth[k]), 1e-6);
  // No residual: ω starts at zero.
  for (const Vector& w : net.omega()) EXPECT_LT(w.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_GT(net.sigma_max2(), 0.0);
}

TEST(TuckerNet, WarmInitOmegaTracksSeparableNoise) {
  Rng rng(10);
  const std::vector<Matrix> truth{test::random_stiefel(6, 2, rng), test::random_stiefel(5, 2, rng)};
  Vector a(6), b(5);
  for (Eigen::Index j = 0; j < 6; ++j) a[j] = rng.uniform(0.5, 1.5);
  for (Eigen::Index j = 0; j < 5; ++j) b[j] = rng.uniform(0.5, 1.5);
  Dataset d;
  for (int i = 0; i < 4000; ++i) {
    DenseTensor x = multi_mode_product(3.0 * sample_standard_normal(Shape{2, 2}, rng), truth);
    for (std::size_t j = 0; j < 6; ++j)
      for (std::size_t k = 0; k < 5; ++k)
        x.at({j, k}) += std::sqrt(a[static_cast<Eigen::Index>(j)] * b[static_cast<Eigen::Index>(k)]) * rng.normal();
    d.samples.push_back(std::move(x));
  }
  NetConfig cfg = small_config(InitMode::kWarm);
  cfg.shape = Shape{6, 5};
  cfg.sigma_max2 = 0.0;
  const TuckerScoreNet net = init_net(cfg, &d);
  // The residual keeps (I − P) of the noise, so compare average levels only.
  const DenseTensor field = net.omega_field();
  const double mean_truth = a.mean() * b.mean();
  EXPECT_NEAR(field.vec().mean() / mean_truth, 1.0, 0.5);
  for (double v : field.values()) EXPECT_GE(v, 0.0);
}

TEST(TuckerNet, ProjectParameters) {
  Rng rng(11);
  TuckerScoreNet net = random_net(small_config(), rng);
  const Matrix u0 = net.frame(0), u1 = net.frame(1);
  net.project_parameters();
  EXPECT_LT((net.frame(0) - u0).norm(), 1e-12);
  EXPECT_LT((net.frame(1) - u1).norm(), 1e-12);

  net.set_frames({u0 + 1e-2 * test::random_matrix(5, 2, rng), u1});
  EXPECT_GT(stiefel_defect(net.frame(0)), 1e-6);
  auto w = net.omega();
  w[0][0] = -0.1;
  w[1][1] = 50.0;
  net.set_omega(w);
  net.project_parameters();
  EXPECT_LT(stiefel_defect(net.frame(0)), 1e-10);
  EXPECT_EQ(net.omega()[0][0], 0.0);
  EXPECT_EQ(net.omega()[1][1], 10.0);
}

TEST(TuckerNet, FarTimeComplementIsStationary) {
  Rng rng(12);
  for (int c = 0; c < 5; ++c) {
    const NetConfig cfg = small_config();
    const TuckerScoreNet net = random_net(cfg, rng);
    const double t = cfg.sched.T;
    const double a2 = std::exp(-t), h = -std::expm1(-t);
    const DenseTensor x = sample_standard_normal(cfg.shape, rng);
    const Matrix u = kron_all(std::vector<Matrix>{net.frame(0), net.frame(1)});
    const Matrix comp = Matrix::Identity(20, 20) - u * u.transpose();
    const Vector s = net.score(x, t).vec();
    const Vector diff = comp * (s + x.vec() / h);
    // Ω = h + O(α²) entrywise, so the complement error is O(α²)(‖x‖ + ‖Uζ‖)/h.
    const Vector zeta_part = u.transpose() * (s.cwiseProduct(dense_omega_t(net, t)) + x.vec());
    const double scale = (x.vec().norm() + zeta_part.norm()) / h;
    EXPECT_LT(diff.norm(), 20.0 * a2 * scale);
  }
}

TEST(TuckerNet, RejectsBadInputs) {
  Rng rng(13);
  const TuckerScoreNet net = random_net(small_config(), rng);
  EXPECT_THROW(net.score(sample_standard_normal(Shape{4, 5}, rng), 0.5), ValidationError);
  EXPECT_THROW(net.score(sample_standard_normal(Shape{5, 4}, rng), 0.0), ValidationError);
  EXPECT_THROW(net.score(sample_standard_normal(Shape{5, 4}, rng), 6.0), ValidationError);
  NetConfig cfg = small_config();
  cfg.ranks = {6, 2};
  EXPECT_THROW(cfg.validate(), ValidationError);
}
