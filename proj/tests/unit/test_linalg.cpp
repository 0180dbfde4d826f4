#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include "helpers.hpp"
#include "tuckerdiff/error.hpp"
#include "tuckerdiff/linalg.hpp"

using namespace tucker;
using test::random_matrix;
using test::random_stiefel;

namespace {

Dataset noiseless_tucker_data(const std::vector<Matrix>& frames, std::size_t n, Rng& rng) {
  Shape core;
  std::vector<std::size_t> r;
  for (const Matrix& f : frames) r.push_back(static_cast<std::size_t>(f.cols()));
  Dataset d;
  for (std::size_t i = 0; i < n; ++i) d.samples.push_back(multi_mode_product(sample_standard_normal(Shape(r), rng), frames));
  return d;
}

}  // namespace

TEST(Linalg, QrOfOrthonormalKeepsSpan) {
  Rng rng(1);
  const Matrix u = random_stiefel(7, 3, rng);
  const Matrix q = qr_orthonormalize(u);
  EXPECT_LT(projection_metric(q, u), 1e-14);
  EXPECT_LT(stiefel_defect(q), 1e-13);
}

TEST(Linalg, QrAxisAligned) {
  Matrix m(3, 2);
  m << 2, 0, 0, 3, 0, 0;
  const Matrix q = qr_orthonormalize(m);
  EXPECT_NEAR(std::abs(q(0, 0)), 1.0, 1e-15);
  EXPECT_NEAR(std::abs(q(1, 1)), 1.0, 1e-15);
  EXPECT_NEAR(q.col(0).tail(2).norm() + q.col(1).tail(1).norm() + std::abs(q(0, 1)), 0.0, 1e-15);
}

TEST(Linalg, QrProjectorMatchesSvdOracle) {
  Rng rng(2);
  for (int k = 0; k < 20; ++k) {
    const Matrix m = random_matrix(8, 3, rng);
    const Matrix q = qr_orthonormalize(m);
    EXPECT_LT((q * q.transpose() - test::svd_projector(m)).norm(), 1e-10);
  }
  EXPECT_THROW(qr_orthonormalize(Matrix::Zero(4, 2)), NumericalError);
  EXPECT_THROW(qr_orthonormalize(Matrix::Ones(2, 3)), ValidationError);
}

TEST(Linalg, JacobiEigenMatchesEigen) {
  Rng rng(3);
  for (int n : {1, 2, 5, 12, 30}) {
    const Matrix g = random_matrix(n, n, rng);
    const Matrix a = g * g.transpose() + 0.1 * Matrix::Identity(n, n);
    const SymmetricEigen e = symmetric_eigen(a);
    Eigen::SelfAdjointEigenSolver<Matrix> ref(a);
    const Vector ref_desc = ref.eigenvalues().reverse();
    EXPECT_LT((e.values - ref_desc).norm() / ref_desc.norm(), 1e-12);
    for (Eigen::Index k = 1; k < n; ++k) EXPECT_GE(e.values[k - 1], e.values[k]);
    EXPECT_LT((e.vectors * e.values.asDiagonal() * e.vectors.transpose() - a).norm() / a.norm(), 1e-12);
    EXPECT_LT(stiefel_defect(e.vectors), 1e-12);
  }
}

TEST(Linalg, ProjectionMetricEndpoints) {
  Rng rng(4);
  const Matrix u = random_stiefel(6, 2, rng);
  EXPECT_EQ(projection_metric(u, u), 0.0);
  const Matrix e = Matrix::Identity(6, 6);
  EXPECT_NEAR(projection_metric(e.leftCols(3), e.middleCols(3, 3)), 1.0, 1e-15);
  const Matrix q = random_stiefel(2, 2, rng);
  EXPECT_LT(projection_metric(u, u * q), 1e-12);
  const Matrix v = random_stiefel(6, 2, rng);
  EXPECT_EQ(projection_metric(u, v), projection_metric(v, u));
  EXPECT_NEAR(projection_metric(u * q, v), projection_metric(u, v), 1e-12);
  const double d = projection_metric(u, v);
  EXPECT_GE(d, 0.0);
  EXPECT_LE(d, 1.0);
}

TEST(Linalg, RetractionProperties) {
  Rng rng(5);
  const Matrix u = random_stiefel(9, 3, rng);
  EXPECT_LT(projection_metric(retract_to_stiefel(u), u), 1e-14);
  for (int k = 0; k < 10; ++k) {
    const Matrix noisy = u + 1e-3 * random_matrix(9, 3, rng);
    const Matrix r = retract_to_stiefel(noisy);
    EXPECT_LT(stiefel_defect(r), 1e-12);
    // span of the perturbed input, by SVD, vs the retraction's span
    EXPECT_LT((r * r.transpose() - test::svd_projector(noisy)).norm(), 1e-10);
    EXPECT_LT(projection_metric(r, u), 5e-3);
    const Matrix rr = retract_to_stiefel(r);
    EXPECT_LT((rr * rr.transpose() - r * r.transpose()).norm(), 1e-12);
  }
}

TEST(Linalg, HooiRecoversNoiselessFrames) {
  Rng rng(6);
  const std::vector<Matrix> frames{random_stiefel(8, 2, rng), random_stiefel(7, 2, rng)};
  const Dataset data = noiseless_tucker_data(frames, 200, rng);
  const HooiResult res = hooi(data, {2, 2});
  for (std::size_t d = 0; d < 2; ++d) {
    EXPECT_LE(projection_metric(res.basis.frames[d], frames[d]), 1e-6);
    EXPECT_LT(stiefel_defect(res.basis.frames[d]), 1e-10);
  }
  // Already at the HOSVD fixed point: one iteration, no subspace change.
  EXPECT_EQ(res.iterations, 1);
  EXPECT_LT(res.last_change, 1e-8);
  EXPECT_TRUE(res.converged);
}

TEST(Linalg, HooiEnergyNonDecreasing) {
  Rng rng(7);
  const std::vector<Matrix> frames{random_stiefel(6, 2, rng), random_stiefel(5, 2, rng), random_stiefel(4, 2, rng)};
  Dataset data = noiseless_tucker_data(frames, 100, rng);
  for (DenseTensor& x : data.samples) x += sample_standard_normal(x.shape(), rng);
  const HooiResult res = hooi(data, {2, 2, 2});
  ASSERT_GE(res.energy.size(), 2u);
  for (std::size_t k = 1; k < res.energy.size(); ++k) EXPECT_GE(res.energy[k], res.energy[k - 1] * (1 - 1e-12));
  for (const Matrix& f : res.basis.frames) EXPECT_LT(stiefel_defect(f), 1e-10);
}

TEST(Linalg, HooiRejectsBadRanks) {
  Rng rng(8);
  const Dataset data = test::random_dataset(Shape{4, 3}, 10, rng);
  EXPECT_THROW(hooi(data, {5, 1}), ValidationError);
  EXPECT_THROW(hooi(data, {2}), ValidationError);
  EXPECT_THROW(hooi(Dataset{}, {1, 1}), ValidationError);
}

TEST(Linalg, TuckerBasisKron) {
  Rng rng(9);
  TuckerBasis b{{random_stiefel(4, 2, rng), random_stiefel(3, 1, rng)}};
  EXPECT_EQ(b.ranks(), (std::vector<std::size_t>{2, 1}));
  EXPECT_EQ(b.core_size(), 2u);
  EXPECT_LT((b.kron().transpose() * b.kron() - Matrix::Identity(2, 2)).norm(), 1e-14);
}
