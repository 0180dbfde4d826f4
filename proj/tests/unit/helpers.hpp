#pragma once

#include <Eigen/QR>
#include <Eigen/SVD>

#include "tuckerdiff/dataset.hpp"
#include "tuckerdiff/rng.hpp"
#include "tuckerdiff/tensor.hpp"

namespace tucker::test {

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  return m;
}

// Eigen's Householder QR; independent of the library's own orthonormalization.
inline Matrix random_stiefel(Eigen::Index p, Eigen::Index r, Rng& rng) {
  Eigen::HouseholderQR<Matrix> qr(random_matrix(p, r, rng));
  return qr.householderQ() * Matrix::Identity(p, r);
}

// Projector onto the column space, computed by SVD.
inline Matrix svd_projector(const Matrix& m, double rel_tol = 1e-12) {
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU);
  const double cutoff = rel_tol * svd.singularValues()(0);
  Eigen::Index rank = 0;
  while (rank < svd.singularValues().size() && svd.singularValues()(rank) > cutoff) ++rank;
  const Matrix u = svd.matrixU().leftCols(rank);
  return u * u.transpose();
}

inline double rel_err(const Matrix& a, const Matrix& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

inline double rel_err(const DenseTensor& a, const DenseTensor& b) {
  return (a.vec() - b.vec()).norm() / std::max(b.vec().norm(), 1e-300);
}

// Row-major multi-index of flat offset i.
inline std::vector<std::size_t> unravel(std::size_t i, const Shape& s) {
  std::vector<std::size_t> idx(s.order());
  for (std::size_t d = s.order(); d-- > 0;) {
    idx[d] = i % s[d];
    i /= s[d];
  }
  return idx;
}

inline std::size_t ravel(const std::vector<std::size_t>& idx, const Shape& s) {
  std::size_t off = 0;
  for (std::size_t d = 0; d < s.order(); ++d) off = off * s[d] + idx[d];
  return off;
}

inline Dataset random_dataset(const Shape& shape, std::size_t n, Rng& rng) {
  Dataset d;
  for (std::size_t i = 0; i < n; ++i) d.samples.push_back(sample_standard_normal(shape, rng));
  return d;
}

}  // namespace tucker::test
