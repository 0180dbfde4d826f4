#include "tuckerdiff/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tuckerdiff/kernels.hpp"

namespace tucker {

const Shape& Dataset::sample_shape() const {
  if (samples.empty()) throw ValidationError("dataset is empty");
  return samples.front().shape();
}

void Dataset::validate() const {
  if (samples.empty()) throw ValidationError("dataset is empty");
  const Shape& s = samples.front().shape();
  for (std::size_t i = 1; i < samples.size(); ++i)
    if (samples[i].shape() != s)
      throw ValidationError("dataset sample " + std::to_string(i) + " has shape " +
                            to_string(samples[i].shape()) + ", expected " + to_string(s));
}

std::vector<std::size_t> TuckerBasis::ranks() const {
  std::vector<std::size_t> r;
  r.reserve(frames.size());
  for (const Matrix& f : frames) r.push_back(static_cast<std::size_t>(f.cols()));
  return r;
}

Shape TuckerBasis::core_shape() const { return Shape(ranks()); }

std::size_t TuckerBasis::core_size() const {
  std::size_t r = 1;
  for (const Matrix& f : frames) r *= static_cast<std::size_t>(f.cols());
  return r;
}

Matrix TuckerBasis::kron() const { return kron_all(frames); }

double stiefel_defect(const Matrix& u) {
  return (u.transpose() * u - Matrix::Identity(u.cols(), u.cols())).norm();
}

namespace {

// Householder QR with column signs fixed so that diag(R) >= 0.
Matrix signed_qr(const Matrix& m) {
  if (m.cols() > m.rows())
    throw ValidationError("cannot orthonormalize " + std::to_string(m.cols()) + " columns in dimension " +
                          std::to_string(m.rows()));
  Eigen::HouseholderQR<Matrix> qr(m);
  const Matrix r = qr.matrixQR().topRows(m.cols()).triangularView<Eigen::Upper>();
  const double scale = std::max(r.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  for (Eigen::Index k = 0; k < r.cols(); ++k)
    if (!(std::abs(r(k, k)) > 1e-12 * scale) || !std::isfinite(r(k, k)))
      throw NumericalError("rank-deficient frame: column " + std::to_string(k) +
                           " is numerically dependent on the preceding columns");
  Matrix q = qr.householderQ() * Matrix::Identity(m.rows(), m.cols());
  for (Eigen::Index k = 0; k < r.cols(); ++k)
    if (r(k, k) < 0.0) q.col(k) = -q.col(k);
  return q;
}

}  // namespace

Matrix qr_orthonormalize(const Matrix& m) { return signed_qr(m); }

Matrix retract_to_stiefel(const Matrix& m) { return signed_qr(m); }

SymmetricEigen symmetric_eigen(const Matrix& input, double tol, int max_sweeps) {
  const Eigen::Index n = input.rows();
  if (input.cols() != n) throw ValidationError("symmetric_eigen needs a square matrix");
  Matrix a = 0.5 * (input + input.transpose());
  Matrix v = Matrix::Identity(n, n);
  const double total = std::max(a.norm(), 1e-300);

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(off) <= tol * total) break;

    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index i, Eigen::Index j) { return a(i, i) > a(j, j); });
  SymmetricEigen out{Vector(n), Matrix(n, n)};
  for (Eigen::Index k = 0; k < n; ++k) {
    out.values(k) = a(order[static_cast<std::size_t>(k)], order[static_cast<std::size_t>(k)]);
    out.vectors.col(k) = v.col(order[static_cast<std::size_t>(k)]);
  }
  return out;
}

Matrix top_eigenvectors(const Matrix& a, std::size_t r) {
  if (r > static_cast<std::size_t>(a.rows()))
    throw ValidationError("requested " + std::to_string(r) + " eigenvectors of a " +
                          std::to_string(a.rows()) + "-dimensional matrix");
  const SymmetricEigen eig = symmetric_eigen(a);
  // Jacobi vectors are orthonormal to rounding; one retraction tightens the
  // Stiefel defect to ~1e-15.
  return retract_to_stiefel(eig.vectors.leftCols(static_cast<Eigen::Index>(r)));
}

double projection_metric(const Matrix& u, const Matrix& v) {
  if (u.rows() != v.rows() || u.cols() != v.cols())
    throw ValidationError("projection metric needs frames of equal shape");
  if (u.cols() == 0) throw ValidationError("projection metric needs rank >= 1");
  const Matrix diff = u * u.transpose() - v * v.transpose();
  return std::min(1.0, diff.norm() / std::sqrt(2.0 * static_cast<double>(u.cols())));
}

namespace {

void check_ranks(const Dataset& data, const std::vector<std::size_t>& ranks) {
  data.validate();
  const Shape& s = data.sample_shape();
  if (ranks.size() != s.order())
    throw ValidationError("need one rank per mode: got " + std::to_string(ranks.size()) + " for order " +
                          std::to_string(s.order()));
  for (std::size_t d = 0; d < ranks.size(); ++d)
    if (ranks[d] == 0 || ranks[d] > s[d])
      throw ValidationError("rank " + std::to_string(ranks[d]) + " invalid for mode " + std::to_string(d) +
                            " of dimension " + std::to_string(s[d]));
}

std::vector<DenseTensor> project_except(const Dataset& data, const TuckerBasis& basis, std::size_t d) {
  std::vector<DenseTensor> out(data.size());
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(data.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i)] =
        multi_mode_product_except(data.samples[static_cast<std::size_t>(i)], basis.frames, d, true);
  return out;
}

double projected_energy(const Dataset& data, const TuckerBasis& basis) {
  std::vector<double> e(data.size());
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(data.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    e[static_cast<std::size_t>(i)] =
        squared_norm(multi_mode_product_t(data.samples[static_cast<std::size_t>(i)], basis.frames));
  return std::accumulate(e.begin(), e.end(), 0.0);
}

}  // namespace

TuckerBasis hosvd(const Dataset& data, const std::vector<std::size_t>& ranks) {
  check_ranks(data, ranks);
  TuckerBasis basis;
  for (std::size_t d = 0; d < ranks.size(); ++d) {
    const Matrix g = kernels::omp::mode_gram({data.samples, d});
    basis.frames.push_back(top_eigenvectors(g, ranks[d]));
  }
  return basis;
}

HooiResult hooi(const Dataset& data, const std::vector<std::size_t>& ranks, const HooiOptions& options) {
  HooiResult result;
  result.basis = hosvd(data, ranks);
  result.energy.push_back(projected_energy(data, result.basis));

  for (int it = 0; it < options.max_iters; ++it) {
    double change = 0.0;
    double energy = 0.0;
    for (std::size_t d = 0; d < ranks.size(); ++d) {
      const std::vector<DenseTensor> projected = project_except(data, result.basis, d);
      const Matrix g = kernels::omp::mode_gram({projected, d});
      const SymmetricEigen eig = symmetric_eigen(g);
      const Matrix next = retract_to_stiefel(eig.vectors.leftCols(static_cast<Eigen::Index>(ranks[d])));
      change = std::max(change, projection_metric(result.basis.frames[d], next));
      result.basis.frames[d] = next;
      energy = eig.values.head(static_cast<Eigen::Index>(ranks[d])).sum();
    }
    result.iterations = it + 1;
    result.last_change = change;
    result.energy.push_back(energy);
    if (change < options.tol) {
      result.converged = true;
      break;
    }
  }
  return result;
}

}  // namespace tucker
