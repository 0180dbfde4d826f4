#pragma once

#include <cstddef>
#include <vector>

#include "tuckerdiff/dataset.hpp"
#include "tuckerdiff/tensor.hpp"

namespace tucker {

/// One orthonormal frame per mode; frame d is p_d × r_d.
struct TuckerBasis {
  std::vector<Matrix> frames;

  std::size_t order() const noexcept { return frames.size(); }
  std::vector<std::size_t> ranks() const;
  Shape core_shape() const;
  std::size_t core_size() const;
  /// A = U_1 ⊗ ... ⊗ U_D, the p × r matrix acting on row-major vec(core).
  Matrix kron() const;
};

/// ‖UᵀU − I‖_F.
double stiefel_defect(const Matrix& u);

/// Orthonormal basis of span(m) via Householder QR. Throws NumericalError
/// when m is (numerically) rank deficient.
Matrix qr_orthonormalize(const Matrix& m);

/// QR retraction onto the Stiefel manifold with the sign of each column
/// fixed so that diag(R) > 0; this makes it the identity on orthonormal input.
Matrix retract_to_stiefel(const Matrix& m);

struct SymmetricEigen {
  Vector values;   // descending
  Matrix vectors;  // column k pairs with values[k]
};

/// Cyclic Jacobi eigensolver for symmetric matrices.
SymmetricEigen symmetric_eigen(const Matrix& a, double tol = 1e-14, int max_sweeps = 100);

/// Eigenvectors of the r largest eigenvalues.
Matrix top_eigenvectors(const Matrix& a, std::size_t r);

/// Scaled projection metric (2r)^{-1/2} ‖U Uᵀ − V Vᵀ‖_F, in [0, 1].
double projection_metric(const Matrix& u, const Matrix& v);

struct HooiOptions {
  int max_iters = 20;
  double tol = 1e-8;
};

struct HooiResult {
  TuckerBasis basis;
  int iterations = 0;
  double last_change = 0.0;
  bool converged = false;
  /// Σ_i ‖X_i ×_d U_dᵀ‖² after HOSVD init (index 0) and after each iteration.
  std::vector<double> energy;
};

/// Per-mode top-r_d eigenvectors of the pooled mode-d second-moment matrix.
TuckerBasis hosvd(const Dataset& data, const std::vector<std::size_t>& ranks);

/// Higher-order orthogonal iteration, initialized by hosvd(). Stops when the
/// largest per-mode projection-metric change drops below tol.
HooiResult hooi(const Dataset& data, const std::vector<std::size_t>& ranks,
                const HooiOptions& options = {});

}  // namespace tucker
