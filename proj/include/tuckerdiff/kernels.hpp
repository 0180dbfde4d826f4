#pragma once

#include <cstddef>
#include <span>

#include "tuckerdiff/tensor.hpp"

// Hot loops in two builds. serial:: is the reference kept for testing and
// benchmarking; omp:: is what the library calls. Each omp kernel assigns every
// output element to exactly one thread and accumulates it in the same order as
// the serial kernel, so results are bitwise identical for any thread count.
namespace tucker::kernels {

/// Contraction over the middle axis of x viewed as (left, pd, right):
/// y[l, a, r] = sum_j m(a, j) * x[l, j, r], y of size left * m.rows() * right.
struct ModeProductArgs {
  std::span<const double> x;
  std::size_t left = 0;
  std::size_t pd = 0;
  std::size_t right = 0;
  const Matrix* m = nullptr;
  std::span<double> y;
};

/// Mode-d Gram matrix summed over samples: G = sum_i unfold_d(X_i) unfold_d(X_i)^T.
struct ModeGramArgs {
  std::span<const DenseTensor> samples;
  std::size_t d = 0;
};

namespace serial {
void mode_product(const ModeProductArgs& args);
Matrix mode_gram(const ModeGramArgs& args);
}  // namespace serial

namespace omp {
void mode_product(const ModeProductArgs& args);
Matrix mode_gram(const ModeGramArgs& args);
}  // namespace omp

/// Caps the OpenMP worker count; 0 restores the runtime default.
void set_max_threads(int n);
int max_threads();

}  // namespace tucker::kernels
