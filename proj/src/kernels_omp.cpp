#include "tuckerdiff/kernels.hpp"

#include <omp.h>

namespace tucker::kernels {

namespace {
int default_threads = 0;
}

void set_max_threads(int n) {
  if (default_threads == 0) default_threads = omp_get_max_threads();
  omp_set_num_threads(n > 0 ? n : default_threads);
}

int max_threads() { return omp_get_max_threads(); }

namespace omp {

void mode_product(const ModeProductArgs& a) {
  const Matrix& m = *a.m;
  const std::ptrdiff_t q = m.rows();
  const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(a.left) * q;
  // Tiny contractions are not worth a parallel region.
  const bool parallel = a.left * static_cast<std::size_t>(q) * a.pd * a.right > 32768;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t lr = 0; lr < rows; ++lr) {
    const std::size_t l = static_cast<std::size_t>(lr / q);
    const Eigen::Index row = lr % q;
    double* out = a.y.data() + static_cast<std::size_t>(lr) * a.right;
    for (std::size_t r = 0; r < a.right; ++r) out[r] = 0.0;
    for (std::size_t j = 0; j < a.pd; ++j) {
      const double w = m(row, static_cast<Eigen::Index>(j));
      const double* in = a.x.data() + (l * a.pd + j) * a.right;
      for (std::size_t r = 0; r < a.right; ++r) out[r] += w * in[r];
    }
  }
}

Matrix mode_gram(const ModeGramArgs& a) {
  const Shape& shape = a.samples.front().shape();
  const std::size_t pd = shape[a.d];
  const std::size_t left = shape.left(a.d);
  const std::size_t right = shape.right(a.d);
  Matrix g = Matrix::Zero(static_cast<Eigen::Index>(pd), static_cast<Eigen::Index>(pd));
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(pd);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t js = 0; js < n; ++js) {
    const std::size_t j = static_cast<std::size_t>(js);
    for (std::size_t k = 0; k <= j; ++k) {
      double acc = 0.0;
      for (const DenseTensor& s : a.samples) {
        const double* x = s.data().data();
        for (std::size_t l = 0; l < left; ++l) {
          const double* xj = x + (l * pd + j) * right;
          const double* xk = x + (l * pd + k) * right;
          for (std::size_t r = 0; r < right; ++r) acc += xj[r] * xk[r];
        }
      }
      g(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = acc;
      g(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = acc;
    }
  }
  return g;
}

}  // namespace omp
}  // namespace tucker::kernels
