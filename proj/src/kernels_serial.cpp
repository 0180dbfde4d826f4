#include "tuckerdiff/kernels.hpp"

namespace tucker::kernels::serial {

void mode_product(const ModeProductArgs& a) {
  const Matrix& m = *a.m;
  const std::size_t q = static_cast<std::size_t>(m.rows());
  for (std::size_t l = 0; l < a.left; ++l) {
    for (std::size_t row = 0; row < q; ++row) {
      double* out = a.y.data() + (l * q + row) * a.right;
      for (std::size_t r = 0; r < a.right; ++r) out[r] = 0.0;
      for (std::size_t j = 0; j < a.pd; ++j) {
        const double w = m(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(j));
        const double* in = a.x.data() + (l * a.pd + j) * a.right;
        for (std::size_t r = 0; r < a.right; ++r) out[r] += w * in[r];
      }
    }
  }
}

Matrix mode_gram(const ModeGramArgs& a) {
  const Shape& shape = a.samples.front().shape();
  const std::size_t pd = shape[a.d];
  const std::size_t left = shape.left(a.d);
  const std::size_t right = shape.right(a.d);
  Matrix g = Matrix::Zero(static_cast<Eigen::Index>(pd), static_cast<Eigen::Index>(pd));
  for (std::size_t j = 0; j < pd; ++j) {
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

}  // namespace tucker::kernels::serial
