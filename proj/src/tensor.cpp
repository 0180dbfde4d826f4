#include "tuckerdiff/tensor.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "tuckerdiff/kernels.hpp"
#include "tuckerdiff/rng.hpp"

namespace tucker {

Shape::Shape(std::initializer_list<std::size_t> dims) : Shape(std::vector<std::size_t>(dims)) {}

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
  if (dims_.empty()) throw ValidationError("tensor shape must have at least one mode");
  total_ = 1;
  for (std::size_t d : dims_) {
    if (d == 0) throw ValidationError("tensor dimensions must be positive");
    if (total_ > std::numeric_limits<std::size_t>::max() / d)
      throw ValidationError("tensor size overflows the address space");
    total_ *= d;
  }
}

std::size_t Shape::left(std::size_t d) const {
  std::size_t n = 1;
  for (std::size_t k = 0; k < d; ++k) n *= dims_[k];
  return n;
}

std::size_t Shape::right(std::size_t d) const {
  std::size_t n = 1;
  for (std::size_t k = d + 1; k < dims_.size(); ++k) n *= dims_[k];
  return n;
}

Shape Shape::with_dim(std::size_t d, std::size_t value) const {
  std::vector<std::size_t> dims = dims_;
  dims.at(d) = value;
  return Shape(std::move(dims));
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t d = 0; d < shape.order(); ++d) os << (d ? "," : "") << shape[d];
  os << ')';
  return os.str();
}

DenseTensor::DenseTensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_.total(), fill) {}

DenseTensor::DenseTensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_.total())
    throw ValidationError("tensor data length " + std::to_string(data_.size()) +
                          " does not match shape " + to_string(shape_));
}

std::size_t DenseTensor::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.order()) throw ValidationError("index order mismatch");
  std::size_t off = 0;
  std::size_t d = 0;
  for (std::size_t i : index) {
    if (i >= shape_[d]) throw ValidationError("index out of range");
    off = off * shape_[d] + i;
    ++d;
  }
  return off;
}

double DenseTensor::at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }
double& DenseTensor::at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }

DenseTensor& DenseTensor::operator+=(const DenseTensor& other) {
  if (shape_ != other.shape_) throw ValidationError("shape mismatch in tensor addition");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

DenseTensor& DenseTensor::operator-=(const DenseTensor& other) {
  if (shape_ != other.shape_) throw ValidationError("shape mismatch in tensor subtraction");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

DenseTensor& DenseTensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

bool DenseTensor::all_finite() const noexcept {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

DenseTensor operator+(DenseTensor a, const DenseTensor& b) { return a += b; }
DenseTensor operator-(DenseTensor a, const DenseTensor& b) { return a -= b; }
DenseTensor operator*(double s, DenseTensor a) { return a *= s; }

DenseTensor from_vec(const Vector& v, const Shape& shape) {
  if (static_cast<std::size_t>(v.size()) != shape.total())
    throw ValidationError("vector length does not match shape " + to_string(shape));
  return DenseTensor(shape, std::vector<double>(v.data(), v.data() + v.size()));
}

namespace {

void check_mode(const DenseTensor& x, std::size_t d) {
  if (d >= x.order())
    throw ValidationError("mode index " + std::to_string(d) + " out of range for order " +
                          std::to_string(x.order()));
}

}  // namespace

Matrix mode_unfold(const DenseTensor& x, std::size_t d) {
  check_mode(x, d);
  const Shape& s = x.shape();
  const std::size_t pd = s[d], left = s.left(d), right = s.right(d);
  Matrix m(static_cast<Eigen::Index>(pd), static_cast<Eigen::Index>(left * right));
  for (std::size_t l = 0; l < left; ++l)
    for (std::size_t j = 0; j < pd; ++j)
      for (std::size_t r = 0; r < right; ++r)
        m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(l * right + r)) =
            x[(l * pd + j) * right + r];
  return m;
}

DenseTensor mode_fold(const Matrix& m, std::size_t d, const Shape& shape) {
  if (d >= shape.order()) throw ValidationError("mode index out of range");
  const std::size_t pd = shape[d], left = shape.left(d), right = shape.right(d);
  if (static_cast<std::size_t>(m.rows()) != pd || static_cast<std::size_t>(m.cols()) != left * right)
    throw ValidationError("unfolded matrix does not match target shape " + to_string(shape));
  DenseTensor x(shape);
  for (std::size_t l = 0; l < left; ++l)
    for (std::size_t j = 0; j < pd; ++j)
      for (std::size_t r = 0; r < right; ++r)
        x[(l * pd + j) * right + r] =
            m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(l * right + r));
  return x;
}

DenseTensor mode_product(const DenseTensor& x, const Matrix& m, std::size_t d) {
  check_mode(x, d);
  const Shape& s = x.shape();
  if (static_cast<std::size_t>(m.cols()) != s[d])
    throw ValidationError("mode-" + std::to_string(d) + " product: matrix has " +
                          std::to_string(m.cols()) + " columns, tensor mode has " +
                          std::to_string(s[d]));
  DenseTensor y(s.with_dim(d, static_cast<std::size_t>(m.rows())));
  kernels::omp::mode_product({x.data(), s.left(d), s[d], s.right(d), &m, y.data()});
  return y;
}

DenseTensor multi_mode_product(const DenseTensor& x, std::span<const Matrix> mats) {
  if (mats.size() != x.order()) throw ValidationError("multi-mode product needs one matrix per mode");
  DenseTensor y = x;
  for (std::size_t d = 0; d < mats.size(); ++d) y = mode_product(y, mats[d], d);
  return y;
}

DenseTensor multi_mode_product_t(const DenseTensor& x, std::span<const Matrix> mats) {
  if (mats.size() != x.order()) throw ValidationError("multi-mode product needs one matrix per mode");
  DenseTensor y = x;
  for (std::size_t d = 0; d < mats.size(); ++d) y = mode_product(y, mats[d].transpose(), d);
  return y;
}

DenseTensor multi_mode_product_except(const DenseTensor& x, std::span<const Matrix> mats,
                                      std::size_t skip, bool transpose) {
  if (mats.size() != x.order()) throw ValidationError("multi-mode product needs one matrix per mode");
  DenseTensor y = x;
  for (std::size_t d = 0; d < mats.size(); ++d) {
    if (d == skip) continue;
    y = transpose ? mode_product(y, mats[d].transpose(), d) : mode_product(y, mats[d], d);
  }
  return y;
}

Matrix kron_all(std::span<const Matrix> mats) {
  if (mats.empty()) throw ValidationError("kron_all needs at least one matrix");
  Matrix k = mats[0];
  for (std::size_t d = 1; d < mats.size(); ++d) {
    const Matrix& b = mats[d];
    Matrix next(k.rows() * b.rows(), k.cols() * b.cols());
    for (Eigen::Index i = 0; i < k.rows(); ++i)
      for (Eigen::Index j = 0; j < k.cols(); ++j)
        next.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = k(i, j) * b;
    k = std::move(next);
  }
  return k;
}

DenseTensor elementwise_div(const DenseTensor& x, const DenseTensor& y) {
  if (x.shape() != y.shape()) throw ValidationError("shape mismatch in elementwise division");
  DenseTensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(y[i] > 0.0))
      throw NumericalError("elementwise division by non-positive entry " + std::to_string(y[i]) +
                           " at flat index " + std::to_string(i));
    out[i] = x[i] / y[i];
  }
  return out;
}

DenseTensor elementwise_mul(const DenseTensor& x, const DenseTensor& y) {
  if (x.shape() != y.shape()) throw ValidationError("shape mismatch in elementwise product");
  DenseTensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return out;
}

double squared_norm(const DenseTensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v * v;
  return s;
}

double frobenius_norm(const DenseTensor& x) { return std::sqrt(squared_norm(x)); }

DenseTensor sample_standard_normal(const Shape& shape, Rng& rng) {
  DenseTensor x(shape);
  for (double& v : x.data()) v = rng.normal();
  return x;
}

}  // namespace tucker
