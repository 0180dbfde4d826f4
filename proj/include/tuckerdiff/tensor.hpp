#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "tuckerdiff/error.hpp"

namespace tucker {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class Rng;

/// Mode dimensions (p_1, ..., p_D) of a dense tensor. Modes are 0-based in the API.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims);
  explicit Shape(std::vector<std::size_t> dims);

  std::size_t order() const noexcept { return dims_.size(); }
  std::size_t operator[](std::size_t d) const { return dims_[d]; }
  std::size_t total() const noexcept { return total_; }
  const std::vector<std::size_t>& dims() const noexcept { return dims_; }

  /// Product of the dimensions strictly before / after mode d.
  std::size_t left(std::size_t d) const;
  std::size_t right(std::size_t d) const;

  Shape with_dim(std::size_t d, std::size_t value) const;

  bool operator==(const Shape& other) const noexcept { return dims_ == other.dims_; }
  bool operator!=(const Shape& other) const noexcept { return !(*this == other); }

 private:
  std::vector<std::size_t> dims_;
  std::size_t total_ = 0;
};

std::string to_string(const Shape& shape);

/// Row-major (last index fastest) multi-way array of doubles. vec(x) is the
/// flat data buffer, so the Kronecker form of a multi-mode product
/// x ×_1 A_1 ... ×_D A_D is (A_1 ⊗ ... ⊗ A_D) vec(x); see kron_all().
class DenseTensor {
 public:
  DenseTensor() = default;
  explicit DenseTensor(Shape shape, double fill = 0.0);
  DenseTensor(Shape shape, std::vector<double> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t order() const noexcept { return shape_.order(); }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  double at(std::initializer_list<std::size_t> index) const;
  double& at(std::initializer_list<std::size_t> index);

  /// Zero-copy view of vec(x) as an Eigen column vector.
  Eigen::Map<const Vector> vec() const { return {data_.data(), static_cast<Eigen::Index>(data_.size())}; }
  Eigen::Map<Vector> vec() { return {data_.data(), static_cast<Eigen::Index>(data_.size())}; }

  DenseTensor& operator+=(const DenseTensor& other);
  DenseTensor& operator-=(const DenseTensor& other);
  DenseTensor& operator*=(double s);

  bool all_finite() const noexcept;

  bool operator==(const DenseTensor& other) const noexcept {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  std::size_t offset(std::initializer_list<std::size_t> index) const;

  Shape shape_;
  std::vector<double> data_;
};

DenseTensor operator+(DenseTensor a, const DenseTensor& b);
DenseTensor operator-(DenseTensor a, const DenseTensor& b);
DenseTensor operator*(double s, DenseTensor a);

/// Tensor with the given shape holding a copy of v's entries.
DenseTensor from_vec(const Vector& v, const Shape& shape);

/// p_d × (p / p_d) matrix whose columns enumerate the remaining modes in
/// row-major order.
Matrix mode_unfold(const DenseTensor& x, std::size_t d);
DenseTensor mode_fold(const Matrix& m, std::size_t d, const Shape& shape);

/// x ×_d m for m of size q × p_d.
DenseTensor mode_product(const DenseTensor& x, const Matrix& m, std::size_t d);

/// x ×_1 mats[0] ×_2 ... ×_D mats[D-1], applied in mode order.
DenseTensor multi_mode_product(const DenseTensor& x, std::span<const Matrix> mats);

/// x ×_1 mats[0]^T ... ×_D mats[D-1]^T; the Tucker encoding step.
DenseTensor multi_mode_product_t(const DenseTensor& x, std::span<const Matrix> mats);

/// x ×_k mats[k] for every mode k except `skip`.
DenseTensor multi_mode_product_except(const DenseTensor& x, std::span<const Matrix> mats,
                                      std::size_t skip, bool transpose);

/// A_1 ⊗ A_2 ⊗ ... ⊗ A_D; the matrix of multi_mode_product under row-major vec.
Matrix kron_all(std::span<const Matrix> mats);

DenseTensor elementwise_div(const DenseTensor& x, const DenseTensor& y);
DenseTensor elementwise_mul(const DenseTensor& x, const DenseTensor& y);

double frobenius_norm(const DenseTensor& x);
double squared_norm(const DenseTensor& x);

DenseTensor sample_standard_normal(const Shape& shape, Rng& rng);

}  // namespace tucker
