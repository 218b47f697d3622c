#pragma once

// Dense real vectors, row-major matrices and 3-mode tensors, plus the n-mode
// products used by every scoring function.
//
// Tensor3 layout: entry (i, j, l) of an n1 x n2 x n3 tensor lives at
// data[(i * n2 + j) * n3 + l], i.e. mode 1 varies slowest and mode 3 fastest.
// Mode numbers in this API are 1-based.

#include <array>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace neptune {

using Real = double;

class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t len, Real fill = 0.0) : data_(len, fill) {}
  Vector(std::initializer_list<Real> values) : data_(values) {}
  explicit Vector(std::vector<Real> values) : data_(std::move(values)) {}

  std::size_t size() const noexcept { return data_.size(); }
  Real& operator[](std::size_t i) noexcept { return data_[i]; }
  Real operator[](std::size_t i) const noexcept { return data_[i]; }

  Real* data() noexcept { return data_.data(); }
  const Real* data() const noexcept { return data_.data(); }
  std::span<Real> span() noexcept { return data_; }
  std::span<const Real> span() const noexcept { return data_; }
  const std::vector<Real>& values() const noexcept { return data_; }

  void fill(Real v);

  friend bool operator==(const Vector&, const Vector&) = default;

 private:
  std::vector<Real> data_;
};

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, Real fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  /// Row-major nested initializer; all rows must have equal length.
  Matrix(std::initializer_list<std::initializer_list<Real>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  Real& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  Real operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<Real> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const Real> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  Real* data() noexcept { return data_.data(); }
  const Real* data() const noexcept { return data_.data(); }
  std::span<Real> span() noexcept { return data_; }
  std::span<const Real> span() const noexcept { return data_; }

  void fill(Real v);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Real> data_;
};

class Tensor3 {
 public:
  using Dims = std::array<std::size_t, 3>;

  Tensor3() = default;
  Tensor3(std::size_t n1, std::size_t n2, std::size_t n3, Real fill = 0.0)
      : dims_{n1, n2, n3}, data_(n1 * n2 * n3, fill) {}
  /// Takes ownership of `values` in layout order; size must equal n1*n2*n3.
  Tensor3(std::size_t n1, std::size_t n2, std::size_t n3, std::vector<Real> values);

  const Dims& dims() const noexcept { return dims_; }
  /// Extent of a 1-based mode.
  std::size_t dim(int mode) const;
  std::size_t size() const noexcept { return data_.size(); }

  std::size_t offset(std::size_t i, std::size_t j, std::size_t l) const noexcept {
    return (i * dims_[1] + j) * dims_[2] + l;
  }
  Real& operator()(std::size_t i, std::size_t j, std::size_t l) noexcept {
    return data_[offset(i, j, l)];
  }
  Real operator()(std::size_t i, std::size_t j, std::size_t l) const noexcept {
    return data_[offset(i, j, l)];
  }

  Real* data() noexcept { return data_.data(); }
  const Real* data() const noexcept { return data_.data(); }
  std::span<Real> span() noexcept { return data_; }
  std::span<const Real> span() const noexcept { return data_; }

  void fill(Real v);

  friend bool operator==(const Tensor3&, const Tensor3&) = default;

 private:
  Dims dims_{0, 0, 0};
  std::vector<Real> data_;
};

/// Contract `t` with `v` along `mode`. The result keeps the other two modes
/// in ascending order: mode 1 -> n2 x n3, mode 2 -> n1 x n3, mode 3 -> n1 x n2.
Matrix mode_n_vec_product(const Tensor3& t, std::span<const Real> v, int mode);

/// Standard n-mode matrix product: the extent of `mode` becomes m.rows().
/// Requires m.cols() == t.dim(mode).
Tensor3 mode_n_mat_product(const Tensor3& t, const Matrix& m, int mode);

/// m * v.
Vector matvec_rows(const Matrix& m, std::span<const Real> v);

Real dot(std::span<const Real> a, std::span<const Real> b);

bool all_finite(std::span<const Real> values);

}  // namespace neptune
