#include "neptune/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "neptune/errors.hpp"
#include "neptune/kernels.hpp"

namespace neptune {

void throw_dim_mismatch(const char* where, std::size_t expected, std::size_t actual) {
  throw ContractViolation(std::string(where) + ": dimension mismatch (expected " +
                          std::to_string(expected) + ", got " + std::to_string(actual) + ")");
}

void Vector::fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

Matrix::Matrix(std::initializer_list<std::initializer_list<Real>> rows)
    : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0) {
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    require_dim("Matrix", cols_, r.size());
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void Matrix::fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

Tensor3::Tensor3(std::size_t n1, std::size_t n2, std::size_t n3, std::vector<Real> values)
    : dims_{n1, n2, n3}, data_(std::move(values)) {
  require_dim("Tensor3", n1 * n2 * n3, data_.size());
}

std::size_t Tensor3::dim(int mode) const {
  if (mode < 1 || mode > 3) {
    throw ContractViolation("Tensor3: mode must be 1, 2 or 3, got " + std::to_string(mode));
  }
  return dims_[static_cast<std::size_t>(mode - 1)];
}

void Tensor3::fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

Matrix mode_n_vec_product(const Tensor3& t, std::span<const Real> v, int mode) {
  require_dim("mode_n_vec_product", t.dim(mode), v.size());
  const auto& k = kernels::active();
  const auto [n1, n2, n3] = t.dims();
  switch (mode) {
    case 1: {
      // t viewed as n1 x (n2*n3): out = t^T v
      Matrix out(n2, n3);
      k.gemv_t(t.data(), n1, n2 * n3, v.data(), out.data());
      return out;
    }
    case 2: {
      Matrix out(n1, n3);
      for (std::size_t i = 0; i < n1; ++i) {
        k.gemv_t(t.data() + i * n2 * n3, n2, n3, v.data(), out.data() + i * n3);
      }
      return out;
    }
    default: {
      // t viewed as (n1*n2) x n3: out = t v
      Matrix out(n1, n2);
      k.gemv(t.data(), n1 * n2, n3, v.data(), out.data());
      return out;
    }
  }
}

Tensor3 mode_n_mat_product(const Tensor3& t, const Matrix& m, int mode) {
  require_dim("mode_n_mat_product", t.dim(mode), m.cols());
  const auto& k = kernels::active();
  const auto [n1, n2, n3] = t.dims();
  const std::size_t out_rows = m.rows();
  switch (mode) {
    case 1: {
      Tensor3 out(out_rows, n2, n3);
      for (std::size_t r = 0; r < out_rows; ++r) {
        k.gemv_t(t.data(), n1, n2 * n3, m.row(r).data(), out.data() + r * n2 * n3);
      }
      return out;
    }
    case 2: {
      Tensor3 out(n1, out_rows, n3);
      for (std::size_t i = 0; i < n1; ++i) {
        for (std::size_t r = 0; r < out_rows; ++r) {
          k.gemv_t(t.data() + i * n2 * n3, n2, n3, m.row(r).data(), &out(i, r, 0));
        }
      }
      return out;
    }
    default: {
      Tensor3 out(n1, n2, out_rows);
      for (std::size_t ij = 0; ij < n1 * n2; ++ij) {
        k.gemv(m.data(), out_rows, n3, t.data() + ij * n3, out.data() + ij * out_rows);
      }
      return out;
    }
  }
}

Vector matvec_rows(const Matrix& m, std::span<const Real> v) {
  require_dim("matvec_rows", m.cols(), v.size());
  Vector out(m.rows());
  kernels::active().gemv(m.data(), m.rows(), m.cols(), v.data(), out.data());
  return out;
}

Real dot(std::span<const Real> a, std::span<const Real> b) {
  require_dim("dot", a.size(), b.size());
  return kernels::active().dot(a.data(), b.data(), a.size());
}

bool all_finite(std::span<const Real> values) {
  return std::all_of(values.begin(), values.end(), [](Real x) { return std::isfinite(x); });
}

}  // namespace neptune
