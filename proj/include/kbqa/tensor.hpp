#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace kbqa {

// Row-major dense matrix of doubles. Vectors are plain std::vector<double>.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

// y += M x
inline void gemv_add(const Matrix& m, std::span<const double> x, std::span<double> y) {
  assert(m.cols() == x.size() && m.rows() == y.size());
  for (std::size_t r = 0; r < m.rows(); ++r) y[r] += dot(m.row(r), x);
}

// y += M^T x
inline void gemv_t_add(const Matrix& m, std::span<const double> x, std::span<double> y) {
  assert(m.rows() == x.size() && m.cols() == y.size());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double xr = x[r];
    if (xr == 0.0) continue;
    const auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) y[c] += xr * row[c];
  }
}

// M += a b^T
inline void outer_add(Matrix& m, std::span<const double> a, std::span<const double> b) {
  assert(m.rows() == a.size() && m.cols() == b.size());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double ar = a[r];
    if (ar == 0.0) continue;
    auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += ar * b[c];
  }
}

// y += s x
inline void axpy(double s, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += s * x[i];
}

}  // namespace kbqa
