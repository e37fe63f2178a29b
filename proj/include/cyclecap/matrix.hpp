#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "cyclecap/error.hpp"

namespace cyclecap {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles. Carries every tensor in the pipeline:
// frame features, projections, attention maps, gradients.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, Vector data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix row_vector(std::span<const double> v);
  static Matrix col_vector(std::span<const double> v);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const double& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const Vector& storage() const { return data_; }

  void fill(double v);
  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  bool all_finite() const;

  Matrix transposed() const;

  Matrix& operator+=(const Matrix& o);
  Matrix& operator-=(const Matrix& o);
  Matrix& operator*=(double s);

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);

// a (n×k) · b (k×m)
Matrix matmul(const Matrix& a, const Matrix& b);
// aᵀ (k×n)ᵀ · b (k×m) -> n×m
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a (n×k) · bᵀ (m×k)ᵀ -> n×m
Matrix matmul_nt(const Matrix& a, const Matrix& b);

// dst += scale * src, shapes must agree.
void axpy(double scale, const Matrix& src, Matrix& dst);
// dst += aᵀ·b without materialising the product; used for weight gradients.
void accumulate_tn(const Matrix& a, const Matrix& b, Matrix& dst);

// row vector (1×k) times matrix (k×m)
Vector vecmat(std::span<const double> v, const Matrix& m);
// matrix (n×k) times column vector (k)
Vector matvec(const Matrix& m, std::span<const double> v);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
void axpy(double scale, std::span<const double> src, std::span<double> dst);

// Horizontal concatenation [a | b]; row counts must agree.
Matrix hconcat(const Matrix& a, const Matrix& b);
// Column sum as 1×cols.
Vector column_sums(const Matrix& m);

}  // namespace cyclecap
