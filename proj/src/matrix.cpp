#include "cyclecap/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cyclecap {

namespace {

void require_same(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ContractViolation(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                            std::to_string(b.cols()));
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, Vector data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(data_.size() == rows_ * cols_, "Matrix: data length != rows*cols");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    require(r.size() == cols_, "Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::row_vector(std::span<const double> v) {
  return Matrix(1, v.size(), Vector(v.begin(), v.end()));
}

Matrix Matrix::col_vector(std::span<const double> v) {
  return Matrix(v.size(), 1, Vector(v.begin(), v.end()));
}

void Matrix::fill(double v) {
  for (auto& x : data_) x = v;
}

bool Matrix::all_finite() const {
  for (double x : data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Matrix& Matrix::operator+=(const Matrix& o) {
  require_same(*this, o, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& o) {
  require_same(*this, o, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (auto& x : data_) x *= s;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Matrix out(a.rows(), b.cols());
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double* o = &out(i, 0);
    for (std::size_t p = 0; p < k; ++p) {
      const double s = a(i, p);
      if (s == 0.0) continue;
      const double* br = &b(p, 0);
      for (std::size_t j = 0; j < m; ++j) o[j] += s * br[j];
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  Matrix out(a.cols(), b.cols());
  accumulate_tn(a, b, out);
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), "matmul_nt: inner dimensions differ");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
  return out;
}

void axpy(double scale, const Matrix& src, Matrix& dst) {
  require_same(src, dst, "axpy");
  axpy(scale, src.values(), dst.values());
}

void accumulate_tn(const Matrix& a, const Matrix& b, Matrix& dst) {
  require(a.rows() == b.rows(), "accumulate_tn: row counts differ");
  require(dst.rows() == a.cols() && dst.cols() == b.cols(), "accumulate_tn: bad destination shape");
  const std::size_t k = a.rows(), n = a.cols(), m = b.cols();
  for (std::size_t p = 0; p < k; ++p) {
    const double* br = &b(p, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const double s = a(p, i);
      if (s == 0.0) continue;
      double* o = &dst(i, 0);
      for (std::size_t j = 0; j < m; ++j) o[j] += s * br[j];
    }
  }
}

Vector vecmat(std::span<const double> v, const Matrix& m) {
  require(v.size() == m.rows(), "vecmat: dimension mismatch");
  Vector out(m.cols(), 0.0);
  for (std::size_t p = 0; p < v.size(); ++p) {
    if (v[p] == 0.0) continue;
    axpy(v[p], m.row(p), out);
  }
  return out;
}

Vector matvec(const Matrix& m, std::span<const double> v) {
  require(v.size() == m.cols(), "matvec: dimension mismatch");
  Vector out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = dot(m.row(r), v);
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "dot: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void axpy(double scale, std::span<const double> src, std::span<double> dst) {
  require(src.size() == dst.size(), "axpy: dimension mismatch");
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += scale * src[i];
}

Matrix hconcat(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), "hconcat: row counts differ");
  Matrix out(a.rows(), a.cols() + b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto o = out.row(r);
    std::copy(a.row(r).begin(), a.row(r).end(), o.begin());
    std::copy(b.row(r).begin(), b.row(r).end(), o.begin() + static_cast<std::ptrdiff_t>(a.cols()));
  }
  return out;
}

Vector column_sums(const Matrix& m) {
  Vector s(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) axpy(1.0, m.row(r), s);
  return s;
}

}  // namespace cyclecap
