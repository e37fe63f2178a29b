#include "cyclecap/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cyclecap {

double sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Vector softmax(std::span<const double> logits) {
  require(!logits.empty(), "softmax: empty vector");
  const double mx = *std::max_element(logits.begin(), logits.end());
  Vector out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
  return out;
}

Vector softmax_backward(std::span<const double> y, std::span<const double> dy) {
  require(y.size() == dy.size(), "softmax_backward: size mismatch");
  const double inner = dot(y, dy);
  Vector dx(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = y[i] * (dy[i] - inner);
  return dx;
}

void softmax_rows(Matrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    const Vector s = softmax(row);
    std::copy(s.begin(), s.end(), row.begin());
  }
}

Matrix softmax_rows_backward(const Matrix& y, const Matrix& dy) {
  require(y.same_shape(dy), "softmax_rows_backward: shape mismatch");
  Matrix dx(y.rows(), y.cols());
  for (std::size_t r = 0; r < y.rows(); ++r) {
    const Vector g = softmax_backward(y.row(r), dy.row(r));
    std::copy(g.begin(), g.end(), dx.row(r).begin());
  }
  return dx;
}

double cosine_sim(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "cosine_sim: dimension mismatch");
  const double na = norm(a), nb = norm(b);
  if (na < kNormFloor || nb < kNormFloor) return 0.0;
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

CosineGrad cosine_sim_grad(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "cosine_sim: dimension mismatch");
  CosineGrad g;
  g.d_a.assign(a.size(), 0.0);
  g.d_b.assign(b.size(), 0.0);
  const double na = norm(a), nb = norm(b);
  if (na < kNormFloor || nb < kNormFloor) return g;
  const double c = dot(a, b) / (na * nb);
  g.value = std::clamp(c, -1.0, 1.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    g.d_a[i] = b[i] / (na * nb) - c * a[i] / (na * na);
    g.d_b[i] = a[i] / (na * nb) - c * b[i] / (nb * nb);
  }
  return g;
}

double clamped_log(double p) {
  if (!(p >= -1e-9 && p <= 1.0 + 1e-9)) {
    throw ContractViolation("clamped_log: probability out of [0,1]: " + std::to_string(p));
  }
  return std::log(std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon));
}

double clamped_log_derivative(double p) {
  if (p < kProbEpsilon || p > 1.0 - kProbEpsilon) return 0.0;
  return 1.0 / p;
}

}  // namespace cyclecap
