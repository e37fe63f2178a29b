#pragma once

#include <span>

#include "cyclecap/matrix.hpp"

namespace cyclecap {

// Probability clamp used wherever a log of a sigmoid/softmax output is taken.
inline constexpr double kProbEpsilon = 1e-7;
// Below this norm a vector is treated as zero by cosine_sim.
inline constexpr double kNormFloor = 1e-12;

double sigmoid(double x);

// Max-subtracted softmax. Throws ContractViolation on empty input.
Vector softmax(std::span<const double> logits);
// Given y = softmax(x) and dL/dy, returns dL/dx.
Vector softmax_backward(std::span<const double> y, std::span<const double> dy);
// In-place row-wise softmax / backward for attention maps.
void softmax_rows(Matrix& m);
Matrix softmax_rows_backward(const Matrix& y, const Matrix& dy);

// a·b / (|a||b|) clamped to [-1, 1]; 0 when either norm is below kNormFloor.
double cosine_sim(std::span<const double> a, std::span<const double> b);

struct CosineGrad {
  double value = 0.0;
  Vector d_a;
  Vector d_b;
};
// Cosine similarity and its gradient w.r.t. both arguments (zero gradient in
// the near-zero-norm convention).
CosineGrad cosine_sim_grad(std::span<const double> a, std::span<const double> b);

// log(clamp(p, eps, 1-eps)); p must lie in [0,1] up to 1e-9 slack.
double clamped_log(double p);
// d/dp of clamped_log; zero where the clamp is active.
double clamped_log_derivative(double p);

}  // namespace cyclecap
