#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "cyclecap/grad_check.hpp"
#include "cyclecap/tape.hpp"

using namespace cyclecap;

namespace {

Matrix random_matrix(SeededRng& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
  Matrix m(r, c);
  for (auto& v : m.values()) v = rng.uniform(lo, hi);
  return m;
}

// Contracts the op output with a fixed random weight so every output entry
// contributes a distinct gradient.
using Build = std::function<Var(Tape&, Var, Var)>;

double check_op(const Build& build, Matrix a0, Matrix b0, std::uint64_t seed = 1) {
  ParamStore store;
  const ParamId a = store.add("a", std::move(a0));
  const ParamId b = store.add("b", std::move(b0));
  Matrix weight;
  const LossAndGrad fn = [&](ParamStore& s) {
    Tape t;
    const Var out = build(t, t.param(s, a), t.param(s, b));
    if (weight.empty()) {
      SeededRng wr(seed);
      weight = random_matrix(wr, t.value(out).rows(), t.value(out).cols());
    }
    const Var loss = op::sum(t, op::mul(t, out, t.constant(weight)));
    t.backward(loss);
    return t.scalar(loss);
  };
  SeededRng rng(seed);
  const GradCheckResult r = grad_check(fn, store, {}, rng);
  EXPECT_TRUE(r.finite) << r.failure;
  return r.max_rel_error;
}

constexpr double kTol = 1e-6;

}  // namespace

TEST(Tape, LinearOps) {
  SeededRng rng(2);
  EXPECT_LT(check_op([](Tape& t, Var a, Var b) { return op::matmul(t, a, b); }, random_matrix(rng, 3, 4),
                     random_matrix(rng, 4, 2)),
            kTol);
  EXPECT_LT(check_op([](Tape& t, Var a, Var b) { return op::matmul_nt(t, a, b); }, random_matrix(rng, 3, 4),
                     random_matrix(rng, 5, 4)),
            kTol);
  EXPECT_LT(check_op([](Tape& t, Var a, Var b) { return op::sub(t, op::add(t, a, b), op::scale(t, b, 3.0)); },
                     random_matrix(rng, 2, 3), random_matrix(rng, 2, 3)),
            kTol);
  EXPECT_LT(check_op([](Tape& t, Var a, Var b) { return op::add_row(t, a, b); }, random_matrix(rng, 4, 3),
                     random_matrix(rng, 1, 3)),
            kTol);
  EXPECT_LT(check_op([](Tape& t, Var a, Var b) { return op::mul(t, a, op::affine(t, b, -2.0, 0.5)); },
                     random_matrix(rng, 2, 3), random_matrix(rng, 2, 3)),
            kTol);
}

TEST(Tape, Nonlinearities) {
  SeededRng rng(3);
  EXPECT_LT(check_op([](Tape& t, Var a, Var b) { return op::add(t, op::sigmoid(t, a), op::tanh(t, b)); },
                     random_matrix(rng, 3, 3, -3, 3), random_matrix(rng, 3, 3, -3, 3)),
            kTol);
  EXPECT_LT(check_op([](Tape& t, Var a, Var b) { return op::mul(t, op::relu(t, a), b); },
                     random_matrix(rng, 3, 3, 0.1, 1.0), random_matrix(rng, 3, 3)),
            kTol);
  EXPECT_LT(check_op([](Tape& t, Var a, Var b) { return op::softmax_rows(t, op::add(t, a, b)); },
                     random_matrix(rng, 3, 5, -2, 2), random_matrix(rng, 3, 5)),
            kTol);
  EXPECT_LT(check_op([](Tape& t, Var a, Var) { return op::clamped_log(t, op::sigmoid(t, a)); },
                     random_matrix(rng, 2, 4, -3, 3), Matrix(1, 1)),
            kTol);
}

TEST(Tape, Reshaping) {
  SeededRng rng(4);
  EXPECT_LT(check_op([](Tape& t, Var a, Var b) { return op::hconcat(t, a, b); }, random_matrix(rng, 3, 2),
                     random_matrix(rng, 3, 4)),
            kTol);
  EXPECT_LT(check_op(
                [](Tape& t, Var a, Var b) {
                  const Var parts[] = {a, b, a};
                  return op::vconcat(t, parts);
                },
                random_matrix(rng, 2, 3), random_matrix(rng, 1, 3)),
            kTol);
  EXPECT_LT(check_op(
                [](Tape& t, Var a, Var b) {
                  const std::size_t idx[] = {2, 0, 2};
                  return op::add(t, op::rows(t, a, idx), op::cols(t, b, 1, 2));
                },
                random_matrix(rng, 3, 2), random_matrix(rng, 3, 4)),
            kTol);
  EXPECT_LT(check_op([](Tape& t, Var a, Var b) { return op::add(t, op::mean_rows(t, a), op::max_rows(t, b)); },
                     random_matrix(rng, 4, 3), random_matrix(rng, 5, 3)),
            kTol);
  EXPECT_LT(check_op([](Tape& t, Var a, Var b) { return op::scale_by(t, a, op::mean(t, b)); },
                     random_matrix(rng, 2, 3), random_matrix(rng, 3, 3)),
            kTol);
}

TEST(Tape, CosineAndCrossEntropy) {
  SeededRng rng(5);
  EXPECT_LT(check_op([](Tape& t, Var a, Var b) { return op::cosine_rows(t, a, b); }, random_matrix(rng, 3, 4),
                     random_matrix(rng, 2, 4)),
            kTol);
  EXPECT_LT(check_op(
                [](Tape& t, Var a, Var b) {
                  const std::size_t target[] = {1, 4, 0};
                  return op::cross_entropy_rows(t, op::matmul(t, a, b), target);
                },
                random_matrix(rng, 3, 4), random_matrix(rng, 4, 5)),
            kTol);
}

TEST(Tape, CrossEntropyOfUniformLogitsIsLogV) {
  Tape t;
  const std::size_t target[] = {3, 5};
  const Var loss = op::cross_entropy_rows(t, t.constant(Matrix(2, 8)), target);
  EXPECT_NEAR(t.scalar(loss), std::log(8.0), 1e-12);
}

TEST(Tape, SharedParamLeafAccumulates) {
  ParamStore store;
  const ParamId w = store.add("w", Matrix{{2.0}});
  Tape t;
  const Var a = t.param(store, w);
  const Var b = t.param(store, w);
  EXPECT_EQ(a.id, b.id);
  t.backward(op::mul(t, a, b));
  EXPECT_DOUBLE_EQ(store.grad(w)(0, 0), 4.0);
}
