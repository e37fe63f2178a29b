#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "cyclecap/grad_check.hpp"
#include "cyclecap/matrix.hpp"
#include "cyclecap/numerics.hpp"
#include "cyclecap/param_store.hpp"
#include "cyclecap/rng.hpp"

using namespace cyclecap;

namespace {

Matrix random_matrix(SeededRng& rng, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (auto& v : m.values()) v = rng.normal();
  return m;
}

}  // namespace

TEST(Matrix, ProductsAgreeWithTransposes) {
  SeededRng rng(3);
  const Matrix a = random_matrix(rng, 4, 5), b = random_matrix(rng, 5, 3), c = random_matrix(rng, 4, 3);
  const Matrix ab = matmul(a, b);
  EXPECT_EQ(ab.rows(), 4u);
  EXPECT_EQ(ab.cols(), 3u);
  double ref = 0.0;
  for (std::size_t k = 0; k < 5; ++k) ref += a(2, k) * b(k, 1);
  EXPECT_NEAR(ab(2, 1), ref, 1e-12);

  const Matrix tn = matmul_tn(a, c);
  const Matrix tn_ref = matmul(a.transposed(), c);
  for (std::size_t i = 0; i < tn.size(); ++i) EXPECT_NEAR(tn.values()[i], tn_ref.values()[i], 1e-12);

  const Matrix nt = matmul_nt(a, a);
  const Matrix nt_ref = matmul(a, a.transposed());
  for (std::size_t i = 0; i < nt.size(); ++i) EXPECT_NEAR(nt.values()[i], nt_ref.values()[i], 1e-12);
}

TEST(Matrix, ShapeMismatchIsContractViolation) {
  EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), ContractViolation);
  Matrix a(2, 2);
  EXPECT_THROW(a += Matrix(3, 2), ContractViolation);
}

TEST(Numerics, SoftmaxIsStableAndNormalised) {
  const Vector y = softmax(std::vector<double>{1000.0, 1000.0, -1000.0});
  EXPECT_NEAR(y[0], 0.5, 1e-15);
  EXPECT_NEAR(y[1], 0.5, 1e-15);
  EXPECT_EQ(y[2], 0.0);
  EXPECT_THROW(softmax(std::vector<double>{}), ContractViolation);
  EXPECT_EQ(softmax(std::vector<double>{-3.0})[0], 1.0);
}

TEST(Numerics, SigmoidSaturatesWithoutOverflow) {
  EXPECT_EQ(sigmoid(-800.0), 0.0);
  EXPECT_EQ(sigmoid(800.0), 1.0);
  EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5);
  EXPECT_NEAR(sigmoid(2.0) + sigmoid(-2.0), 1.0, 1e-15);
}

TEST(Numerics, SoftmaxBackwardMatchesFiniteDifference) {
  const std::vector<double> x{0.3, -1.2, 2.0, 0.7};
  const std::vector<double> w{1.0, -2.0, 0.5, 3.0};
  auto loss = [&](const std::vector<double>& z) {
    const Vector y = softmax(z);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += w[i] * y[i];
    return s;
  };
  const Vector y = softmax(x);
  const Vector g = softmax_backward(y, w);
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto up = x, down = x;
    up[i] += 1e-6;
    down[i] -= 1e-6;
    EXPECT_NEAR(g[i], (loss(up) - loss(down)) / 2e-6, 1e-8);
  }
}

TEST(Numerics, CosineConventions) {
  const std::vector<double> a{1.0, 2.0, 3.0}, z{0.0, 0.0, 0.0};
  EXPECT_NEAR(cosine_sim(a, a), 1.0, 1e-15);
  EXPECT_EQ(cosine_sim(a, z), 0.0);
  const std::vector<double> neg{-2.0, -4.0, -6.0};
  EXPECT_NEAR(cosine_sim(a, neg), -1.0, 1e-15);

  const std::vector<double> b{-0.5, 0.25, 2.0};
  const CosineGrad g = cosine_sim_grad(a, b);
  for (std::size_t i = 0; i < 3; ++i) {
    auto up = a, down = a;
    up[i] += 1e-6;
    down[i] -= 1e-6;
    EXPECT_NEAR(g.d_a[i], (cosine_sim(up, b) - cosine_sim(down, b)) / 2e-6, 1e-8);
  }
  const CosineGrad zg = cosine_sim_grad(a, z);
  EXPECT_EQ(zg.value, 0.0);
  for (double v : zg.d_a) EXPECT_EQ(v, 0.0);
}

TEST(Numerics, ClampedLogBounds) {
  EXPECT_NEAR(clamped_log(0.0), std::log(kProbEpsilon), 1e-12);
  EXPECT_NEAR(clamped_log(1.0), std::log1p(-kProbEpsilon), 1e-15);
  EXPECT_EQ(clamped_log_derivative(0.0), 0.0);
  EXPECT_NEAR(clamped_log_derivative(0.25), 4.0, 1e-12);
  EXPECT_THROW(clamped_log(1.5), ContractViolation);
}

TEST(Rng, SameSeedSameStream) {
  SeededRng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    differs |= x != c.next_u64();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, SubstreamsAreIndependentOfParentPosition) {
  SeededRng a(7);
  const auto first = a.substream("data", 3).next_u64();
  a.next_u64();
  a.next_u64();
  EXPECT_EQ(a.substream("data", 3).next_u64(), first);
  EXPECT_NE(a.substream("init", 3).next_u64(), first);
  EXPECT_NE(a.substream("data", 4).next_u64(), first);
}

TEST(Rng, DistributionMoments) {
  SeededRng rng(11);
  const int n = 200000;
  double su = 0.0, sn = 0.0, sn2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  EXPECT_NEAR(su / n, 0.5, 5e-3);
  EXPECT_NEAR(sn / n, 0.0, 1e-2);
  EXPECT_NEAR(sn2 / n, 1.0, 1e-2);

  std::vector<int> counts(5, 0);
  for (int i = 0; i < 50000; ++i) ++counts[rng.uniform_index(5)];
  for (int c : counts) EXPECT_NEAR(c / 50000.0, 0.2, 0.01);
}

TEST(Rng, SampleWithoutReplacementIsDistinct) {
  SeededRng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    auto s = rng.sample_without_replacement(10, 6);
    ASSERT_EQ(s.size(), 6u);
    std::sort(s.begin(), s.end());
    EXPECT_EQ(std::adjacent_find(s.begin(), s.end()), s.end());
    EXPECT_LT(s.back(), 10u);
  }
  EXPECT_THROW(rng.sample_without_replacement(3, 4), ContractViolation);
}

TEST(ParamStore, CheckpointRoundTripIsExact) {
  SeededRng rng(9);
  ParamStore store;
  store.add("enc.w", random_matrix(rng, 3, 4));
  store.add("enc.b", random_matrix(rng, 1, 4));
  store.add("empty", Matrix(0, 0));
  std::stringstream buf;
  store.write(buf);
  const std::string bytes = buf.str();
  EXPECT_EQ(bytes.substr(0, 4), "CCAP");

  std::stringstream in(bytes);
  const ParamStore back = ParamStore::read(in);
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back.entries()[0].name, "enc.w");
  EXPECT_EQ(back.value("enc.w"), store.value("enc.w"));
  EXPECT_EQ(back.value("enc.b"), store.value("enc.b"));

  std::stringstream again;
  back.write(again);
  EXPECT_EQ(again.str(), bytes);
}

TEST(ParamStore, RejectsBadInput) {
  ParamStore store;
  store.add("w", Matrix(2, 2));
  EXPECT_THROW(store.add("w", Matrix(1, 1)), ContractViolation);

  std::stringstream bad("XXXX\x01\0\0\0");
  EXPECT_THROW(ParamStore::read(bad), Error);

  ParamStore other;
  other.add("w", Matrix(2, 3));
  EXPECT_THROW(store.assign_values(other), ArtifactMismatch);
}

TEST(GradCheck, QuadraticPassesAndWrongGradientFails) {
  ParamStore store;
  store.add("x", Matrix{{0.3, -0.7, 1.1}});
  const LossAndGrad good = [](ParamStore& p) {
    const Matrix& x = p.value("x");
    double s = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      s += (i + 1.0) * x(0, i) * x(0, i);
      p.grad("x")(0, i) += 2.0 * (i + 1.0) * x(0, i);
    }
    return s;
  };
  SeededRng rng(1);
  const GradCheckResult ok = grad_check(good, store, {}, rng);
  EXPECT_TRUE(ok.passed(1e-4)) << ok.max_rel_error;
  EXPECT_EQ(ok.probed, 3u);
  EXPECT_EQ(store.value("x")(0, 1), -0.7);

  const LossAndGrad bad = [&](ParamStore& p) {
    const double v = good(p);
    p.grad("x")(0, 2) *= 1.01;
    return v;
  };
  const GradCheckResult fail = grad_check(bad, store, {}, rng);
  EXPECT_FALSE(fail.passed(1e-4));
  EXPECT_EQ(fail.worst_param, "x");
  EXPECT_EQ(fail.worst_index, 2u);
}
