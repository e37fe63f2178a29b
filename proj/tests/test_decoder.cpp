#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "cyclecap/decoder.hpp"
#include "cyclecap/error.hpp"
#include "cyclecap/grad_check.hpp"
#include "cyclecap/losses.hpp"
#include "cyclecap/numerics.hpp"

using namespace cyclecap;

namespace {

DecoderDims small_dims() {
  DecoderDims d;
  d.d = 6;
  d.queries = 4;
  d.layers = 2;
  d.ff_hidden = 8;
  d.vocab = 7;
  d.embed = 4;
  d.k_max = 3;
  d.max_len = 5;
  return d;
}

struct Net {
  DecoderDims dims;
  ParamStore store;
  DecoderParams p;
};

Net make_net(const DecoderDims& dims, std::uint64_t seed) {
  Net n;
  n.dims = dims;
  SeededRng rng(seed);
  n.p = DecoderParams::create(n.store, dims, rng);
  return n;
}

Matrix random_matrix(SeededRng& rng, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (auto& v : m.values()) v = rng.normal();
  return m;
}

void zero(Matrix& m) { std::fill(m.values().begin(), m.values().end(), 0.0); }

}  // namespace

TEST(Generate, SingleFrameAttendsFully) {
  Net n = make_net(small_dims(), 1);
  SeededRng rng(2);
  Tape t;
  const Generated g = generate(t, n.store, n.p, n.dims, t.constant(random_matrix(rng, 1, 6)));
  for (double v : t.value(g.attention).values()) EXPECT_EQ(v, 1.0);
}

TEST(Generate, ZeroLayersKeepTheQueries) {
  Net n = make_net(small_dims(), 3);
  for (const auto& L : n.p.layers)
    for (ParamId id : {L.wq, L.wk, L.wv, L.wo, L.w1, L.b1, L.w2, L.b2}) zero(n.store.value(id));
  SeededRng rng(4);
  Tape t;
  const Generated g = generate(t, n.store, n.p, n.dims, t.constant(random_matrix(rng, 9, 6)));
  EXPECT_EQ(t.value(g.queries), n.store.value(n.p.queries));
}

TEST(Generate, DefaultShapesAreFinite) {
  DecoderDims d = small_dims();
  d.d = 32;
  d.queries = 10;
  d.ff_hidden = 64;
  d.position_dims = 8;
  Net n = make_net(d, 5);
  SeededRng rng(6);
  Tape t;
  const Generated g = generate(t, n.store, n.p, n.dims, t.constant(random_matrix(rng, 100, 32)));
  EXPECT_EQ(t.value(g.queries).rows(), 10u);
  EXPECT_EQ(t.value(g.queries).cols(), 32u);
  for (double v : t.value(g.queries).values()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Generate, PermutingQueriesPermutesOutputs) {
  Net n = make_net(small_dims(), 7);
  SeededRng rng(8);
  const Matrix f = random_matrix(rng, 10, 6);
  Tape t1;
  const Generated a = generate(t1, n.store, n.p, n.dims, t1.constant(f));
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  const Matrix q = n.store.value(n.p.queries);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t k = 0; k < 6; ++k) n.store.value(n.p.queries)(i, k) = q(perm[i], k);
  Tape t2;
  const Generated b = generate(t2, n.store, n.p, n.dims, t2.constant(f));
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t k = 0; k < 6; ++k)
      EXPECT_NEAR(t2.value(b.queries)(i, k), t1.value(a.queries)(perm[i], k), 1e-14);
    EXPECT_NEAR(t2.value(b.refpoints)(i, 0), t1.value(a.refpoints)(perm[i], 0), 1e-14);
  }
}

TEST(Generate, GradientsMatchFiniteDifferences) {
  DecoderDims d = small_dims();
  d.d = 32;
  d.queries = 10;
  d.position_dims = 4;
  d.anchors = true;
  d.gen_sigma = 0.2;
  Net n = make_net(d, 9);
  SeededRng rng(10);
  const Matrix f = random_matrix(rng, 100, 32);
  const Matrix w = random_matrix(rng, 10, 32);
  const LossAndGrad fn = [&](ParamStore& s) {
    Tape t;
    const Generated g = generate(t, s, n.p, n.dims, t.constant(f));
    const Var loss = op::add(t, op::sum(t, op::mul(t, g.queries, t.constant(w))), op::sum(t, g.refpoints));
    t.backward(loss);
    return t.scalar(loss);
  };
  SeededRng probe(11);
  EXPECT_LT(grad_check(fn, n.store, {1e-5, 200}, probe).max_rel_error, 1e-4);
}

TEST(Localize, ZeroHeadGivesCentredHalf) {
  Net n = make_net(small_dims(), 12);
  zero(n.store.value(n.p.loc_w));
  zero(n.store.value(n.p.loc_b));
  SeededRng rng(13);
  Tape t;
  const Localized l = localize(t, n.store, n.p, n.dims, t.constant(random_matrix(rng, 4, 6)));
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(t.value(l.segments)(i, 0), 0.25);
    EXPECT_DOUBLE_EQ(t.value(l.segments)(i, 1), 0.75);
    EXPECT_EQ(t.value(l.confidence)(i, 0), 0.5);
  }
}

TEST(Localize, BoundaryClamp) {
  const Segment s = segment_from_center_width(0.01, 0.9);
  EXPECT_EQ(s.start, 0.0);
  EXPECT_NEAR(s.end, 0.46, 1e-15);
}

TEST(Localize, StartAlwaysBeforeEnd) {
  SeededRng rng(14);
  for (int k = 0; k < 100000; ++k) {
    const double c = sigmoid(rng.normal(0.0, 10.0)), w = sigmoid(rng.normal(0.0, 10.0));
    const Segment s = segment_from_center_width(c, w);
    ASSERT_LT(s.start, s.end);
    ASSERT_GE(s.start, 0.0);
    ASSERT_LE(s.end, 1.0);
  }
  for (int k = 0; k < 200; ++k) {
    Net n = make_net(small_dims(), 100 + static_cast<std::uint64_t>(k));
    for (auto& v : n.store.value(n.p.loc_w).values()) v *= 50.0;
    Tape t;
    const Localized l = localize(t, n.store, n.p, n.dims, t.constant(random_matrix(rng, 4, 6)));
    for (std::size_t i = 0; i < 4; ++i) {
      ASSERT_LT(t.value(l.segments)(i, 0), t.value(l.segments)(i, 1));
      // Host mirror agrees with the tape op.
      const Segment s = segment_from_center_width(t.value(l.raw)(i, 0), t.value(l.raw)(i, 1));
      EXPECT_EQ(s.start, t.value(l.segments)(i, 0));
      EXPECT_EQ(s.end, t.value(l.segments)(i, 1));
    }
  }
}

TEST(Caption, HugeSigmaApproachesNoWindow) {
  DecoderDims d = small_dims();
  Net n = make_net(d, 15);
  SeededRng rng(16);
  const Matrix f = random_matrix(rng, 12, 6);
  const std::vector<std::size_t> target{2, 3, 4, kEosToken};
  auto logits = [&](double sigma) {
    n.dims.sigma = sigma;
    Tape t;
    const Var fv = t.constant(f);
    const Generated g = generate(t, n.store, n.p, n.dims, fv);
    return t.value(caption_logits(t, n.store, n.p, n.dims, fv, g.queries, g.refpoints, 1, target));
  };
  const Matrix far = logits(1e6), none = logits(std::numeric_limits<double>::infinity());
  const Matrix near = logits(0.05);
  double diff = 0.0, moved = 0.0;
  for (std::size_t k = 0; k < far.values().size(); ++k) {
    diff = std::max(diff, std::abs(far.values()[k] - none.values()[k]));
    moved = std::max(moved, std::abs(near.values()[k] - none.values()[k]));
  }
  EXPECT_LT(diff, 1e-9);
  EXPECT_GT(moved, 1e-6);
}

TEST(Caption, EmptyTeacherSequenceIsRejected) {
  Net n = make_net(small_dims(), 17);
  Tape t;
  const Var fv = t.constant(Matrix(5, 6));
  const Generated g = generate(t, n.store, n.p, n.dims, fv);
  EXPECT_THROW(caption_logits(t, n.store, n.p, n.dims, fv, g.queries, g.refpoints, 0, {}), ContractViolation);
}

TEST(Caption, GreedyDecodeMatchesTeacherForcedArgmax) {
  Net n = make_net(small_dims(), 18);
  SeededRng rng(19);
  Tape t;
  const Var fv = t.constant(random_matrix(rng, 8, 6));
  const Generated g = generate(t, n.store, n.p, n.dims, fv);
  const auto tokens = decode_greedy(t, n.store, n.p, n.dims, fv, g.queries, g.refpoints, 2);
  EXPECT_LE(tokens.size(), n.dims.max_len);
  std::vector<std::size_t> target = tokens;
  if (target.size() < n.dims.max_len) target.push_back(kEosToken);
  const Matrix& logits = t.value(caption_logits(t, n.store, n.p, n.dims, fv, g.queries, g.refpoints, 2, target));
  for (std::size_t r = 0; r < target.size(); ++r) {
    const auto row = logits.row(r);
    EXPECT_EQ(static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()), target[r]);
  }
}

TEST(Caption, GradientsMatchFiniteDifferences) {
  DecoderDims d = small_dims();
  d.position_dims = 2;
  Net n = make_net(d, 20);
  SeededRng rng(21);
  const Matrix f = random_matrix(rng, 8, 6);
  const std::vector<std::size_t> target{2, 5, 6, kEosToken};
  const LossAndGrad fn = [&](ParamStore& s) {
    Tape t;
    const Var fv = t.constant(f);
    const Generated g = generate(t, s, n.p, n.dims, fv);
    const Var loss = caption_loss(t, caption_logits(t, s, n.p, n.dims, fv, g.queries, g.refpoints, 3, target), target);
    t.backward(loss);
    return t.scalar(loss);
  };
  SeededRng probe(22);
  EXPECT_LT(grad_check(fn, n.store, {1e-5, 200}, probe).max_rel_error, 1e-4);
}

TEST(Counter, ZeroWeightsAndPeak) {
  Net n = make_net(small_dims(), 23);
  zero(n.store.value(n.p.count_w));
  zero(n.store.value(n.p.count_b));
  SeededRng rng(24);
  Tape t;
  const Matrix& r = t.value(count_events(t, n.store, n.p, n.dims, t.constant(random_matrix(rng, 4, 6))));
  ASSERT_EQ(r.cols(), 4u);
  for (double v : r.values()) EXPECT_NEAR(v, 0.25, 1e-15);
  EXPECT_EQ(event_count(r), 1u);
  EXPECT_EQ(event_count(Matrix{{0.1, 0.1, 0.1, 0.7}}), 3u);
}

TEST(Counter, MaxAndMeanPoolingDiffer) {
  DecoderDims d = small_dims();
  Net n = make_net(d, 25);
  SeededRng rng(26);
  const Matrix q = random_matrix(rng, 4, 6);
  Tape t;
  n.dims.counter_pool = CounterPool::max;
  const Matrix a = t.value(count_events(t, n.store, n.p, n.dims, t.constant(q)));
  n.dims.counter_pool = CounterPool::mean;
  const Matrix b = t.value(count_events(t, n.store, n.p, n.dims, t.constant(q)));
  EXPECT_NE(a, b);
}

TEST(TopQueries, ConfidenceOrderWithLowerIndexOnTies) {
  const Matrix c{{0.2}, {0.9}, {0.5}, {0.9}};
  EXPECT_EQ(top_queries(c, 4), (std::vector<std::size_t>{1, 3, 2, 0}));
  EXPECT_EQ(top_queries(c, 2), (std::vector<std::size_t>{1, 3}));
}

TEST(PositionFeatures, FrameCentres) {
  const Matrix p = position_features(4, 4);
  EXPECT_DOUBLE_EQ(p(0, 0), 0.125);
  EXPECT_DOUBLE_EQ(p(3, 1), 0.875 * 0.875);
  EXPECT_NEAR(p(1, 2), std::sin(std::acos(-1.0) * 0.375), 1e-15);
}
