#include "cyclecap/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>

#include "cyclecap/error.hpp"

namespace cyclecap {

namespace {

constexpr double kMinWidth = 1e-4;

std::string layer_name(std::size_t l, const char* what) { return "decoder.layer" + std::to_string(l) + "." + what; }

// -(x_t - p_i)² / (2σ²) over frame centres, one row per reference point
// (refs is R × 1); gradient flows to the references.
Var window_penalty(Tape& t, Var refs, std::size_t frames, double sigma) {
  const Matrix& p = t.value(refs);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  Matrix out(p.rows(), frames);
  for (std::size_t i = 0; i < p.rows(); ++i)
    for (std::size_t f = 0; f < frames; ++f) {
      const double x = (f + 0.5) / static_cast<double>(frames);
      out(i, f) = -(x - p(i, 0)) * (x - p(i, 0)) * inv;
    }
  return t.push(std::move(out), [refs, frames, inv](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& p = t.value(refs);
    Matrix& gp = t.grad(refs);
    for (std::size_t i = 0; i < p.rows(); ++i) {
      double d = 0.0;
      for (std::size_t f = 0; f < frames; ++f) {
        const double x = (f + 0.5) / static_cast<double>(frames);
        d += g(i, f) * 2.0 * (x - p(i, 0)) * inv;
      }
      gp(i, 0) += d;
    }
  });
}

// (c, w) columns of the sigmoid head to clamped [start, end] rows.
Var segments_op(Tape& t, Var raw) {
  const Matrix& o = t.value(raw);
  Matrix out(o.rows(), 2);
  for (std::size_t i = 0; i < o.rows(); ++i) {
    if (!std::isfinite(o(i, 0)) || !std::isfinite(o(i, 1)))
      throw NumericalFailure("localization head produced a non-finite centre/width for query " + std::to_string(i));
    const Segment s = segment_from_center_width(o(i, 0), o(i, 1));
    out(i, 0) = s.start;
    out(i, 1) = s.end;
  }
  return t.push(std::move(out), [raw](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& o = t.value(raw);
    Matrix& go = t.grad(raw);
    for (std::size_t i = 0; i < o.rows(); ++i) {
      const double c = o(i, 0), w = o(i, 1);
      const double s = c - 0.5 * w, e = c + 0.5 * w;
      const double cs = std::clamp(s, 0.0, 1.0), ce = std::clamp(e, 0.0, 1.0);
      if (ce - cs < kMinWidth) {
        // widened around c: both ends move with c unless pinned to a bound
        const Segment seg = segment_from_center_width(c, w);
        if (seg.start > 0.0 && seg.end < 1.0) go(i, 0) += g(i, 0) + g(i, 1);
        continue;
      }
      if (s > 0.0 && s < 1.0) {
        go(i, 0) += g(i, 0);
        go(i, 1) -= 0.5 * g(i, 0);
      }
      if (e > 0.0 && e < 1.0) {
        go(i, 0) += g(i, 1);
        go(i, 1) += 0.5 * g(i, 1);
      }
    }
  });
}

struct GruWeights {
  Var wx, uh, b;
};

// h' = (1 - u) ⊙ n + u ⊙ h with gates r, u and candidate n.
Var gru_step(Tape& t, const GruWeights& w, Var x, Var h, std::size_t d) {
  const Var gx = op::add_row(t, op::matmul(t, x, w.wx), w.b);
  const Var gh = op::matmul(t, h, w.uh);
  const Var r = op::sigmoid(t, op::add(t, op::cols(t, gx, 0, d), op::cols(t, gh, 0, d)));
  const Var u = op::sigmoid(t, op::add(t, op::cols(t, gx, d, d), op::cols(t, gh, d, d)));
  const Var n = op::tanh(t, op::add(t, op::cols(t, gx, 2 * d, d), op::mul(t, r, op::cols(t, gh, 2 * d, d))));
  return op::add(t, n, op::mul(t, u, op::sub(t, h, n)));
}

struct CaptionContext {
  GruWeights gru;
  Var embed, out_w, out_b;
  Var keys;     // F̃ W_attᵀ, T × d
  Var penalty;  // 1 × T
  Var query;    // q̃_i, 1 × d
  double scale;
};

CaptionContext caption_context(Tape& t, ParamStore& store, const DecoderParams& p, const DecoderDims& dims,
                               Var features, Var queries, Var refpoints, std::size_t i) {
  CaptionContext c;
  c.gru = {t.param(store, p.gru_wx), t.param(store, p.gru_uh), t.param(store, p.gru_b)};
  c.embed = t.param(store, p.embed);
  c.out_w = t.param(store, p.out_w);
  c.out_b = t.param(store, p.out_b);
  c.keys = op::matmul_nt(t, features, t.param(store, p.att));
  const std::size_t frames = t.value(features).rows();
  // An infinite σ switches the window off.
  c.penalty = std::isfinite(dims.sigma) ? window_penalty(t, op::row(t, refpoints, i), frames, dims.sigma)
                                        : t.constant(Matrix(1, frames));
  c.query = op::row(t, queries, i);
  c.scale = 1.0 / std::sqrt(static_cast<double>(dims.d));
  return c;
}

// One decode step: returns (new hidden state, logits row).
std::pair<Var, Var> caption_step(Tape& t, const CaptionContext& c, const DecoderDims& dims, Var features, Var h,
                                 std::size_t prev_token) {
  const Var scores = op::add(t, op::scale(t, op::matmul_nt(t, h, c.keys), c.scale), c.penalty);
  const Var attn = op::softmax_rows(t, scores);
  const Var z = op::matmul(t, attn, features);
  const Var parts[] = {op::row(t, c.embed, prev_token), z, c.query};
  const Var x = op::hconcat(t, parts);
  const Var h2 = gru_step(t, c.gru, x, h, dims.d);
  const Var logits = op::add_row(t, op::matmul(t, h2, c.out_w), c.out_b);
  return {h2, logits};
}

}  // namespace

DecoderParams DecoderParams::create(ParamStore& store, const DecoderDims& dims, SeededRng& init) {
  require(dims.vocab >= 2, "decoder: vocabulary must hold EOS and BOS");
  require(dims.queries >= 1 && dims.d >= 1, "decoder: N and d must be positive");
  const std::size_t d = dims.d, kv = dims.d + dims.position_dims, h = dims.ff_hidden;
  DecoderParams p;
  // Lookup tables (queries, token embeddings) have fan-in 1.
  p.queries = store.add("decoder.queries", init_uniform(dims.queries, d, 1, init));
  for (std::size_t l = 0; l < dims.layers; ++l) {
    Layer L;
    L.wq = store.add(layer_name(l, "wq"), init_uniform(d, d, d, init));
    L.wk = store.add(layer_name(l, "wk"), init_uniform(kv, d, kv, init));
    L.wv = store.add(layer_name(l, "wv"), init_uniform(kv, d, kv, init));
    L.wo = store.add(layer_name(l, "wo"), init_uniform(d, d, d, init));
    L.w1 = store.add(layer_name(l, "w1"), init_uniform(d, h, d, init));
    L.b1 = store.add(layer_name(l, "b1"), init_uniform(1, h, d, init));
    L.w2 = store.add(layer_name(l, "w2"), init_uniform(h, d, h, init));
    L.b2 = store.add(layer_name(l, "b2"), init_uniform(1, d, h, init));
    p.layers.push_back(L);
  }
  p.ref_w = store.add("decoder.ref_w", init_uniform(d, 1, d, init));
  p.ref_b = store.add("decoder.ref_b", init_uniform(1, 1, d, init));
  p.loc_w = store.add("decoder.loc_w", init_uniform(d, 3, d, init));
  p.loc_b = store.add("decoder.loc_b", init_uniform(1, 3, d, init));
  if (dims.anchors || dims.gen_sigma > 0.0) {
    // centre logits spread evenly over (0, 1)
    Matrix a(dims.queries, 1);
    for (std::size_t i = 0; i < dims.queries; ++i) {
      const double x = (i + 0.5) / static_cast<double>(dims.queries);
      a(i, 0) = std::log(x / (1.0 - x));
    }
    p.anchors = store.add("decoder.anchors", std::move(a));
  }
  const std::size_t in = dims.embed + 2 * d;
  p.embed = store.add("caption.embed", init_uniform(dims.vocab, dims.embed, 1, init));
  p.att = store.add("caption.att", init_uniform(d, d, d, init));
  p.gru_wx = store.add("caption.gru_wx", init_uniform(in, 3 * d, in, init));
  p.gru_uh = store.add("caption.gru_uh", init_uniform(d, 3 * d, d, init));
  p.gru_b = store.add("caption.gru_b", init_uniform(1, 3 * d, d, init));
  p.out_w = store.add("caption.out_w", init_uniform(d, dims.vocab, d, init));
  p.out_b = store.add("caption.out_b", init_uniform(1, dims.vocab, d, init));
  p.count_w = store.add("counter.w", init_uniform(d, dims.k_max + 1, d, init));
  p.count_b = store.add("counter.b", init_uniform(1, dims.k_max + 1, d, init));
  return p;
}

DecoderParams DecoderParams::find(const ParamStore& store, const DecoderDims& dims) {
  DecoderParams p;
  p.queries = store.id("decoder.queries");
  for (std::size_t l = 0; l < dims.layers; ++l) {
    p.layers.push_back({store.id(layer_name(l, "wq")), store.id(layer_name(l, "wk")), store.id(layer_name(l, "wv")),
                        store.id(layer_name(l, "wo")), store.id(layer_name(l, "w1")), store.id(layer_name(l, "b1")),
                        store.id(layer_name(l, "w2")), store.id(layer_name(l, "b2"))});
  }
  p.ref_w = store.id("decoder.ref_w");
  p.ref_b = store.id("decoder.ref_b");
  p.loc_w = store.id("decoder.loc_w");
  p.loc_b = store.id("decoder.loc_b");
  if (dims.anchors || dims.gen_sigma > 0.0) p.anchors = store.id("decoder.anchors");
  p.embed = store.id("caption.embed");
  p.att = store.id("caption.att");
  p.gru_wx = store.id("caption.gru_wx");
  p.gru_uh = store.id("caption.gru_uh");
  p.gru_b = store.id("caption.gru_b");
  p.out_w = store.id("caption.out_w");
  p.out_b = store.id("caption.out_b");
  p.count_w = store.id("counter.w");
  p.count_b = store.id("counter.b");
  return p;
}

Matrix position_features(std::size_t frames, std::size_t dims) {
  Matrix out(frames, dims);
  for (std::size_t f = 0; f < frames; ++f) {
    const double x = (f + 0.5) / static_cast<double>(frames);
    for (std::size_t k = 0; k < dims; ++k) {
      if (k == 0) {
        out(f, k) = x;
      } else if (k == 1) {
        out(f, k) = x * x;
      } else {
        const double freq = std::numbers::pi * static_cast<double>((k - 2) / 2 + 1);
        out(f, k) = (k % 2 == 0) ? std::sin(freq * x) : std::cos(freq * x);
      }
    }
  }
  return out;
}

Generated generate(Tape& t, ParamStore& store, const DecoderParams& p, const DecoderDims& dims, Var features) {
  const std::size_t frames = t.value(features).rows();
  require(t.value(features).cols() == dims.d, "generate: feature width differs from d");
  Var kv_in = features;
  if (dims.position_dims > 0) kv_in = op::hconcat(t, features, t.constant(position_features(frames, dims.position_dims)));
  const double scale = 1.0 / std::sqrt(static_cast<double>(dims.d));

  Generated g;
  Var q = t.param(store, p.queries);
  std::optional<Var> window;
  if (dims.gen_sigma > 0.0)
    window = window_penalty(t, op::sigmoid(t, t.param(store, p.anchors)), frames, dims.gen_sigma);
  g.attention = t.constant(Matrix(dims.queries, frames));
  for (const auto& L : p.layers) {
    const Var keys = op::matmul(t, kv_in, t.param(store, L.wk));
    const Var values = op::matmul(t, kv_in, t.param(store, L.wv));
    Var scores = op::scale(t, op::matmul_nt(t, op::matmul(t, q, t.param(store, L.wq)), keys), scale);
    if (window) scores = op::add(t, scores, *window);
    g.attention = op::softmax_rows(t, scores);
    q = op::add(t, q, op::matmul(t, op::matmul(t, g.attention, values), t.param(store, L.wo)));
    const Var hidden = op::relu(t, op::add_row(t, op::matmul(t, q, t.param(store, L.w1)), t.param(store, L.b1)));
    q = op::add(t, q, op::add_row(t, op::matmul(t, hidden, t.param(store, L.w2)), t.param(store, L.b2)));
  }
  g.queries = q;
  g.refpoints =
      op::sigmoid(t, op::add_row(t, op::matmul(t, q, t.param(store, p.ref_w)), t.param(store, p.ref_b)));
  return g;
}

Segment segment_from_center_width(double c, double w) {
  Segment s{std::clamp(c - 0.5 * w, 0.0, 1.0), std::clamp(c + 0.5 * w, 0.0, 1.0)};
  if (s.end - s.start < kMinWidth) {
    s.start = std::clamp(c - 0.5 * kMinWidth, 0.0, 1.0 - kMinWidth);
    s.end = s.start + kMinWidth;
  }
  return s;
}

Localized localize(Tape& t, ParamStore& store, const DecoderParams& p, const DecoderDims& dims, Var queries) {
  Var logits = op::add_row(t, op::matmul(t, queries, t.param(store, p.loc_w)), t.param(store, p.loc_b));
  if (dims.anchors) {
    const std::size_t n = t.value(queries).rows();
    const Var zeros = t.constant(Matrix(n, 2));
    logits = op::add(t, logits, op::hconcat(t, t.param(store, p.anchors), zeros));
  }
  Localized out;
  out.raw = op::sigmoid(t, logits);
  out.segments = segments_op(t, out.raw);
  out.confidence = op::cols(t, out.raw, 2, 1);
  return out;
}

Var caption_logits(Tape& t, ParamStore& store, const DecoderParams& p, const DecoderDims& dims, Var features,
                   Var queries, Var refpoints, std::size_t i, const std::vector<std::size_t>& target) {
  require(!target.empty(), "caption_logits: empty teacher sequence");
  const CaptionContext c = caption_context(t, store, p, dims, features, queries, refpoints, i);
  Var h = op::tanh(t, c.query);  // the query seeds the recurrence
  std::vector<Var> rows;
  rows.reserve(target.size());
  std::size_t prev = kBosToken;
  for (std::size_t tok : target) {
    require(tok < dims.vocab, "caption_logits: token id out of range");
    auto [h2, logits] = caption_step(t, c, dims, features, h, prev);
    h = h2;
    rows.push_back(logits);
    prev = tok;
  }
  return op::vconcat(t, rows);
}

std::vector<std::size_t> decode_greedy(Tape& t, ParamStore& store, const DecoderParams& p, const DecoderDims& dims,
                                       Var features, Var queries, Var refpoints, std::size_t i) {
  const CaptionContext c = caption_context(t, store, p, dims, features, queries, refpoints, i);
  Var h = op::tanh(t, c.query);  // the query seeds the recurrence
  std::vector<std::size_t> out;
  std::size_t prev = kBosToken;
  for (std::size_t step = 0; step < dims.max_len; ++step) {
    auto [h2, logits] = caption_step(t, c, dims, features, h, prev);
    h = h2;
    const auto row = t.value(logits).row(0);
    const std::size_t best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best == kEosToken) break;
    out.push_back(best);
    prev = best;
  }
  return out;
}

Var count_events(Tape& t, ParamStore& store, const DecoderParams& p, const DecoderDims& dims, Var queries) {
  const Var pooled = dims.counter_pool == CounterPool::max ? op::max_rows(t, queries) : op::mean_rows(t, queries);
  return op::softmax_rows(t, op::add_row(t, op::matmul(t, pooled, t.param(store, p.count_w)), t.param(store, p.count_b)));
}

std::size_t event_count(const Matrix& r_len) {
  const auto row = r_len.row(0);
  const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  return std::max<std::size_t>(1, best);
}

std::vector<std::size_t> top_queries(const Matrix& confidence, std::size_t n) {
  std::vector<std::size_t> order(confidence.rows());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return confidence(a, 0) > confidence(b, 0); });
  order.resize(std::min(n, order.size()));
  return order;
}

}  // namespace cyclecap
