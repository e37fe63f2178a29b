#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cyclecap/param_store.hpp"
#include "cyclecap/segment.hpp"
#include "cyclecap/tape.hpp"

namespace cyclecap {

// Caption token ids 0 and 1 are reserved.
inline constexpr std::size_t kEosToken = 0;
inline constexpr std::size_t kBosToken = 1;

enum class CounterPool { max, mean };

struct DecoderDims {
  std::size_t d = 32;             // feature / query width
  std::size_t queries = 10;       // N
  std::size_t layers = 2;         // L_g
  std::size_t ff_hidden = 64;     // generator feed-forward width
  std::size_t position_dims = 0;  // fixed frame-position features appended to keys/values; 0 = content only
  bool anchors = false;           // per-query learnable centre offset in the localization head
  double gen_sigma = 0.0;         // generator attention window around each query's anchor; 0 = none
  std::size_t vocab = 0;          // V including EOS/BOS
  std::size_t embed = 16;         // d_e
  std::size_t k_max = 5;
  double sigma = 0.1;             // caption attention window scale; infinity = no window
  std::size_t max_len = 8;        // L_max
  CounterPool counter_pool = CounterPool::max;
};

struct DecoderParams {
  struct Layer {
    ParamId wq, wk, wv, wo, w1, b1, w2, b2;
  };
  ParamId queries;
  std::vector<Layer> layers;
  ParamId ref_w, ref_b;
  ParamId loc_w, loc_b;
  ParamId anchors;  // valid only when dims.anchors or dims.gen_sigma > 0
  ParamId embed, att, gru_wx, gru_uh, gru_b, out_w, out_b;
  ParamId count_w, count_b;

  static DecoderParams create(ParamStore& store, const DecoderDims& dims, SeededRng& init);
  static DecoderParams find(const ParamStore& store, const DecoderDims& dims);
};

// Fixed per-frame position features at frame centres x = (t + 0.5) / T:
// x, x², then sin/cos pairs of increasing frequency. T × dims.
Matrix position_features(std::size_t frames, std::size_t dims);

struct Generated {
  Var queries;     // q̃, N × d
  Var refpoints;   // p̃, N × 1
  Var attention;   // last layer cross-attention, N × T
};

Generated generate(Tape& t, ParamStore& store, const DecoderParams& p, const DecoderDims& dims, Var features);

struct Localized {
  Var raw;       // sigmoid outputs (c, w, a), N × 3
  Var segments;  // N × 2 [start, end], clamped, min width 1e-4
  Var confidence;  // N × 1
};

Localized localize(Tape& t, ParamStore& store, const DecoderParams& p, const DecoderDims& dims, Var queries);

// Host-side mirror of the segment rule: centre/width to a valid segment.
Segment segment_from_center_width(double c, double w);

// Teacher-forced caption logits for query i: one row per target token
// (target ends with EOS; inputs are BOS followed by target[0..L-2]).
Var caption_logits(Tape& t, ParamStore& store, const DecoderParams& p, const DecoderDims& dims, Var features,
                   Var queries, Var refpoints, std::size_t i, const std::vector<std::size_t>& target);

// Greedy decode for query i; stops at EOS or max_len. EOS is not emitted.
std::vector<std::size_t> decode_greedy(Tape& t, ParamStore& store, const DecoderParams& p, const DecoderDims& dims,
                                       Var features, Var queries, Var refpoints, std::size_t i);

// r_len over {0..K_max}, 1 × (K_max + 1).
Var count_events(Tape& t, ParamStore& store, const DecoderParams& p, const DecoderDims& dims, Var queries);

// argmax with ties to the lower index, clamped to >= 1.
std::size_t event_count(const Matrix& r_len);

// Query order by descending confidence, ties by lower index; first n kept.
std::vector<std::size_t> top_queries(const Matrix& confidence, std::size_t n);

}  // namespace cyclecap
