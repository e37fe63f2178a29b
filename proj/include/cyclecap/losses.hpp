#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cyclecap/hungarian.hpp"
#include "cyclecap/segment.hpp"
#include "cyclecap/tape.hpp"

namespace cyclecap {

enum class LossMode { cyc, sg, lg, pdvc };

const char* to_string(LossMode mode);
// "cyc" | "sg" | "lg" | "pdvc-baseline"; throws ConfigError otherwise.
LossMode parse_loss_mode(const std::string& s);

struct LossWeights {
  double lambda1 = 4.0;  // gIOU
  double lambda2 = 1.0;  // caption
  double lambda3 = 0.5;  // semantic
  double lambda4 = 1.0;  // triplet
  double lambda5 = 1.0;  // MIL
  double beta_giou = 2.0;
  double beta_cls = 2.0;
  double beta_cap = 1.0;
  double beta_ct = 1.0;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
};

// Segments as an N×2 [start, end] matrix.
std::vector<Segment> to_segments(const Matrix& rows);

// M*_l: cost 1 - gIOU(l_i, l*_j).
Matching match_location(const Matrix& predicted, const std::vector<Segment>& truth);
// M*_s: cost 1 - cos(q̃_i, z_j).
Matching match_semantic(const Matrix& queries, const Matrix& truth_embeddings);
// Baseline matching: cost (1 - gIOU) plus the focal classification cost
// α(1-a)^γ(-log a) - (1-α)a^γ(-log(1-a)).
Matching match_set(const Matrix& predicted, const Matrix& confidence, const std::vector<Segment>& truth,
                   double alpha, double gamma);

// 1 × |M| row of 1 - gIOU for the matched pairs.
Var giou_loss_terms(Tape& t, Var segments, const std::vector<Segment>& truth, const Matching& m);
// 1 × |M| row of 1 - cos(q̃_i, z_j).
Var semantic_terms(Tape& t, Var queries, const Matrix& truth_embeddings, const Matching& m);
// Mean of a 1×K row; constant 0 when K = 0.
Var mean_or_zero(Tape& t, Var row);

// Mean over positions of -log softmax(logits)[target].
Var caption_loss(Tape& t, Var logits, const std::vector<std::size_t>& target);

// Each takes per-pair rows already restricted to the relevant matching:
// giou over the matching named in the loss, caption likewise.
Var loss_lg(Tape& t, Var giou_l, Var cap_l, const LossWeights& w);
Var loss_sem(Tape& t, Var sem_l);
Var loss_sg(Tape& t, Var giou_s, Var cap_s, Var l_sem, const LossWeights& w);
Var loss_cyc(Tape& t, Var giou_s, Var cap_l, Var l_sem, const LossWeights& w);

// Binary focal loss averaged over all N queries; foreground flags 0/1.
Var focal_loss(Tape& t, Var confidence, const std::vector<double>& foreground, double alpha, double gamma);
// -log r_len[count]; counts above K_max are clamped with a warning.
Var counter_loss(Tape& t, Var r_len, std::size_t true_count);
// β_giou L_giou + β_cls L_cls + β_cap L_cap + β_ct L_ct
Var set_loss(Tape& t, Var l_giou, Var l_cls, Var l_cap, Var l_ct, const LossWeights& w);

}  // namespace cyclecap
