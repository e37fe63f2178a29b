#include "cyclecap/losses.hpp"

#include <cmath>

#include "cyclecap/error.hpp"
#include "cyclecap/log.hpp"
#include "cyclecap/numerics.hpp"

namespace cyclecap {

const char* to_string(LossMode mode) {
  switch (mode) {
    case LossMode::cyc: return "cyc";
    case LossMode::sg: return "sg";
    case LossMode::lg: return "lg";
    case LossMode::pdvc: return "pdvc-baseline";
  }
  return "cyc";
}

LossMode parse_loss_mode(const std::string& s) {
  if (s == "cyc") return LossMode::cyc;
  if (s == "sg") return LossMode::sg;
  if (s == "lg") return LossMode::lg;
  if (s == "pdvc-baseline") return LossMode::pdvc;
  throw ConfigError("mode: expected one of cyc, sg, lg, pdvc-baseline, got '" + s + "'");
}

std::vector<Segment> to_segments(const Matrix& rows) {
  require(rows.cols() == 2, "to_segments: expected N x 2");
  std::vector<Segment> out(rows.rows());
  for (std::size_t i = 0; i < rows.rows(); ++i) out[i] = {rows(i, 0), rows(i, 1)};
  return out;
}

Matching match_location(const Matrix& predicted, const std::vector<Segment>& truth) {
  const auto preds = to_segments(predicted);
  Matrix cost(preds.size(), truth.size());
  for (std::size_t i = 0; i < preds.size(); ++i)
    for (std::size_t j = 0; j < truth.size(); ++j) cost(i, j) = 1.0 - giou_1d(preds[i], truth[j]);
  Matching m = hungarian(cost);
  m.mode = MatchMode::location;
  return m;
}

Matching match_semantic(const Matrix& queries, const Matrix& truth_embeddings) {
  Matrix cost(queries.rows(), truth_embeddings.rows());
  for (std::size_t i = 0; i < queries.rows(); ++i)
    for (std::size_t j = 0; j < truth_embeddings.rows(); ++j)
      cost(i, j) = 1.0 - cosine_sim(queries.row(i), truth_embeddings.row(j));
  Matching m = hungarian(cost);
  m.mode = MatchMode::semantic;
  return m;
}

Matching match_set(const Matrix& predicted, const Matrix& confidence, const std::vector<Segment>& truth,
                   double alpha, double gamma) {
  const auto preds = to_segments(predicted);
  Matrix cost(preds.size(), truth.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double a = confidence(i, 0);
    const double pos = alpha * std::pow(1.0 - a, gamma) * -clamped_log(a);
    const double neg = (1.0 - alpha) * std::pow(a, gamma) * -clamped_log(1.0 - a);
    for (std::size_t j = 0; j < truth.size(); ++j) cost(i, j) = 1.0 - giou_1d(preds[i], truth[j]) + pos - neg;
  }
  Matching m = hungarian(cost);
  m.mode = MatchMode::location;
  return m;
}

Var giou_loss_terms(Tape& t, Var segments, const std::vector<Segment>& truth, const Matching& m) {
  const Matrix& s = t.value(segments);
  Matrix out(1, m.size());
  std::vector<GiouGrad> grads;
  for (std::size_t k = 0; k < m.size(); ++k) {
    const auto [i, j] = m.pairs[k];
    grads.push_back(giou_1d_grad({s(i, 0), s(i, 1)}, truth[j]));
    out(0, k) = 1.0 - grads.back().value;
  }
  const auto pairs = m.pairs;
  return t.push(std::move(out), [segments, pairs, grads](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix& gs = t.grad(segments);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const std::size_t i = pairs[k].first;
      gs(i, 0) -= g(0, k) * grads[k].d_start;
      gs(i, 1) -= g(0, k) * grads[k].d_end;
    }
  });
}

Var semantic_terms(Tape& t, Var queries, const Matrix& truth_embeddings, const Matching& m) {
  if (m.empty()) return t.constant(Matrix(1, 0));
  std::vector<std::size_t> qi, zj;
  for (const auto& [i, j] : m.pairs) {
    qi.push_back(i);
    zj.push_back(j);
  }
  Matrix z(m.size(), truth_embeddings.cols());
  for (std::size_t k = 0; k < zj.size(); ++k)
    std::copy(truth_embeddings.row(zj[k]).begin(), truth_embeddings.row(zj[k]).end(), z.row(k).begin());
  const Var q = op::rows(t, queries, qi);
  const Var zc = t.constant(std::move(z));
  return op::affine(t, op::cosine_paired(t, q, zc), -1.0, 1.0);
}

Var mean_or_zero(Tape& t, Var row) {
  if (t.value(row).size() == 0) return t.constant(Matrix(1, 1));
  return op::mean(t, row);
}

Var caption_loss(Tape& t, Var logits, const std::vector<std::size_t>& target) {
  return op::cross_entropy_rows(t, logits, target);
}

Var loss_lg(Tape& t, Var giou_l, Var cap_l, const LossWeights& w) {
  return op::add(t, op::scale(t, mean_or_zero(t, giou_l), w.lambda1), op::scale(t, mean_or_zero(t, cap_l), w.lambda2));
}

Var loss_sem(Tape& t, Var sem_l) { return mean_or_zero(t, sem_l); }

Var loss_sg(Tape& t, Var giou_s, Var cap_s, Var l_sem, const LossWeights& w) {
  return op::add(t, loss_lg(t, giou_s, cap_s, w), op::scale(t, l_sem, w.lambda3));
}

Var loss_cyc(Tape& t, Var giou_s, Var cap_l, Var l_sem, const LossWeights& w) {
  return op::add(t, loss_lg(t, giou_s, cap_l, w), op::scale(t, l_sem, w.lambda3));
}

Var focal_loss(Tape& t, Var confidence, const std::vector<double>& foreground, double alpha, double gamma) {
  const Matrix& a = t.value(confidence);
  require(a.cols() == 1 && a.rows() == foreground.size() && a.rows() > 0, "focal_loss: one flag per query required");
  const std::size_t n = a.rows();
  // f(a) for y=1: -α(1-a)^γ log a; for y=0: -(1-α) a^γ log(1-a)
  auto pw = [](double x, double g) { return g == 0.0 ? 1.0 : std::pow(x, g); };
  auto dpw = [](double x, double g) { return g == 0.0 ? 0.0 : g * std::pow(x, g - 1.0); };
  double total = 0.0;
  Vector deriv(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = a(i, 0);
    if (foreground[i] > 0.5) {
      total += -alpha * pw(1.0 - p, gamma) * clamped_log(p);
      deriv[i] = -alpha * (-dpw(1.0 - p, gamma) * clamped_log(p) + pw(1.0 - p, gamma) * clamped_log_derivative(p));
    } else {
      total += -(1.0 - alpha) * pw(p, gamma) * clamped_log(1.0 - p);
      deriv[i] = -(1.0 - alpha) * (dpw(p, gamma) * clamped_log(1.0 - p) - pw(p, gamma) * clamped_log_derivative(1.0 - p));
    }
  }
  return t.push(Matrix(1, 1, total / n), [confidence, deriv, n](Tape& t, std::size_t self) {
    const double g = t.grad(self)(0, 0) / static_cast<double>(n);
    Matrix& ga = t.grad(confidence);
    for (std::size_t i = 0; i < n; ++i) ga(i, 0) += g * deriv[i];
  });
}

Var counter_loss(Tape& t, Var r_len, std::size_t true_count) {
  const std::size_t k_max = t.value(r_len).cols() - 1;
  if (true_count > k_max) {
    warn("counter_loss: true count " + std::to_string(true_count) + " exceeds K_max " + std::to_string(k_max) +
         ", clamped");
    true_count = k_max;
  }
  return op::scale(t, op::clamped_log(t, op::cols(t, r_len, true_count, 1)), -1.0);
}

Var set_loss(Tape& t, Var l_giou, Var l_cls, Var l_cap, Var l_ct, const LossWeights& w) {
  const Var a = op::add(t, op::scale(t, l_giou, w.beta_giou), op::scale(t, l_cls, w.beta_cls));
  const Var b = op::add(t, op::scale(t, l_cap, w.beta_cap), op::scale(t, l_ct, w.beta_ct));
  return op::add(t, a, b);
}

}  // namespace cyclecap
