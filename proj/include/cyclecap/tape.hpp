#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "cyclecap/matrix.hpp"
#include "cyclecap/param_store.hpp"

namespace cyclecap {

class Tape;

// Handle to a node on a Tape.
struct Var {
  std::size_t id = 0;
};

// Reverse-mode record of matrix operations. Each op stores its output and a
// hand-written backward rule; backward() replays the rules in reverse and
// accumulates parameter gradients into the owning ParamStore.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Var constant(Matrix value);
  // Leaf bound to a store entry; repeated calls for one id share the node.
  Var param(ParamStore& store, ParamId id);

  Var push(Matrix value, Backward backward);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  double scalar(Var v) const;
  // Gradient buffer of a node, allocated as zeros on first use.
  Matrix& grad(std::size_t id);
  Matrix& grad(Var v) { return grad(v.id); }
  bool has_grad(std::size_t id) const { return nodes_[id].touched; }

  // Seeds d(root)/d(root) = 1 for a 1×1 root and propagates.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    bool touched = false;
  };
  struct ParamLeaf {
    const ParamStore* store;
    std::size_t index;
    std::size_t node;
  };
  std::vector<Node> nodes_;
  std::vector<ParamLeaf> leaves_;
};

namespace op {

Var matmul(Tape& t, Var a, Var b);
// a · bᵀ
Var matmul_nt(Tape& t, Var a, Var b);
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
// Adds a 1×c row to every row of a.
Var add_row(Tape& t, Var a, Var row);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double s);
// alpha * a + beta, elementwise.
Var affine(Tape& t, Var a, double alpha, double beta);
Var sigmoid(Tape& t, Var a);
Var tanh(Tape& t, Var a);
Var relu(Tape& t, Var a);
Var softmax_rows(Tape& t, Var a);
// Elementwise clamped_log; inputs must lie in [0, 1].
Var clamped_log(Tape& t, Var a);
Var hconcat(Tape& t, Var a, Var b);
Var hconcat(Tape& t, std::span<const Var> parts);
Var vconcat(Tape& t, std::span<const Var> parts);
Var rows(Tape& t, Var a, std::span<const std::size_t> index);
Var row(Tape& t, Var a, std::size_t r);
Var cols(Tape& t, Var a, std::size_t begin, std::size_t count);
Var transpose(Tape& t, Var a);
Var mean_rows(Tape& t, Var a);
// Column-wise max over rows; ties route the gradient to the lowest row.
Var max_rows(Tape& t, Var a);
Var sum(Tape& t, Var a);
Var mean(Tape& t, Var a);
// Scalar times matrix, both on the tape (s is 1×1).
Var scale_by(Tape& t, Var a, Var s);
// Cosine similarity between every row of a and every row of b (n×m), with
// the zero-norm convention of cosine_sim.
Var cosine_rows(Tape& t, Var a, Var b);
// Row-aligned cosine: entry k is cos(a_k, b_k), as a 1×n row.
Var cosine_paired(Tape& t, Var a, Var b);
// Mean over rows of -log softmax(logits)[target].
Var cross_entropy_rows(Tape& t, Var logits, std::span<const std::size_t> targets);

}  // namespace op

}  // namespace cyclecap
