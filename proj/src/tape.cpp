#include "cyclecap/tape.hpp"

#include <algorithm>
#include <cmath>

#include "cyclecap/error.hpp"
#include "cyclecap/numerics.hpp"

namespace cyclecap {

Var Tape::constant(Matrix value) { return push(std::move(value), nullptr); }

Var Tape::param(ParamStore& store, ParamId id) {
  for (const auto& leaf : leaves_)
    if (leaf.store == &store && leaf.index == id.index) return {leaf.node};
  ParamStore* s = &store;
  const std::size_t index = id.index;
  const Var v = push(store.value(id), [s, index](Tape& t, std::size_t self) {
    s->entries()[index].grad += t.grad(self);
  });
  leaves_.push_back({&store, index, v.id});
  return v;
}

Var Tape::push(Matrix value, Backward backward) {
  nodes_.push_back({std::move(value), Matrix(), std::move(backward), false});
  return {nodes_.size() - 1};
}

double Tape::scalar(Var v) const {
  const Matrix& m = value(v);
  require(m.rows() == 1 && m.cols() == 1, "tape: scalar requested from a non-1x1 node");
  return m(0, 0);
}

Matrix& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.touched) {
    n.grad = Matrix(n.value.rows(), n.value.cols());
    n.touched = true;
  }
  return n.grad;
}

void Tape::backward(Var root) {
  require(value(root).rows() == 1 && value(root).cols() == 1, "tape: backward root must be 1x1");
  grad(root)(0, 0) += 1.0;
  for (std::size_t id = root.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.touched && n.backward) n.backward(*this, id);
  }
}

namespace op {

namespace {

const Matrix& val(Tape& t, Var v) { return t.value(v); }

}  // namespace

Var matmul(Tape& t, Var a, Var b) {
  return t.push(cyclecap::matmul(val(t, a), val(t, b)), [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    t.grad(a) += cyclecap::matmul_nt(g, t.value(b));
    accumulate_tn(t.value(a), g, t.grad(b));
  });
}

Var matmul_nt(Tape& t, Var a, Var b) {
  return t.push(cyclecap::matmul_nt(val(t, a), val(t, b)), [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    t.grad(a) += cyclecap::matmul(g, t.value(b));
    accumulate_tn(g, t.value(a), t.grad(b));
  });
}

Var add(Tape& t, Var a, Var b) {
  return t.push(val(t, a) + val(t, b), [a, b](Tape& t, std::size_t self) {
    const Matrix g = t.grad(self);
    t.grad(a) += g;
    t.grad(b) += g;
  });
}

Var sub(Tape& t, Var a, Var b) {
  return t.push(val(t, a) - val(t, b), [a, b](Tape& t, std::size_t self) {
    const Matrix g = t.grad(self);
    t.grad(a) += g;
    t.grad(b) -= g;
  });
}

Var add_row(Tape& t, Var a, Var row) {
  const Matrix& x = val(t, a);
  const Matrix& r = val(t, row);
  require(r.rows() == 1 && r.cols() == x.cols(), "add_row: row shape mismatch");
  Matrix out = x;
  for (std::size_t i = 0; i < out.rows(); ++i) axpy(1.0, r.row(0), out.row(i));
  return t.push(std::move(out), [a, row](Tape& t, std::size_t self) {
    const Matrix g = t.grad(self);
    t.grad(a) += g;
    Matrix& gr = t.grad(row);
    for (std::size_t i = 0; i < g.rows(); ++i) axpy(1.0, g.row(i), gr.row(0));
  });
}

Var mul(Tape& t, Var a, Var b) {
  const Matrix& x = val(t, a);
  const Matrix& y = val(t, b);
  require(x.same_shape(y), "mul: shape mismatch");
  Matrix out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] *= y.values()[i];
  return t.push(std::move(out), [a, b](Tape& t, std::size_t self) {
    const Matrix g = t.grad(self);
    const Matrix& x = t.value(a);
    const Matrix& y = t.value(b);
    Matrix& ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga.values()[i] += g.values()[i] * y.values()[i];
    Matrix& gb = t.grad(b);
    for (std::size_t i = 0; i < g.size(); ++i) gb.values()[i] += g.values()[i] * x.values()[i];
  });
}

Var scale(Tape& t, Var a, double s) { return affine(t, a, s, 0.0); }

Var affine(Tape& t, Var a, double alpha, double beta) {
  Matrix out = val(t, a);
  for (auto& v : out.values()) v = alpha * v + beta;
  return t.push(std::move(out), [a, alpha](Tape& t, std::size_t self) { axpy(alpha, t.grad(self), t.grad(a)); });
}

Var sigmoid(Tape& t, Var a) {
  Matrix out = val(t, a);
  for (auto& v : out.values()) v = cyclecap::sigmoid(v);
  return t.push(std::move(out), [a](Tape& t, std::size_t self) {
    const Matrix& y = t.value(Var{self});
    const Matrix g = t.grad(self);
    Matrix& ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = y.values()[i];
      ga.values()[i] += g.values()[i] * s * (1.0 - s);
    }
  });
}

Var tanh(Tape& t, Var a) {
  Matrix out = val(t, a);
  for (auto& v : out.values()) v = std::tanh(v);
  return t.push(std::move(out), [a](Tape& t, std::size_t self) {
    const Matrix& y = t.value(Var{self});
    const Matrix g = t.grad(self);
    Matrix& ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = y.values()[i];
      ga.values()[i] += g.values()[i] * (1.0 - s * s);
    }
  });
}

Var relu(Tape& t, Var a) {
  Matrix out = val(t, a);
  for (auto& v : out.values()) v = std::max(0.0, v);
  return t.push(std::move(out), [a](Tape& t, std::size_t self) {
    const Matrix& x = t.value(a);
    const Matrix g = t.grad(self);
    Matrix& ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x.values()[i] > 0.0) ga.values()[i] += g.values()[i];
  });
}

Var softmax_rows(Tape& t, Var a) {
  Matrix out = val(t, a);
  cyclecap::softmax_rows(out);
  return t.push(std::move(out), [a](Tape& t, std::size_t self) {
    const Matrix g = t.grad(self);
    t.grad(a) += softmax_rows_backward(t.value(Var{self}), g);
  });
}

Var clamped_log(Tape& t, Var a) {
  Matrix out = val(t, a);
  for (auto& v : out.values()) v = cyclecap::clamped_log(v);
  return t.push(std::move(out), [a](Tape& t, std::size_t self) {
    const Matrix& x = t.value(a);
    const Matrix g = t.grad(self);
    Matrix& ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga.values()[i] += g.values()[i] * clamped_log_derivative(x.values()[i]);
  });
}

Var hconcat(Tape& t, Var a, Var b) {
  const Var parts[] = {a, b};
  return hconcat(t, parts);
}

Var hconcat(Tape& t, std::span<const Var> parts) {
  require(!parts.empty(), "hconcat: no parts");
  const std::size_t r = val(t, parts[0]).rows();
  std::size_t c = 0;
  for (Var p : parts) {
    require(val(t, p).rows() == r, "hconcat: row counts differ");
    c += val(t, p).cols();
  }
  Matrix out(r, c);
  std::size_t off = 0;
  for (Var p : parts) {
    const Matrix& x = val(t, p);
    for (std::size_t i = 0; i < r; ++i) std::copy(x.row(i).begin(), x.row(i).end(), out.row(i).begin() + off);
    off += x.cols();
  }
  std::vector<Var> keep(parts.begin(), parts.end());
  return t.push(std::move(out), [keep](Tape& t, std::size_t self) {
    const Matrix g = t.grad(self);
    std::size_t off = 0;
    for (Var p : keep) {
      Matrix& gp = t.grad(p);
      for (std::size_t i = 0; i < gp.rows(); ++i)
        for (std::size_t j = 0; j < gp.cols(); ++j) gp(i, j) += g(i, off + j);
      off += gp.cols();
    }
  });
}

Var vconcat(Tape& t, std::span<const Var> parts) {
  require(!parts.empty(), "vconcat: no parts");
  const std::size_t c = val(t, parts[0]).cols();
  std::size_t r = 0;
  for (Var p : parts) {
    require(val(t, p).cols() == c, "vconcat: column counts differ");
    r += val(t, p).rows();
  }
  Matrix out(r, c);
  std::size_t off = 0;
  for (Var p : parts) {
    const Matrix& x = val(t, p);
    std::copy(x.values().begin(), x.values().end(), out.values().begin() + off * c);
    off += x.rows();
  }
  std::vector<Var> keep(parts.begin(), parts.end());
  return t.push(std::move(out), [keep](Tape& t, std::size_t self) {
    const Matrix g = t.grad(self);
    std::size_t off = 0;
    for (Var p : keep) {
      Matrix& gp = t.grad(p);
      for (std::size_t k = 0; k < gp.size(); ++k) gp.values()[k] += g.values()[off * gp.cols() + k];
      off += gp.rows();
    }
  });
}

Var rows(Tape& t, Var a, std::span<const std::size_t> index) {
  const Matrix& x = val(t, a);
  Matrix out(index.size(), x.cols());
  for (std::size_t k = 0; k < index.size(); ++k) {
    require(index[k] < x.rows(), "rows: index out of range");
    std::copy(x.row(index[k]).begin(), x.row(index[k]).end(), out.row(k).begin());
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return t.push(std::move(out), [a, idx](Tape& t, std::size_t self) {
    const Matrix g = t.grad(self);
    Matrix& ga = t.grad(a);
    for (std::size_t k = 0; k < idx.size(); ++k) axpy(1.0, g.row(k), ga.row(idx[k]));
  });
}

Var row(Tape& t, Var a, std::size_t r) {
  const std::size_t idx[] = {r};
  return rows(t, a, idx);
}

Var cols(Tape& t, Var a, std::size_t begin, std::size_t count) {
  const Matrix& x = val(t, a);
  require(begin + count <= x.cols(), "cols: range out of bounds");
  Matrix out(x.rows(), count);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = x(i, begin + j);
  return t.push(std::move(out), [a, begin, count](Tape& t, std::size_t self) {
    const Matrix g = t.grad(self);
    Matrix& ga = t.grad(a);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < count; ++j) ga(i, begin + j) += g(i, j);
  });
}

Var transpose(Tape& t, Var a) {
  return t.push(val(t, a).transposed(), [a](Tape& t, std::size_t self) { t.grad(a) += t.grad(self).transposed(); });
}

Var mean_rows(Tape& t, Var a) {
  const Matrix& x = val(t, a);
  require(x.rows() > 0, "mean_rows: empty input");
  Matrix out(1, x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) axpy(1.0 / x.rows(), x.row(i), out.row(0));
  return t.push(std::move(out), [a](Tape& t, std::size_t self) {
    const Matrix g = t.grad(self);
    Matrix& ga = t.grad(a);
    for (std::size_t i = 0; i < ga.rows(); ++i) axpy(1.0 / ga.rows(), g.row(0), ga.row(i));
  });
}

Var max_rows(Tape& t, Var a) {
  const Matrix& x = val(t, a);
  require(x.rows() > 0, "max_rows: empty input");
  Matrix out(1, x.cols());
  std::vector<std::size_t> arg(x.cols(), 0);
  for (std::size_t j = 0; j < x.cols(); ++j) {
    out(0, j) = x(0, j);
    for (std::size_t i = 1; i < x.rows(); ++i)
      if (x(i, j) > out(0, j)) {
        out(0, j) = x(i, j);
        arg[j] = i;
      }
  }
  return t.push(std::move(out), [a, arg](Tape& t, std::size_t self) {
    const Matrix g = t.grad(self);
    Matrix& ga = t.grad(a);
    for (std::size_t j = 0; j < arg.size(); ++j) ga(arg[j], j) += g(0, j);
  });
}

Var sum(Tape& t, Var a) {
  double s = 0.0;
  for (double v : val(t, a).values()) s += v;
  return t.push(Matrix(1, 1, s), [a](Tape& t, std::size_t self) {
    const double g = t.grad(self)(0, 0);
    for (auto& v : t.grad(a).values()) v += g;
  });
}

Var mean(Tape& t, Var a) {
  const std::size_t n = val(t, a).size();
  require(n > 0, "mean: empty input");
  return scale(t, sum(t, a), 1.0 / static_cast<double>(n));
}

Var scale_by(Tape& t, Var a, Var s) {
  const double k = t.scalar(s);
  Matrix out = val(t, a);
  out *= k;
  return t.push(std::move(out), [a, s](Tape& t, std::size_t self) {
    const Matrix g = t.grad(self);
    const double k = t.value(s)(0, 0);
    axpy(k, g, t.grad(a));
    t.grad(s)(0, 0) += dot(g.values(), t.value(a).values());
  });
}

Var cosine_rows(Tape& t, Var a, Var b) {
  const Matrix& x = val(t, a);
  const Matrix& y = val(t, b);
  require(x.cols() == y.cols(), "cosine_rows: dimension mismatch");
  Matrix out(x.rows(), y.rows());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < y.rows(); ++j) out(i, j) = cosine_sim(x.row(i), y.row(j));
  return t.push(std::move(out), [a, b](Tape& t, std::size_t self) {
    const Matrix g = t.grad(self);
    const Matrix& x = t.value(a);
    const Matrix& y = t.value(b);
    Matrix& ga = t.grad(a);
    Matrix& gb = t.grad(b);
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < y.rows(); ++j) {
        if (g(i, j) == 0.0) continue;
        const CosineGrad cg = cosine_sim_grad(x.row(i), y.row(j));
        axpy(g(i, j), cg.d_a, ga.row(i));
        axpy(g(i, j), cg.d_b, gb.row(j));
      }
  });
}

Var cosine_paired(Tape& t, Var a, Var b) {
  const Matrix& x = val(t, a);
  const Matrix& y = val(t, b);
  require(x.same_shape(y), "cosine_paired: shape mismatch");
  Matrix out(1, x.rows());
  for (std::size_t k = 0; k < x.rows(); ++k) out(0, k) = cosine_sim(x.row(k), y.row(k));
  return t.push(std::move(out), [a, b](Tape& t, std::size_t self) {
    const Matrix g = t.grad(self);
    const Matrix& x = t.value(a);
    const Matrix& y = t.value(b);
    Matrix& ga = t.grad(a);
    Matrix& gb = t.grad(b);
    for (std::size_t k = 0; k < x.rows(); ++k) {
      if (g(0, k) == 0.0) continue;
      const CosineGrad cg = cosine_sim_grad(x.row(k), y.row(k));
      axpy(g(0, k), cg.d_a, ga.row(k));
      axpy(g(0, k), cg.d_b, gb.row(k));
    }
  });
}

Var cross_entropy_rows(Tape& t, Var logits, std::span<const std::size_t> targets) {
  const Matrix& z = val(t, logits);
  require(z.rows() == targets.size() && z.rows() > 0, "cross_entropy_rows: one target per row required");
  Matrix probs(z.rows(), z.cols());
  double total = 0.0;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    require(targets[i] < z.cols(), "cross_entropy_rows: target out of range");
    const Vector p = softmax(z.row(i));
    std::copy(p.begin(), p.end(), probs.row(i).begin());
    // log-sum-exp form keeps the loss finite when p underflows
    double mx = z(i, 0);
    for (double v : z.row(i)) mx = std::max(mx, v);
    double s = 0.0;
    for (double v : z.row(i)) s += std::exp(v - mx);
    total += mx + std::log(s) - z(i, targets[i]);
  }
  std::vector<std::size_t> tg(targets.begin(), targets.end());
  return t.push(Matrix(1, 1, total / z.rows()), [logits, tg, probs](Tape& t, std::size_t self) {
    const double g = t.grad(self)(0, 0) / static_cast<double>(tg.size());
    Matrix& gz = t.grad(logits);
    for (std::size_t i = 0; i < tg.size(); ++i) {
      for (std::size_t j = 0; j < probs.cols(); ++j) gz(i, j) += g * probs(i, j);
      gz(i, tg[i]) -= g;
    }
  });
}

}  // namespace op

}  // namespace cyclecap
