#include "cyclecap/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <utility>

#include "cyclecap/error.hpp"
#include "cyclecap/log.hpp"

namespace cyclecap {

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void add_into(LossBreakdown& acc, const LossBreakdown& b, double s) {
  acc.l_giou += s * b.l_giou;
  acc.l_cap += s * b.l_cap;
  acc.l_sem += s * b.l_sem;
  acc.l_cls += s * b.l_cls;
  acc.l_ct += s * b.l_ct;
  acc.l_tri += s * b.l_tri;
  acc.l_mil += s * b.l_mil;
  acc.total += s * b.total;
}

class Stepper {
 public:
  Stepper(const TrainConfig& cfg, const ParamStore& store) : cfg_(cfg) {
    for (const auto& p : store.entries()) {
      m_.emplace_back(p.value.rows(), p.value.cols());
      if (cfg.optimizer == Optimizer::adam) v_.emplace_back(p.value.rows(), p.value.cols());
    }
  }

  void step(ParamStore& store, double lr) {
    ++t_;
    auto& entries = store.entries();
    for (std::size_t k = 0; k < entries.size(); ++k) {
      const auto val = entries[k].value.values();
      const auto g = std::as_const(entries[k].grad).values();
      const auto m = m_[k].values();
      if (cfg_.optimizer == Optimizer::sgd) {
        for (std::size_t i = 0; i < val.size(); ++i) {
          m[i] = cfg_.momentum * m[i] + g[i];
          val[i] -= lr * m[i];
        }
      } else {
        const auto v = v_[k].values();
        const double b1 = 0.9, b2 = 0.999;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
        for (std::size_t i = 0; i < val.size(); ++i) {
          m[i] = b1 * m[i] + (1.0 - b1) * g[i];
          v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
          val[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + 1e-8);
        }
      }
    }
  }

 private:
  const TrainConfig& cfg_;
  std::vector<Matrix> m_, v_;
  std::size_t t_ = 0;
};

void scale_grads(ParamStore& store, double s) {
  for (auto& p : store.entries())
    for (double& g : p.grad.values()) g *= s;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

}  // namespace

std::string breakdown_header() { return "l_giou,l_cap,l_sem,l_cls,l_ct,l_tri,l_mil,total"; }

std::string breakdown_row(const LossBreakdown& b) {
  return num(b.l_giou) + ',' + num(b.l_cap) + ',' + num(b.l_sem) + ',' + num(b.l_cls) + ',' + num(b.l_ct) + ',' +
         num(b.l_tri) + ',' + num(b.l_mil) + ',' + num(b.total);
}

TrainResult train(const RunConfig& config, const Dataset& data, const TrainOptions& opts) {
  config.validate();
  if (data.config.dim != config.data.dim || data.config.frames != config.data.frames)
    throw ArtifactMismatch("dataset has T=" + std::to_string(data.config.frames) + ", d=" +
                           std::to_string(data.config.dim) + " but the config expects T=" +
                           std::to_string(config.data.frames) + ", d=" + std::to_string(config.data.dim));
  if (data.train.empty()) throw ArtifactMismatch("dataset has no training videos");

  TrainResult res{Model::create(config, data), {}, {}, 0, -1.0};
  Model& model = res.model;
  res.best = model;
  const auto train_ex = prepare_examples(model, data.train, data, true, opts.threads);
  const auto val_ex = prepare_examples(model, data.val, data, false, opts.threads);
  const auto val_truth = annotations_of(data.val);

  const bool write = !opts.out_dir.empty();
  std::ofstream steps_csv, epochs_csv;
  if (write) {
    std::filesystem::create_directories(opts.out_dir);
    write_text(opts.out_dir / "config.json", config_to_json(config).dump(1) + "\n");
    steps_csv.open(opts.out_dir / "steps.csv", std::ios::binary);
    epochs_csv.open(opts.out_dir / "epochs.csv", std::ios::binary);
    if (!steps_csv || !epochs_csv) throw Error("cannot write CSVs under " + opts.out_dir.string());
    steps_csv << "step," << breakdown_header() << '\n';
    epochs_csv << "epoch,learning_rate," << breakdown_header() << ",val_recall,val_precision,val_f1,val_bleu4\n";
  }

  const TrainConfig& tc = config.train;
  const std::size_t n = train_ex.size();
  const std::size_t batches = (n + tc.batch_size - 1) / tc.batch_size;
  const std::size_t total_steps = batches * tc.epochs;
  Stepper optim(tc, model.params);
  SeededRng sampling = SeededRng(config.seed).substream("sampling");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[sampling.uniform_index(i)]);
    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * tc.batch_size, hi = std::min(n, lo + tc.batch_size);
      const double inv = 1.0 / static_cast<double>(hi - lo);
      model.params.zero_grads();
      LossBreakdown batch;
      for (std::size_t k = lo; k < hi; ++k) {
        const Example& ex = train_ex[order[k]];
        Tape t;
        const auto fr = forward_loss(t, model, ex, sampling);
        if (!std::isfinite(fr.breakdown.total))
          throw NumericalFailure("non-finite loss at step " + std::to_string(step) + " (" + ex.id + "): " +
                                 breakdown_header() + " = " + breakdown_row(fr.breakdown));
        t.backward(fr.total);
        add_into(batch, fr.breakdown, inv);
      }
      scale_grads(model.params, inv);
      if (!model.params.grads_finite())
        throw NumericalFailure("non-finite gradient at step " + std::to_string(step) + ": " + breakdown_header() +
                               " = " + breakdown_row(batch));
      if (tc.clip_norm > 0.0) {
        const double norm = model.params.grad_norm();
        if (norm > tc.clip_norm) scale_grads(model.params, tc.clip_norm / norm);
      }
      double lr = tc.learning_rate;
      if (tc.cosine_decay)
        lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps)));
      optim.step(model.params, lr);
      if (!model.params.values_finite())
        throw NumericalFailure("non-finite parameters after step " + std::to_string(step) + " (lr " +
                               std::to_string(lr) + ")");
      rec.learning_rate = lr;
      add_into(rec.mean, batch, static_cast<double>(hi - lo) / static_cast<double>(n));
      if (write) steps_csv << step << ',' << breakdown_row(batch) << '\n';
      ++step;
    }
    model.params.zero_grads();

    if (epoch % tc.eval_every == 0 || epoch == tc.epochs) {
      const auto rep = evaluate(infer_all(model, val_ex, opts.threads), val_truth, kEvalThresholds, false, opts.threads);
      rec.evaluated = true;
      rec.val_recall = rep.recall;
      rec.val_precision = rep.precision;
      rec.val_f1 = rep.f1;
      rec.val_bleu4 = rep.bleu4;
      if (rep.f1 > res.best_f1) {
        res.best_f1 = rep.f1;
        res.best_epoch = epoch;
        res.best.params.assign_values(model.params);
      }
    }
    if (write) {
      epochs_csv << epoch << ',' << num(rec.learning_rate) << ',' << breakdown_row(rec.mean);
      if (rec.evaluated)
        epochs_csv << ',' << num(rec.val_recall) << ',' << num(rec.val_precision) << ',' << num(rec.val_f1) << ','
                   << num(rec.val_bleu4);
      else
        epochs_csv << ",,,,";
      epochs_csv << '\n';
    }
    if (opts.on_epoch) opts.on_epoch(rec);
    res.epochs.push_back(rec);
  }

  if (write) {
    model.save(opts.out_dir / "model.ccap");
    res.best.save(opts.out_dir / "best.ccap");
  }
  return res;
}

}  // namespace cyclecap
