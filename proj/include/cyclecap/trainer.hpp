#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "cyclecap/config.hpp"
#include "cyclecap/evaluation.hpp"
#include "cyclecap/model.hpp"
#include "cyclecap/synthetic.hpp"

namespace cyclecap {

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double learning_rate = 0.0;  // at the epoch's last step
  LossBreakdown mean;          // averaged over the epoch's videos
  bool evaluated = false;
  double val_recall = 0.0;
  double val_precision = 0.0;
  double val_f1 = 0.0;
  double val_bleu4 = 0.0;
};

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: keep everything in memory
  std::size_t threads = 1;        // example preparation and validation only
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  Model model;  // final parameters
  Model best;   // best validation F1 (initialization if never evaluated)
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_f1 = -1.0;
};

// Single-threaded SGD over the training split; validation on the val split.
// Writes, when out_dir is set: config.json, steps.csv, epochs.csv,
// model.ccap/.json (final) and best.ccap/.json. Throws NumericalFailure on a
// non-finite loss or gradient.
TrainResult train(const RunConfig& config, const Dataset& data, const TrainOptions& opts);

// CSV header and row of a loss breakdown (step or epoch prefixed by caller).
std::string breakdown_header();
std::string breakdown_row(const LossBreakdown& b);

}  // namespace cyclecap
