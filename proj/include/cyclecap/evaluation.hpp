#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cyclecap/model.hpp"
#include "cyclecap/segment.hpp"
#include "cyclecap/synthetic.hpp"

namespace cyclecap {

inline const std::vector<double> kEvalThresholds{0.3, 0.5, 0.7, 0.9};

struct Annotation {
  std::string video;
  std::vector<Segment> segments;
  std::vector<std::vector<std::string>> captions;
};

std::vector<Annotation> annotations_of(const std::vector<VideoRecord>& videos);

// Greedy one-to-one matching: predictions in descending confidence (ties by
// index) each claim the unmatched ground truth of highest tIOU (ties by
// index) when it reaches `threshold`. Pairs are (prediction, gt).
std::vector<std::pair<std::size_t, std::size_t>> match_for_eval(const std::vector<PredictedEvent>& preds,
                                                                const std::vector<Segment>& gts, double threshold);

// Sentence BLEU-4 with brevity penalty min(1, e^{1 - r/c}); n-gram orders
// capped at min(4, |candidate|). A zero match count at order n >= 2 gives
// precision 1 / (candidate n-grams + 1); unigram precision is never smoothed.
double bleu4(const std::vector<std::string>& candidate, const std::vector<std::string>& reference);

struct ThresholdRow {
  double threshold = 0.0;
  double recall = 0.0;
  double precision = 0.0;
  double bleu4 = 0.0;
  std::size_t matched = 0;
};

struct VideoDiagnostics {
  std::string video;
  std::size_t predictions = 0;
  std::size_t ground_truths = 0;
  std::vector<std::size_t> matched;  // per threshold
  std::vector<double> bleu_sum;      // per threshold, over matched pairs
};

struct EvalReport {
  std::vector<ThresholdRow> rows;
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  double bleu4 = 0.0;
  std::size_t predictions = 0;
  std::size_t ground_truths = 0;
  bool macro = false;
  std::vector<VideoDiagnostics> videos;
  nlohmann::json config;  // echo of the effective config, may be null
  std::uint64_t seed = 0;
};

// Predictions and annotations are paired by video id; a video without
// predictions counts as empty. Micro-averaged (pooled counts) by default.
EvalReport evaluate(const std::vector<Prediction>& predictions, const std::vector<Annotation>& truth,
                    const std::vector<double>& thresholds = kEvalThresholds, bool macro = false,
                    std::size_t threads = 1);

// Canonical JSON (sorted keys, 6 significant digits).
std::string report_json(const EvalReport& r);
// One row per threshold plus an "avg" row.
std::string report_csv(const EvalReport& r);
void emit_report(const EvalReport& r, const std::filesystem::path& json_path, const std::filesystem::path& csv_path);

// Table-merge of labelled reports: label,recall,precision,f1,bleu4.
std::string ablation_csv(const std::vector<std::pair<std::string, EvalReport>>& reports);

// JSON Lines {"video", "events": [{"start", "end", "conf", "tokens"}]}.
void write_predictions(const std::vector<Prediction>& preds, const std::filesystem::path& path);
std::vector<Prediction> read_predictions(const std::filesystem::path& path);

// Rounds to 6 significant digits.
double round6(double v);

}  // namespace cyclecap
