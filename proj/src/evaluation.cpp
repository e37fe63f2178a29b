#include "cyclecap/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "cyclecap/error.hpp"
#include "cyclecap/parallel.hpp"

namespace cyclecap {

using nlohmann::json;

std::vector<Annotation> annotations_of(const std::vector<VideoRecord>& videos) {
  std::vector<Annotation> out;
  out.reserve(videos.size());
  for (const auto& v : videos) {
    Annotation a;
    a.video = v.id;
    for (const auto& e : v.events) {
      a.segments.push_back(e.segment);
      a.captions.push_back(e.tokens);
    }
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> match_for_eval(const std::vector<PredictedEvent>& preds,
                                                                const std::vector<Segment>& gts, double threshold) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return preds[a].confidence > preds[b].confidence; });
  std::vector<bool> taken(gts.size(), false);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i : order) {
    double best = -1.0;
    std::size_t best_j = gts.size();
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (taken[j]) continue;
      const double v = tiou(preds[i].segment, gts[j]);
      if (v > best) {
        best = v;
        best_j = j;
      }
    }
    if (best_j < gts.size() && best >= threshold) {
      taken[best_j] = true;
      pairs.emplace_back(i, best_j);
    }
  }
  return pairs;
}

double bleu4(const std::vector<std::string>& candidate, const std::vector<std::string>& reference) {
  require(!reference.empty(), "bleu4: empty reference");
  if (candidate.empty()) return 0.0;
  const std::size_t c = candidate.size(), r = reference.size();
  const std::size_t orders = std::min<std::size_t>(4, c);
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= orders; ++n) {
    std::map<std::vector<std::string>, std::size_t> ref_counts;
    for (std::size_t i = 0; i + n <= r; ++i)
      ++ref_counts[std::vector<std::string>(reference.begin() + i, reference.begin() + i + n)];
    std::map<std::vector<std::string>, std::size_t> cand_counts;
    for (std::size_t i = 0; i + n <= c; ++i)
      ++cand_counts[std::vector<std::string>(candidate.begin() + i, candidate.begin() + i + n)];
    std::size_t matches = 0;
    for (const auto& [gram, cnt] : cand_counts) {
      const auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) matches += std::min(cnt, it->second);
    }
    const double total = static_cast<double>(c - n + 1);
    double p;
    if (matches > 0) {
      p = static_cast<double>(matches) / total;
    } else if (n == 1) {
      return 0.0;
    } else {
      p = 1.0 / (total + 1.0);
    }
    log_sum += std::log(p);
  }
  const double bp = c >= r ? 1.0 : std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
  return bp * std::exp(log_sum / static_cast<double>(orders));
}

EvalReport evaluate(const std::vector<Prediction>& predictions, const std::vector<Annotation>& truth,
                    const std::vector<double>& thresholds, bool macro, std::size_t threads) {
  std::unordered_map<std::string, const Prediction*> by_video;
  for (const auto& p : predictions) {
    if (!by_video.emplace(p.video, &p).second) throw ArtifactMismatch("duplicate predictions for " + p.video);
  }
  for (const auto& p : predictions) {
    const bool known = std::any_of(truth.begin(), truth.end(), [&](const Annotation& a) { return a.video == p.video; });
    if (!known) throw ArtifactMismatch("predictions for unknown video " + p.video);
  }

  // Diagnostics in video-id order so that pooled sums do not depend on the
  // order of the inputs.
  std::vector<const Annotation*> order;
  for (const auto& a : truth) order.push_back(&a);
  std::sort(order.begin(), order.end(), [](const Annotation* a, const Annotation* b) { return a->video < b->video; });

  const std::size_t nt = thresholds.size();
  EvalReport rep;
  rep.macro = macro;
  rep.videos.resize(order.size());
  static const std::vector<PredictedEvent> kNone;
  parallel_for(order.size(), threads, [&](std::size_t v) {
    const Annotation& a = *order[v];
    const auto it = by_video.find(a.video);
    const auto& preds = it == by_video.end() ? kNone : it->second->events;
    VideoDiagnostics d;
    d.video = a.video;
    d.predictions = preds.size();
    d.ground_truths = a.segments.size();
    d.matched.assign(nt, 0);
    d.bleu_sum.assign(nt, 0.0);
    for (std::size_t k = 0; k < nt; ++k) {
      for (const auto& [i, j] : match_for_eval(preds, a.segments, thresholds[k])) {
        ++d.matched[k];
        d.bleu_sum[k] += bleu4(preds[i].tokens, a.captions[j]);
      }
    }
    rep.videos[v] = std::move(d);
  });

  for (const auto& d : rep.videos) {
    rep.predictions += d.predictions;
    rep.ground_truths += d.ground_truths;
  }
  for (std::size_t k = 0; k < nt; ++k) {
    ThresholdRow row;
    row.threshold = thresholds[k];
    double bleu = 0.0;
    if (macro) {
      double rs = 0.0, ps = 0.0, bs = 0.0;
      for (const auto& d : rep.videos) {
        row.matched += d.matched[k];
        if (d.ground_truths) {
          rs += static_cast<double>(d.matched[k]) / static_cast<double>(d.ground_truths);
          bs += d.bleu_sum[k] / static_cast<double>(d.ground_truths);
        }
        if (d.predictions) ps += static_cast<double>(d.matched[k]) / static_cast<double>(d.predictions);
      }
      const double nv = rep.videos.empty() ? 1.0 : static_cast<double>(rep.videos.size());
      row.recall = rs / nv;
      row.precision = ps / nv;
      bleu = bs / nv;
    } else {
      for (const auto& d : rep.videos) {
        row.matched += d.matched[k];
        bleu += d.bleu_sum[k];
      }
      const double m = static_cast<double>(row.matched);
      row.recall = rep.ground_truths ? m / static_cast<double>(rep.ground_truths) : 0.0;
      row.precision = rep.predictions ? m / static_cast<double>(rep.predictions) : 0.0;
      bleu = rep.ground_truths ? bleu / static_cast<double>(rep.ground_truths) : 0.0;
    }
    row.bleu4 = bleu;
    rep.recall += row.recall;
    rep.precision += row.precision;
    rep.bleu4 += row.bleu4;
    rep.rows.push_back(row);
  }
  if (nt) {
    rep.recall /= static_cast<double>(nt);
    rep.precision /= static_cast<double>(nt);
    rep.bleu4 /= static_cast<double>(nt);
  }
  const double pr = rep.precision + rep.recall;
  rep.f1 = pr > 0.0 ? 2.0 * rep.precision * rep.recall / pr : 0.0;
  return rep;
}

double round6(double v) {
  if (!std::isfinite(v)) return v;
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return std::strtod(buf, nullptr);
}

std::string report_json(const EvalReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"threshold", round6(row.threshold)},
                    {"recall", round6(row.recall)},
                    {"precision", round6(row.precision)},
                    {"bleu4", round6(row.bleu4)},
                    {"matched", row.matched}});
  json videos = json::array();
  for (const auto& d : r.videos) {
    json b = json::array();
    for (double s : d.bleu_sum) b.push_back(round6(s));
    videos.push_back({{"video", d.video},
                      {"predictions", d.predictions},
                      {"ground_truths", d.ground_truths},
                      {"matched", d.matched},
                      {"bleu4_sum", b}});
  }
  json j = {{"per_threshold", rows},
            {"recall", round6(r.recall)},
            {"precision", round6(r.precision)},
            {"f1", round6(r.f1)},
            {"bleu4", round6(r.bleu4)},
            {"predictions", r.predictions},
            {"ground_truths", r.ground_truths},
            {"averaging", r.macro ? "macro" : "micro"},
            {"not_computed", {{"CIDEr", "not computed"}, {"METEOR", "not computed"}, {"SODA_c", "not computed"}}},
            {"videos", videos},
            {"config", r.config},
            {"seed", r.seed}};
  return j.dump(1) + "\n";
}

namespace {

std::string fmt6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

std::string report_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "threshold,recall,precision,f1,bleu4,matched,predictions,ground_truths\n";
  for (const auto& row : r.rows) {
    const double pr = row.recall + row.precision;
    const double f1 = pr > 0.0 ? 2.0 * row.recall * row.precision / pr : 0.0;
    out << fmt6(row.threshold) << ',' << fmt6(row.recall) << ',' << fmt6(row.precision) << ',' << fmt6(f1) << ','
        << fmt6(row.bleu4) << ',' << row.matched << ',' << r.predictions << ',' << r.ground_truths << '\n';
  }
  out << "avg," << fmt6(r.recall) << ',' << fmt6(r.precision) << ',' << fmt6(r.f1) << ',' << fmt6(r.bleu4) << ",,"
      << r.predictions << ',' << r.ground_truths << '\n';
  return out.str();
}

void emit_report(const EvalReport& r, const std::filesystem::path& json_path, const std::filesystem::path& csv_path) {
  std::ofstream j(json_path, std::ios::binary);
  if (!j) throw Error("cannot write " + json_path.string());
  j << report_json(r);
  std::ofstream c(csv_path, std::ios::binary);
  if (!c) throw Error("cannot write " + csv_path.string());
  c << report_csv(r);
  if (!j || !c) throw Error("failed writing report");
}

std::string ablation_csv(const std::vector<std::pair<std::string, EvalReport>>& reports) {
  std::ostringstream out;
  out << "label,recall,precision,f1,bleu4\n";
  for (const auto& [label, r] : reports)
    out << label << ',' << fmt6(r.recall) << ',' << fmt6(r.precision) << ',' << fmt6(r.f1) << ',' << fmt6(r.bleu4)
        << '\n';
  return out.str();
}

void write_predictions(const std::vector<Prediction>& preds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& p : preds) {
    json events = json::array();
    for (const auto& e : p.events)
      events.push_back({{"start", e.segment.start}, {"end", e.segment.end}, {"conf", e.confidence}, {"tokens", e.tokens}});
    out << json{{"video", p.video}, {"events", events}}.dump() << '\n';
  }
}

std::vector<Prediction> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<Prediction> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      Prediction p;
      p.video = j.at("video").get<std::string>();
      for (const auto& e : j.at("events")) {
        PredictedEvent ev;
        ev.segment = {e.at("start").get<double>(), e.at("end").get<double>()};
        ev.confidence = e.at("conf").get<double>();
        ev.tokens = e.at("tokens").get<std::vector<std::string>>();
        if (!ev.segment.valid()) throw Error("degenerate segment");
        p.events.push_back(std::move(ev));
      }
      out.push_back(std::move(p));
    } catch (const std::exception& ex) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return out;
}

}  // namespace cyclecap
