#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cyclecap/config.hpp"
#include "cyclecap/error.hpp"
#include "cyclecap/evaluation.hpp"
#include "cyclecap/fixture.hpp"
#include "cyclecap/log.hpp"
#include "cyclecap/model.hpp"
#include "cyclecap/retrieval.hpp"
#include "cyclecap/synthetic.hpp"
#include "cyclecap/trainer.hpp"

using namespace cyclecap;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
  bool quiet = false;
};

RunConfig effective_config(const Globals& g) {
  RunConfig c = g.config_path.empty() ? RunConfig{} : load_config(g.config_path);
  if (g.seed) c.seed = *g.seed;
  c.validate();
  return c;
}

// The dataset fixes T, d and the generator settings; the run config follows
// it so that checkpoints record what they were trained on.
RunConfig adopt_dataset(RunConfig c, const Dataset& data) {
  if (c.decoder.k_max < data.config.k_max)
    throw ConfigError("decoder.K_max: " + std::to_string(c.decoder.k_max) + " is below the dataset's K_max " +
                      std::to_string(data.config.k_max));
  c.data = data.config;
  c.validate();
  return c;
}

std::string fmt(double v, const char* spec = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
}

int cmd_gen_data(const Globals& g, const std::string& out) {
  const RunConfig c = effective_config(g);
  const Dataset data = generate_dataset(c.data, c.seed);
  const std::string digest = write_dataset(data, out);
  std::cout << "dataset " << out << " digest " << digest << '\n';
  return 0;
}

EvalReport eval_model(Model& model, const Dataset& data, const std::vector<VideoRecord>& split, std::size_t threads,
                      std::vector<Prediction>* preds_out = nullptr) {
  const auto examples = prepare_examples(model, split, data, false, threads);
  auto preds = infer_all(model, examples, threads);
  EvalReport rep = evaluate(preds, annotations_of(split), kEvalThresholds, false, threads);
  rep.config = config_to_json(model.config);
  rep.seed = model.config.seed;
  if (preds_out) *preds_out = std::move(preds);
  return rep;
}

int cmd_train(const Globals& g, const std::string& data_dir, const std::string& out, const std::string& modes) {
  const Dataset data = load_dataset(data_dir);
  const RunConfig base = adopt_dataset(effective_config(g), data);
  std::vector<std::string> sweep;
  if (!modes.empty()) {
    std::stringstream ss(modes);
    for (std::string m; std::getline(ss, m, ',');) {
      parse_loss_mode(m);
      sweep.push_back(m);
    }
  }
  auto run = [&](const RunConfig& cfg, const fs::path& dir) {
    TrainOptions opts;
    opts.out_dir = dir;
    opts.threads = g.threads;
    opts.on_epoch = [&](const EpochRecord& r) {
      std::string line = "epoch " + std::to_string(r.epoch) + " loss " + fmt(r.mean.total, "%.4f");
      if (r.evaluated) line += " val F1 " + fmt(r.val_f1, "%.3f") + " BLEU4 " + fmt(r.val_bleu4, "%.3f");
      info(line);
    };
    TrainResult res = train(cfg, data, opts);
    const EvalReport rep = eval_model(res.model, data, data.val, g.threads);
    emit_report(rep, dir / "report.json", dir / "report.csv");
    std::cout << dir.string() << ": F1 " << fmt(rep.f1) << " BLEU4 " << fmt(rep.bleu4) << " (best F1 "
              << fmt(res.best_f1) << " at epoch " << res.best_epoch << ")\n";
    return rep;
  };
  if (sweep.empty()) {
    run(base, out);
    return 0;
  }
  std::vector<std::pair<std::string, EvalReport>> reports;
  for (const auto& m : sweep) {
    RunConfig cfg = base;
    cfg.train.mode = parse_loss_mode(m);
    reports.emplace_back(m, run(cfg, fs::path(out) / m));
  }
  write_file(fs::path(out) / "ablation.csv", ablation_csv(reports));
  return 0;
}

int cmd_eval(const Globals& g, const std::string& ckpt, const std::string& data_dir, const std::string& report_dir,
             const std::string& split_name, const std::string& predictions_in, bool macro) {
  const Dataset data = load_dataset(data_dir);
  if (split_name != "val" && split_name != "train") throw ConfigError("--split: expected val or train");
  const auto& split = split_name == "val" ? data.val : data.train;
  fs::create_directories(report_dir);
  EvalReport rep;
  if (!predictions_in.empty()) {
    rep = evaluate(read_predictions(predictions_in), annotations_of(split), kEvalThresholds, macro, g.threads);
  } else {
    if (ckpt.empty()) throw ConfigError("--ckpt is required unless --predictions is given");
    Model model = Model::load(ckpt);
    if (model.config.data.dim != data.config.dim || model.config.data.frames != data.config.frames)
      throw ArtifactMismatch("checkpoint expects T=" + std::to_string(model.config.data.frames) +
                             ", d=" + std::to_string(model.config.data.dim) + "; dataset has T=" +
                             std::to_string(data.config.frames) + ", d=" + std::to_string(data.config.dim));
    std::vector<Prediction> preds;
    rep = eval_model(model, data, split, g.threads, &preds);
    if (macro) {
      rep = evaluate(preds, annotations_of(split), kEvalThresholds, true, g.threads);
      rep.config = config_to_json(model.config);
      rep.seed = model.config.seed;
    }
    write_predictions(preds, fs::path(report_dir) / "predictions.jsonl");
  }
  emit_report(rep, fs::path(report_dir) / "report.json", fs::path(report_dir) / "report.csv");
  std::cout << "R " << fmt(rep.recall) << " P " << fmt(rep.precision) << " F1 " << fmt(rep.f1) << " BLEU4 "
            << fmt(rep.bleu4) << '\n';
  return 0;
}

int cmd_grad_check(const Globals& g, std::size_t samples, bool single) {
  if (single) warn("grad-check: single precision cannot meet the tolerance; the check always runs in double");
  const RunConfig c = effective_config(g);
  TinyFixture fx = make_tiny_fixture(c, c.seed);
  const auto checks = check_components(fx, samples, c.seed);
  bool ok = true;
  std::printf("%-8s %-14s %-8s %s\n", "component", "max_rel_error", "probed", "status");
  for (const auto& ch : checks) {
    const bool pass = ch.result.passed(1e-4);
    ok = ok && pass;
    std::printf("%-9s %-14s %-8zu %s%s\n", to_string(ch.component), fmt(ch.result.max_rel_error, "%.3e").c_str(),
                ch.result.probed, pass ? "pass" : "FAIL",
                pass ? "" : (" (" + ch.result.worst_param + "[" + std::to_string(ch.result.worst_index) + "] analytic " +
                             fmt(ch.result.worst_analytic, "%.6e") + " numeric " +
                             fmt(ch.result.worst_numeric, "%.6e") +
                             (ch.result.failure.empty() ? "" : ", " + ch.result.failure) + ")")
                                .c_str());
  }
  return ok ? 0 : 1;
}

const VideoRecord& find_video(const Dataset& data, const std::string& id) {
  for (const auto* split : {&data.train, &data.val})
    for (const auto& v : *split)
      if (v.id == id) return v;
  throw ConfigError("--video: no video " + id);
}

int cmd_retrieve(const Globals& g, const std::string& data_dir, const std::string& video, bool exclude_self) {
  const Dataset data = load_dataset(data_dir);
  const RunConfig c = adopt_dataset(effective_config(g), data);
  const VideoRecord& v = find_video(data, video);
  const ChunkFeatures chunks = build_chunks(v.features, c.retrieval.chunks);
  std::optional<std::string> exclude;
  if (exclude_self) exclude = v.id;
  for (std::size_t i = 0; i < chunks.spans.size(); ++i) {
    nlohmann::json row = {{"chunk", i}, {"frames", {chunks.spans[i].first, chunks.spans[i].second}}};
    nlohmann::json hits = nlohmann::json::array();
    try {
      for (std::size_t id : retrieve_topk(chunks.chunks.row(i), data.corpus, c.retrieval.top_k, exclude)) {
        const auto& e = data.corpus.entries[id];
        hits.push_back({{"id", e.id}, {"video", e.video}, {"tokens", e.tokens}});
      }
    } catch (const CorpusExhausted&) {
      warn("corpus exhausted for chunk " + std::to_string(i));
    }
    row["retrieved"] = hits;
    std::cout << row.dump() << '\n';
  }
  return 0;
}

int cmd_inspect_concepts(const Globals& g, const std::string& data_dir, const std::string& ckpt,
                         const std::string& video, std::size_t top) {
  const Dataset data = load_dataset(data_dir);
  if (ckpt.empty()) {
    const RunConfig c = adopt_dataset(effective_config(g), data);
    const ConceptVocabulary vocab = build_vocabulary(data.tagged_train_captions(), c.concepts.vocab);
    for (const auto& w : vocab.words()) std::cout << w.token << '\t' << to_string(w.tag) << '\t' << w.freq << '\n';
    return 0;
  }
  Model model = Model::load(ckpt);
  if (video.empty()) {
    for (const auto& w : model.concepts.words())
      std::cout << w.token << '\t' << to_string(w.tag) << '\t' << w.freq << '\n';
    return 0;
  }
  const VideoRecord& v = find_video(data, video);
  const Example ex = prepare_example(model, v, data, false);
  const ConceptScores s = concept_scores(model, ex);
  std::vector<std::size_t> order(s.video.cols());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s.video(0, a) > s.video(0, b); });
  if (order.size() > top) order.resize(top);
  for (std::size_t i : order) {
    const auto& w = model.concepts.words()[i];
    std::cout << w.token << '\t' << fmt(s.video(0, i), "%.4f") << '\t' << (ex.concept_label[i] > 0.5 ? "present" : "absent")
              << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cyclecap: dense video captioning with cyclic co-learning on synthetic data"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "JSON run config (defaults apply to missing keys)");
  app.add_option("--seed", g.seed, "Seed override");
  app.add_option("--threads", g.threads, "Worker threads for data preparation and evaluation")->check(CLI::PositiveNumber);
  app.add_flag("--quiet", g.quiet, "Suppress progress output");

  std::string out, data_dir, ckpt, report_dir, modes, split = "val", predictions, video;
  std::size_t samples = 200, top = 10;
  bool single = false, macro = false, exclude_self = false;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset tree");
  gen->add_option("--out", out, "Output directory")->required();

  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--data", data_dir, "Dataset directory")->required();
  tr->add_option("--out", out, "Output directory")->required();
  tr->add_option("--modes", modes, "Comma-separated loss modes to sweep (cyc,sg,lg,pdvc-baseline)");

  auto* ev = app.add_subcommand("eval", "Score a checkpoint or a prediction dump");
  ev->add_option("--ckpt", ckpt, "Checkpoint (.ccap with its .json sidecar)");
  ev->add_option("--data", data_dir, "Dataset directory")->required();
  ev->add_option("--report", report_dir, "Report directory")->required();
  ev->add_option("--split", split, "val or train");
  ev->add_option("--predictions", predictions, "Score this prediction JSONL instead of running a model");
  ev->add_flag("--macro", macro, "Macro-average over videos instead of pooling counts");

  auto* gc = app.add_subcommand("grad-check", "Finite-difference check of every loss component");
  gc->add_option("--samples", samples, "Coordinates probed per component (0 = all)");
  gc->add_flag("--single", single, "Request single precision (unsupported; warns)");

  auto* rt = app.add_subcommand("retrieve", "Show retrieved sentences per chunk of a video");
  rt->add_option("--data", data_dir, "Dataset directory")->required();
  rt->add_option("--video", video, "Video id")->required();
  rt->add_flag("--exclude-self", exclude_self, "Drop the video's own captions from the corpus");

  auto* ic = app.add_subcommand("inspect-concepts", "List the concept vocabulary or a video's concept scores");
  ic->add_option("--data", data_dir, "Dataset directory")->required();
  ic->add_option("--ckpt", ckpt, "Checkpoint for per-video scores");
  ic->add_option("--video", video, "Video id (needs --ckpt)");
  ic->add_option("--top", top, "Number of concepts shown");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  set_quiet(g.quiet);

  try {
    if (*gen) return cmd_gen_data(g, out);
    if (*tr) return cmd_train(g, data_dir, out, modes);
    if (*ev) return cmd_eval(g, ckpt, data_dir, report_dir, split, predictions, macro);
    if (*gc) return cmd_grad_check(g, samples, single);
    if (*rt) return cmd_retrieve(g, data_dir, video, exclude_self);
    if (*ic) return cmd_inspect_concepts(g, data_dir, ckpt, video, top);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const ArtifactMismatch& e) {
    std::cerr << "artifact mismatch: " << e.what() << '\n';
    return 3;
  } catch (const NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
