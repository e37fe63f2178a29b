#include "cyclecap/model.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "cyclecap/error.hpp"
#include "cyclecap/parallel.hpp"
#include "cyclecap/retrieval.hpp"

namespace cyclecap {

using nlohmann::json;

namespace {

constexpr const char* kModelFormat = "cyclecap-model";
constexpr int kModelVersion = 1;

DecoderDims dims_for(const RunConfig& c, std::size_t vocab) {
  DecoderDims d;
  d.d = c.data.dim;
  d.queries = c.decoder.queries;
  d.layers = c.decoder.layers;
  d.ff_hidden = c.decoder.ff_hidden;
  d.position_dims = c.decoder.position_dims;
  d.anchors = c.decoder.anchors;
  d.gen_sigma = c.decoder.gen_sigma;
  d.vocab = vocab;
  d.embed = c.decoder.embed;
  d.k_max = c.decoder.k_max;
  d.sigma = c.decoder.sigma;
  d.max_len = c.decoder.max_len;
  d.counter_pool = c.decoder.counter_pool;
  return d;
}

std::vector<double> foreground(std::size_t n, const Matching& m) {
  std::vector<double> fg(n, 0.0);
  for (const auto& [i, j] : m.pairs) fg[i] = 1.0;
  return fg;
}

}  // namespace

const char* to_string(Component c) {
  switch (c) {
    case Component::mil: return "L_mil";
    case Component::tri: return "L_tri";
    case Component::lg: return "L_lg";
    case Component::sem: return "L_sem";
    case Component::sg: return "L_sg";
    case Component::cyc: return "L_cyc";
    case Component::cls: return "L_cls";
    case Component::ct: return "L_ct";
    case Component::set: return "L_set";
    case Component::total: return "total";
  }
  return "?";
}

Model Model::create(const RunConfig& config, const Dataset& data) {
  std::vector<std::string> tokens{"<eos>", "<bos>"};
  for (const auto& tok : data.embedder.tokens()) tokens.push_back(tok);
  ConceptVocabulary concepts = build_vocabulary(data.tagged_train_captions(), config.concepts.vocab);
  return create(config, std::move(tokens), std::move(concepts));
}

Model Model::create(const RunConfig& config, std::vector<std::string> tokens, ConceptVocabulary concepts) {
  config.validate();
  require(tokens.size() >= 2 && tokens[kEosToken] == "<eos>" && tokens[kBosToken] == "<bos>",
          "model tokens must start with <eos>, <bos>");
  Model m;
  m.config = config;
  m.tokens = std::move(tokens);
  m.concepts = std::move(concepts);
  m.dims = dims_for(config, m.tokens.size());
  SeededRng init = SeededRng(config.seed).substream("init");
  if (config.toggles.mcd) {
    if (m.concepts.size() == 0) throw ConfigError("concepts.N_C: no concept words available");
    m.concept_head = ConceptParams::create(m.params, m.dims.d, m.concepts.size(), init);
  }
  m.decoder = DecoderParams::create(m.params, m.dims, init);
  return m;
}

std::size_t Model::token_id(const std::string& token) const {
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (tokens[i] == token) return i;
  throw ArtifactMismatch("token '" + token + "' is not in the model vocabulary");
}

std::filesystem::path Model::sidecar_path(const std::filesystem::path& path) {
  auto p = path;
  p.replace_extension(".json");
  if (p == path) p += ".json";
  return p;
}

void Model::save(const std::filesystem::path& path) const {
  params.save(path);
  json side = {{"format", kModelFormat},
               {"version", kModelVersion},
               {"config", config_to_json(config)},
               {"tokens", tokens},
               {"concepts", json::parse(concepts.to_json())}};
  std::ofstream out(sidecar_path(path));
  if (!out) throw Error("cannot write " + sidecar_path(path).string());
  out << side.dump(1) << '\n';
}

Model Model::load(const std::filesystem::path& path) {
  const auto side_path = sidecar_path(path);
  std::ifstream in(side_path);
  if (!in) throw Error("cannot open model sidecar " + side_path.string());
  json side;
  try {
    side = json::parse(in);
  } catch (const json::exception& ex) {
    throw ArtifactMismatch(side_path.string() + ": " + ex.what());
  }
  if (side.value("format", std::string()) != kModelFormat || side.value("version", 0) != kModelVersion)
    throw ArtifactMismatch(side_path.string() + ": not a model sidecar of version " + std::to_string(kModelVersion));
  RunConfig config;
  std::vector<std::string> tokens;
  ConceptVocabulary concepts;
  try {
    config = config_from_json(side.at("config"));
    tokens = side.at("tokens").get<std::vector<std::string>>();
    concepts = ConceptVocabulary::from_json(side.at("concepts").dump());
  } catch (const json::exception& ex) {
    throw ArtifactMismatch(side_path.string() + ": " + ex.what());
  }
  Model m = create(config, std::move(tokens), std::move(concepts));
  m.params.assign_values(ParamStore::load(path));
  return m;
}

Example prepare_example(const Model& model, const VideoRecord& video, const Dataset& data, bool training) {
  const auto& cfg = model.config;
  if (video.features.cols() != model.dims.d || video.features.rows() == 0)
    throw ArtifactMismatch(video.id + ": features are " + std::to_string(video.features.rows()) + "x" +
                           std::to_string(video.features.cols()) + ", model expects d=" +
                           std::to_string(model.dims.d));
  Example ex;
  ex.id = video.id;
  if (cfg.toggles.v2t) {
    std::optional<std::string> exclude;
    if (training && cfg.retrieval.exclude_self) exclude = video.id;
    ex.features = retrieval_features(video.features, data.corpus, cfg.retrieval.chunks, cfg.retrieval.top_k, exclude,
                                     cfg.retrieval.fuse_residual);
  } else {
    ex.features = video.features;
  }
  std::vector<std::vector<std::string>> captions;
  ex.caption_embeddings = Matrix(video.events.size(), model.dims.d);
  for (std::size_t j = 0; j < video.events.size(); ++j) {
    const auto& ev = video.events[j];
    ex.segments.push_back(ev.segment);
    captions.push_back(ev.tokens);
    std::vector<std::size_t> ids;
    for (const auto& tok : ev.tokens) ids.push_back(model.token_id(tok));
    ids.push_back(kEosToken);
    ex.captions.push_back(std::move(ids));
    const Vector z = data.embedder.embed(ev.tokens);
    if (z.size() != model.dims.d) throw ArtifactMismatch("caption embedding width differs from d");
    for (std::size_t c = 0; c < z.size(); ++c) ex.caption_embeddings(j, c) = z[c];
  }
  ex.concept_label = label_video(captions, model.concepts);
  return ex;
}

std::vector<Example> prepare_examples(const Model& model, const std::vector<VideoRecord>& videos, const Dataset& data,
                                      bool training, std::size_t threads) {
  std::vector<Example> out(videos.size());
  parallel_for(videos.size(), threads, [&](std::size_t i) { out[i] = prepare_example(model, videos[i], data, training); });
  return out;
}

ForwardResult forward_loss(Tape& t, Model& model, const Example& ex, SeededRng& sampling, FrozenDraws* frozen,
                           bool all_components) {
  const RunConfig& cfg = model.config;
  const LossWeights& w = cfg.loss.weights;
  const LossMode mode = cfg.effective_mode();
  ParamStore& store = model.params;
  ForwardResult r;
  LossBreakdown& b = r.breakdown;
  const bool reuse = frozen && frozen->filled;

  Var features = t.constant(ex.features);
  std::optional<Var> mil, tri;
  if (model.concept_head) {
    const auto cf = concept_forward(t, store, *model.concept_head, features);
    features = cf.enhanced;
    mil = mil_loss(t, cf.video_probs, ex.concept_label);
    std::vector<ContrastivePair> fresh;
    if (!reuse) fresh = sample_contrastive(ex.concept_label, cfg.concepts.samples, sampling);
    const auto& pairs = reuse ? frozen->pairs : fresh;
    tri = triplet_loss(t, cf.video_concept, t.param(store, model.concept_head->embedding), pairs, cfg.concepts.margin);
    if (frozen && !reuse) frozen->pairs = std::move(fresh);
  }

  const auto gen = generate(t, store, model.decoder, model.dims, features);
  const auto loc = localize(t, store, model.decoder, model.dims, gen.queries);
  FrozenDraws local;
  FrozenDraws& draws = frozen ? *frozen : local;
  if (!reuse) {
    const Matrix& seg = t.value(loc.segments);
    draws.location = match_location(seg, ex.segments);
    draws.semantic = match_semantic(t.value(gen.queries), ex.caption_embeddings);
    draws.set = match_set(seg, t.value(loc.confidence), ex.segments, w.focal_alpha, w.focal_gamma);
    draws.filled = true;
  }

  std::map<std::pair<std::size_t, std::size_t>, Var> cap_cache;
  auto caption_row = [&](const Matching& m) {
    std::vector<Var> parts;
    for (const auto& pr : m.pairs) {
      auto it = cap_cache.find(pr);
      if (it == cap_cache.end()) {
        const auto& target = ex.captions[pr.second];
        Var logits =
            caption_logits(t, store, model.decoder, model.dims, features, gen.queries, gen.refpoints, pr.first, target);
        it = cap_cache.emplace(pr, caption_loss(t, logits, target)).first;
      }
      parts.push_back(it->second);
    }
    if (parts.empty()) return t.constant(Matrix(1, 0));
    return op::hconcat(t, parts);
  };
  auto giou_row = [&](const Matching& m) { return giou_loss_terms(t, loc.segments, ex.segments, m); };
  const std::size_t n = model.dims.queries;

  auto focal_on = [&](const Matching& m) {
    return focal_loss(t, loc.confidence, foreground(n, m), w.focal_alpha, w.focal_gamma);
  };
  auto counter = [&] {
    return counter_loss(t, count_events(t, store, model.decoder, model.dims, gen.queries), ex.segments.size());
  };

  Var mode_loss;
  std::optional<Var> l_cls, l_ct;
  double giou_mean = 0.0, cap_mean = 0.0, sem_mean = 0.0;
  if (mode == LossMode::pdvc) {
    const Var g = mean_or_zero(t, giou_row(draws.set));
    const Var c = mean_or_zero(t, caption_row(draws.set));
    l_cls = focal_on(draws.set);
    l_ct = counter();
    mode_loss = set_loss(t, g, *l_cls, c, *l_ct, w);
    giou_mean = t.scalar(g);
    cap_mean = t.scalar(c);
  } else {
    const Matching& giou_m = mode == LossMode::lg ? draws.location : draws.semantic;
    const Matching& cap_m = mode == LossMode::sg ? draws.semantic : draws.location;
    const Var g = giou_row(giou_m);
    const Var c = caption_row(cap_m);
    if (mode == LossMode::lg) {
      mode_loss = loss_lg(t, g, c, w);
    } else {
      const Var sem = loss_sem(t, semantic_terms(t, gen.queries, ex.caption_embeddings, draws.location));
      sem_mean = t.scalar(sem);
      mode_loss = mode == LossMode::sg ? loss_sg(t, g, c, sem, w) : loss_cyc(t, g, c, sem, w);
    }
    giou_mean = t.scalar(mean_or_zero(t, g));
    cap_mean = t.scalar(mean_or_zero(t, c));
    if (cfg.loss.aux_losses || all_components) {
      l_cls = focal_on(draws.location);
      l_ct = counter();
    }
  }

  std::vector<Var> terms{mode_loss};
  if (tri) terms.push_back(op::scale(t, *tri, w.lambda4));
  if (mil) terms.push_back(op::scale(t, *mil, w.lambda5));
  const bool aux = mode != LossMode::pdvc && cfg.loss.aux_losses;
  if (aux) {
    terms.push_back(op::scale(t, *l_cls, w.beta_cls));
    terms.push_back(op::scale(t, *l_ct, w.beta_ct));
  }
  r.total = op::sum(t, op::hconcat(t, terms));

  b.l_giou = giou_mean;
  b.l_cap = cap_mean;
  b.l_sem = sem_mean;
  if (mode == LossMode::pdvc || aux) {
    b.l_cls = t.scalar(*l_cls);
    b.l_ct = t.scalar(*l_ct);
  }
  if (tri) b.l_tri = t.scalar(*tri);
  if (mil) b.l_mil = t.scalar(*mil);
  b.total = t.scalar(r.total);

  if (all_components) {
    const Var g_l = giou_row(draws.location), g_s = giou_row(draws.semantic);
    const Var c_l = caption_row(draws.location), c_s = caption_row(draws.semantic);
    const Var sem = loss_sem(t, semantic_terms(t, gen.queries, ex.caption_embeddings, draws.location));
    // L_cls is always reported on the location matching.
    if (!l_cls || mode == LossMode::pdvc) l_cls = focal_on(draws.location);
    if (!l_ct) l_ct = counter();
    const Var set_cls = focal_on(draws.set);
    const Var l_set = set_loss(t, mean_or_zero(t, giou_row(draws.set)), set_cls,
                               mean_or_zero(t, caption_row(draws.set)), *l_ct, w);
    if (mil) r.components.emplace_back(Component::mil, *mil);
    if (tri) r.components.emplace_back(Component::tri, *tri);
    r.components.emplace_back(Component::lg, loss_lg(t, g_l, c_l, w));
    r.components.emplace_back(Component::sem, sem);
    r.components.emplace_back(Component::sg, loss_sg(t, g_s, c_s, sem, w));
    r.components.emplace_back(Component::cyc, loss_cyc(t, g_s, c_l, sem, w));
    r.components.emplace_back(Component::cls, *l_cls);
    r.components.emplace_back(Component::ct, *l_ct);
    r.components.emplace_back(Component::set, l_set);
    r.components.emplace_back(Component::total, r.total);
  }
  return r;
}

Prediction infer(Model& model, const Example& ex) {
  Tape t;
  ParamStore& store = model.params;
  Var features = t.constant(ex.features);
  if (model.concept_head) features = concept_forward(t, store, *model.concept_head, features).enhanced;
  const auto gen = generate(t, store, model.decoder, model.dims, features);
  const auto loc = localize(t, store, model.decoder, model.dims, gen.queries);
  const std::size_t n_set =
      std::min(event_count(t.value(count_events(t, store, model.decoder, model.dims, gen.queries))),
               model.dims.queries);
  const Matrix seg = t.value(loc.segments);  // copies: decoding grows the tape
  const Matrix conf = t.value(loc.confidence);
  Prediction p;
  p.video = ex.id;
  for (std::size_t i : top_queries(conf, n_set)) {
    PredictedEvent ev;
    ev.segment = {seg(i, 0), seg(i, 1)};
    ev.confidence = conf(i, 0);
    for (std::size_t id : decode_greedy(t, store, model.decoder, model.dims, features, gen.queries, gen.refpoints, i))
      ev.tokens.push_back(model.tokens[id]);
    p.events.push_back(std::move(ev));
  }
  return p;
}

std::vector<Prediction> infer_all(Model& model, const std::vector<Example>& examples, std::size_t threads) {
  std::vector<Prediction> out(examples.size());
  parallel_for(examples.size(), threads, [&](std::size_t i) { out[i] = infer(model, examples[i]); });
  return out;
}

ConceptScores concept_scores(Model& model, const Example& ex) {
  if (!model.concept_head) throw ConfigError("toggles.mcd: the model has no concept head");
  Tape t;
  const auto cf = concept_forward(t, model.params, *model.concept_head, t.constant(ex.features));
  return {t.value(cf.video_probs), t.value(cf.frame_probs)};
}

}  // namespace cyclecap
