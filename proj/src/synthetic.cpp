#include "cyclecap/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "cyclecap/error.hpp"

namespace cyclecap {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kFiller = {"the", "a", "then", "again", "some", "very", "there", "also"};

void check(bool ok, const std::string& field, const std::string& why) {
  if (!ok) throw ConfigError("data." + field + ": " + why);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

VideoRecord make_video(const SyntheticConfig& c, const std::vector<ActivityType>& types,
                       const std::vector<std::string>& filler, std::size_t index, SeededRng rng) {
  const std::size_t t = c.frames;
  const std::size_t k = 1 + rng.uniform_index(c.k_max);
  const double lo = std::max(2.0, c.min_width * t);
  const double hi = std::max(lo, std::min(c.max_width, 0.9 / static_cast<double>(k)) * t);

  std::vector<std::pair<std::size_t, std::size_t>> spans;
  bool placed = false;
  for (std::size_t attempt = 0; attempt < c.attempts && !placed; ++attempt) {
    spans.clear();
    placed = true;
    for (std::size_t e = 0; e < k && placed; ++e) {
      const auto w = std::min<std::size_t>(t, static_cast<std::size_t>(std::lround(rng.uniform(lo, hi))));
      const std::size_t s = rng.uniform_index(t - w + 1);
      // judged on the emitted normalized segments so the cap holds bit-for-bit downstream
      const double td = static_cast<double>(t);
      const Segment cand{static_cast<double>(s) / td, static_cast<double>(s + w) / td};
      for (const auto& [os, oe] : spans)
        if (tiou(cand, {static_cast<double>(os) / td, static_cast<double>(oe) / td}) > c.max_overlap) placed = false;
      if (placed) spans.emplace_back(s, s + w);
    }
  }
  if (!placed) {
    throw Error("gen-data: could not place " + std::to_string(k) + " events with IOU <= " +
                std::to_string(c.max_overlap) + " in " + std::to_string(c.attempts) + " attempts (video " +
                video_id(index) + ", T=" + std::to_string(t) + ", widths " + std::to_string(lo) + ".." +
                std::to_string(hi) + " frames)");
  }
  std::sort(spans.begin(), spans.end());

  VideoRecord v;
  v.id = video_id(index);
  v.features = Matrix(t, c.dim);
  for (auto& x : v.features.values()) x = rng.normal(0.0, c.noise);
  // distinct activity types within a video
  const auto chosen = rng.sample_without_replacement(types.size(), spans.size());
  for (std::size_t e = 0; e < spans.size(); ++e) {
    const ActivityType& type = types[chosen[e]];
    for (std::size_t f = spans[e].first; f < spans[e].second; ++f) axpy(c.strength, type.signature, v.features.row(f));
    EventRecord ev;
    ev.segment = {static_cast<double>(spans[e].first) / t, static_cast<double>(spans[e].second) / t};
    for (const auto& tok : type.caption)
      ev.tokens.push_back(rng.bernoulli(c.jitter) ? filler[rng.uniform_index(filler.size())] : tok);
    v.events.push_back(std::move(ev));
  }
  return v;
}

json config_json(const SyntheticConfig& c) {
  return {{"train_videos", c.train_videos}, {"val_videos", c.val_videos}, {"frames", c.frames},
          {"dim", c.dim},                   {"types", c.types},           {"vocab", c.vocab},
          {"caption_min", c.caption_min},   {"caption_max", c.caption_max}, {"k_max", c.k_max},
          {"noise", c.noise},               {"strength", c.strength},     {"jitter", c.jitter},
          {"max_overlap", c.max_overlap},   {"min_width", c.min_width},   {"max_width", c.max_width},
          {"attempts", c.attempts}};
}

SyntheticConfig config_from_json(const json& j) {
  SyntheticConfig c;
  c.train_videos = j.at("train_videos");
  c.val_videos = j.at("val_videos");
  c.frames = j.at("frames");
  c.dim = j.at("dim");
  c.types = j.at("types");
  c.vocab = j.at("vocab");
  c.caption_min = j.at("caption_min");
  c.caption_max = j.at("caption_max");
  c.k_max = j.at("k_max");
  c.noise = j.at("noise");
  c.strength = j.at("strength");
  c.jitter = j.at("jitter");
  c.max_overlap = j.at("max_overlap");
  c.min_width = j.at("min_width");
  c.max_width = j.at("max_width");
  c.attempts = j.at("attempts");
  return c;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << s;
}

}  // namespace

void SyntheticConfig::validate() const {
  check(train_videos >= 1, "train_videos", "must be >= 1");
  check(frames >= 2, "frames", "must be >= 2");
  check(dim >= 1, "dim", "must be >= 1");
  check(types >= 1, "types", "must be >= 1");
  check(caption_min >= 1 && caption_min <= caption_max, "caption_min", "must satisfy 1 <= caption_min <= caption_max");
  check(vocab >= types * caption_min, "vocab", "too small for disjoint caption templates");
  check(k_max >= 1 && k_max <= types, "k_max", "must lie in [1, types]");
  check(noise >= 0.0, "noise", "must be >= 0");
  check(strength >= 0.0, "strength", "must be >= 0");
  check(jitter >= 0.0 && jitter <= 1.0, "jitter", "must lie in [0, 1]");
  check(max_overlap >= 0.0 && max_overlap <= 1.0, "max_overlap", "must lie in [0, 1]");
  check(min_width > 0.0 && min_width <= max_width && max_width <= 1.0, "min_width",
        "must satisfy 0 < min_width <= max_width <= 1");
  check(attempts >= 1, "attempts", "must be >= 1");
}

TextEmbedder::TextEmbedder(std::vector<std::string> tokens, Matrix projection)
    : tokens_(std::move(tokens)), projection_(std::move(projection)) {
  require(projection_.rows() == tokens_.size(), "TextEmbedder: one projection row per token");
  for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], i);
}

TextEmbedder TextEmbedder::random(std::vector<std::string> tokens, std::size_t d, SeededRng& rng) {
  Matrix proj(tokens.size(), d);
  for (auto& v : proj.values()) v = rng.normal();
  return TextEmbedder(std::move(tokens), std::move(proj));
}

Vector TextEmbedder::embed(const std::vector<std::string>& tokens) const {
  require(!tokens.empty(), "embed_text: empty token list");
  Vector v(dim(), 0.0);
  for (const auto& tok : tokens) {
    const auto it = index_.find(tok);
    require(it != index_.end(), "embed_text: unknown token '" + tok + "'");
    axpy(1.0, projection_.row(it->second), v);
  }
  const double n = norm(v);
  require(n > 1e-12, "embed_text: tokens cancel to a zero vector");
  for (double& x : v) x /= n;
  return v;
}

std::vector<std::vector<TaggedToken>> Dataset::tagged_train_captions() const {
  std::unordered_map<std::string, PosTag> tags;
  for (const auto& t : lexicon) tags.emplace(t.token, t.tag);
  std::vector<std::vector<TaggedToken>> out;
  for (const auto& v : train)
    for (const auto& e : v.events) {
      std::vector<TaggedToken> cap;
      for (const auto& tok : e.tokens) {
        const auto it = tags.find(tok);
        cap.push_back({tok, it == tags.end() ? PosTag::other : it->second});
      }
      out.push_back(std::move(cap));
    }
  return out;
}

std::string video_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "vid-%04zu", index);
  return buf;
}

Dataset generate_dataset(const SyntheticConfig& config, std::uint64_t seed) {
  config.validate();
  Dataset data;
  data.seed = seed;
  data.config = config;
  const SeededRng root(seed);
  SeededRng global = root.substream("data", 0);

  static const PosTag kCycle[] = {PosTag::noun, PosTag::verb, PosTag::adj};
  std::vector<std::string> all_tokens;
  for (std::size_t i = 0; i < config.vocab; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "w%02zu", i);
    data.lexicon.push_back({buf, kCycle[i % 3]});
    all_tokens.push_back(buf);
  }
  data.filler = kFiller;
  all_tokens.insert(all_tokens.end(), kFiller.begin(), kFiller.end());
  data.embedder = TextEmbedder::random(all_tokens, config.dim, global);

  // Disjoint templates: lengths cycle base-1, base, base+1 around the even
  // share of the vocabulary, clamped to the caption length bounds.
  const std::size_t share = config.vocab / config.types;
  const auto perm = global.sample_without_replacement(config.vocab, config.vocab);
  std::size_t used = 0;
  for (std::size_t k = 0; k < config.types; ++k) {
    const long want = static_cast<long>(share) + static_cast<long>(k % 3) - 1;
    std::size_t len = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(1L, want)), config.caption_min,
                                              config.caption_max);
    len = std::min(len, config.vocab - used - (config.types - 1 - k) * config.caption_min);
    ActivityType type;
    for (std::size_t i = 0; i < len; ++i) type.caption.push_back(data.lexicon[perm[used + i]].token);
    used += len;
    type.signature = data.embedder.embed(type.caption);
    data.types.push_back(std::move(type));
  }

  for (std::size_t i = 0; i < config.train_videos; ++i)
    data.train.push_back(make_video(config, data.types, data.filler, i, root.substream("data", 1 + i)));
  for (std::size_t i = 0; i < config.val_videos; ++i) {
    const std::size_t index = config.train_videos + i;
    data.val.push_back(make_video(config, data.types, data.filler, index, root.substream("data", 1 + index)));
  }

  for (const auto& v : data.train)
    for (const auto& e : v.events)
      data.corpus.entries.push_back({data.corpus.size(), v.id, e.tokens, data.embedder.embed(e.tokens)});
  return data;
}

std::string write_dataset(const Dataset& data, const fs::path& root) {
  fs::create_directories(root / "features");

  json lexicon = json::array();
  for (const auto& t : data.lexicon) lexicon.push_back({{"token", t.token}, {"tag", to_string(t.tag)}});
  json projection = json::array();
  for (std::size_t r = 0; r < data.embedder.projection().rows(); ++r) {
    const auto row = data.embedder.projection().row(r);
    projection.push_back(Vector(row.begin(), row.end()));
  }
  json types = json::array();
  for (const auto& t : data.types) types.push_back({{"signature", t.signature}, {"caption", t.caption}});
  json train_ids = json::array(), val_ids = json::array();
  for (const auto& v : data.train) train_ids.push_back(v.id);
  for (const auto& v : data.val) val_ids.push_back(v.id);
  const json manifest = {{"format", "cyclecap-synthetic"},
                         {"version", 1},
                         {"seed", data.seed},
                         {"config", config_json(data.config)},
                         {"lexicon", lexicon},
                         {"filler", data.filler},
                         {"text_embedding", {{"tokens", data.embedder.tokens()}, {"projection", projection}}},
                         {"types", types},
                         {"splits", {{"train", train_ids}, {"val", val_ids}}}};
  write_text(root / "manifest.json", manifest.dump(1) + "\n");

  // vocab.json: the tagged lexicon with train-split frequencies, in concept order
  std::vector<ConceptWord> words;
  std::unordered_map<std::string, std::size_t> freq;
  for (const auto& cap : data.tagged_train_captions())
    for (const auto& t : cap) ++freq[t.token];
  for (const auto& t : data.lexicon) words.push_back({t.token, t.tag, freq[t.token]});
  std::stable_sort(words.begin(), words.end(), [](const auto& a, const auto& b) {
    return a.freq != b.freq ? a.freq > b.freq : a.token < b.token;
  });
  ConceptVocabulary(std::move(words)).save(root / "vocab.json");

  save_corpus(data.corpus, root / "corpus.jsonl");

  std::ostringstream ann;
  for (const auto* split : {&data.train, &data.val})
    for (const auto& v : *split) {
      json events = json::array();
      for (const auto& e : v.events)
        events.push_back({{"start", e.segment.start}, {"end", e.segment.end}, {"tokens", e.tokens}});
      ann << json{{"video", v.id}, {"events", events}}.dump() << '\n';
      save_features(v.features, root / "features" / (v.id + ".ccfv"));
    }
  write_text(root / "annotations.jsonl", ann.str());
  return tree_digest(root);
}

Dataset load_dataset(const fs::path& root) {
  std::ifstream in(root / "manifest.json");
  if (!in) throw Error("cannot open " + (root / "manifest.json").string());
  Dataset data;
  std::unordered_map<std::string, std::vector<EventRecord>> events;
  try {
    const json m = json::parse(in);
    if (m.at("format") != "cyclecap-synthetic") throw ArtifactMismatch("manifest: unknown format");
    data.seed = m.at("seed");
    data.config = config_from_json(m.at("config"));
    for (const auto& t : m.at("lexicon")) data.lexicon.push_back({t.at("token"), parse_tag(t.at("tag"))});
    data.filler = m.at("filler").get<std::vector<std::string>>();
    const auto& te = m.at("text_embedding");
    const auto rows = te.at("projection").get<std::vector<Vector>>();
    Matrix proj(rows.size(), rows.empty() ? 0 : rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) std::copy(rows[r].begin(), rows[r].end(), proj.row(r).begin());
    data.embedder = TextEmbedder(te.at("tokens").get<std::vector<std::string>>(), std::move(proj));
    for (const auto& t : m.at("types"))
      data.types.push_back({t.at("signature").get<Vector>(), t.at("caption").get<std::vector<std::string>>()});

    std::ifstream ann(root / "annotations.jsonl");
    if (!ann) throw Error("cannot open " + (root / "annotations.jsonl").string());
    std::string line;
    while (std::getline(ann, line)) {
      if (line.empty()) continue;
      const json j = json::parse(line);
      auto& list = events[j.at("video").get<std::string>()];
      for (const auto& e : j.at("events"))
        list.push_back({{e.at("start").get<double>(), e.at("end").get<double>()},
                        e.at("tokens").get<std::vector<std::string>>()});
    }
    auto load_split = [&](const json& ids, std::vector<VideoRecord>& out) {
      for (const auto& id : ids) {
        VideoRecord v;
        v.id = id.get<std::string>();
        v.features = load_features(root / "features" / (v.id + ".ccfv"));
        if (v.features.rows() != data.config.frames || v.features.cols() != data.config.dim)
          throw ArtifactMismatch("features of " + v.id + " disagree with manifest T/d");
        const auto it = events.find(v.id);
        if (it == events.end()) throw ArtifactMismatch("no annotations for " + v.id);
        v.events = it->second;
        out.push_back(std::move(v));
      }
    };
    load_split(m.at("splits").at("train"), data.train);
    load_split(m.at("splits").at("val"), data.val);
  } catch (const json::exception& ex) {
    throw Error("dataset " + root.string() + ": " + ex.what());
  }
  data.corpus = load_corpus(root / "corpus.jsonl");
  return data;
}

std::string tree_digest(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(root))
    if (entry.is_regular_file()) files.push_back(fs::relative(entry.path(), root));
  std::sort(files.begin(), files.end());
  std::string acc;
  for (const auto& rel : files) {
    std::ifstream in(root / rel, std::ios::binary);
    const std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    acc += rel.generic_string() + ":" + hex64(fnv1a64(body)) + "\n";
  }
  return hex64(fnv1a64(acc));
}

}  // namespace cyclecap
