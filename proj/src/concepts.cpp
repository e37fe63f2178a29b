#include "cyclecap/concepts.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <map>

#include <json.hpp>

#include "cyclecap/error.hpp"
#include "cyclecap/log.hpp"

namespace cyclecap {

using nlohmann::json;

const char* to_string(PosTag tag) {
  switch (tag) {
    case PosTag::noun: return "noun";
    case PosTag::adj: return "adj";
    case PosTag::verb: return "verb";
    case PosTag::other: return "other";
  }
  return "other";
}

PosTag parse_tag(const std::string& s) {
  if (s == "noun") return PosTag::noun;
  if (s == "adj") return PosTag::adj;
  if (s == "verb") return PosTag::verb;
  return PosTag::other;
}

ConceptVocabulary::ConceptVocabulary(std::vector<ConceptWord> words) : words_(std::move(words)) {
  for (std::size_t i = 0; i < words_.size(); ++i) {
    require(words_[i].tag != PosTag::other, "concept vocabulary: ineligible tag for " + words_[i].token);
    const bool fresh = index_.emplace(words_[i].token, i).second;
    require(fresh, "concept vocabulary: duplicate token " + words_[i].token);
  }
}

std::optional<std::size_t> ConceptVocabulary::find(const std::string& token) const {
  const auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::string ConceptVocabulary::to_json() const {
  json arr = json::array();
  for (const auto& w : words_) arr.push_back({{"token", w.token}, {"tag", to_string(w.tag)}, {"freq", w.freq}});
  return arr.dump(1);
}

ConceptVocabulary ConceptVocabulary::from_json(const std::string& text) {
  std::vector<ConceptWord> words;
  try {
    const json arr = json::parse(text);
    if (!arr.is_array()) throw Error("vocabulary: expected an array");
    for (const auto& j : arr) {
      ConceptWord w;
      w.token = j.at("token").get<std::string>();
      w.tag = parse_tag(j.at("tag").get<std::string>());
      if (w.tag == PosTag::other) throw Error("vocabulary: bad tag for " + w.token);
      w.freq = j.at("freq").get<std::size_t>();
      words.push_back(std::move(w));
    }
  } catch (const json::exception& ex) {
    throw Error(std::string("vocabulary: ") + ex.what());
  }
  return ConceptVocabulary(std::move(words));
}

void ConceptVocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write vocabulary " + path.string());
  out << to_json() << '\n';
}

ConceptVocabulary ConceptVocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open vocabulary " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

ConceptVocabulary build_vocabulary(const std::vector<std::vector<TaggedToken>>& captions, std::size_t n_c) {
  std::map<std::string, ConceptWord> counts;
  for (const auto& cap : captions)
    for (const auto& tok : cap) {
      if (tok.tag == PosTag::other) continue;
      auto& w = counts[tok.token];
      w.token = tok.token;
      w.tag = tok.tag;
      ++w.freq;
    }
  std::vector<ConceptWord> words;
  words.reserve(counts.size());
  for (auto& [_, w] : counts) words.push_back(std::move(w));
  // std::map iteration is already lexicographic; a stable sort keeps that
  // order among equal frequencies.
  std::stable_sort(words.begin(), words.end(), [](const auto& a, const auto& b) { return a.freq > b.freq; });
  if (words.size() < n_c) {
    warn("concept vocabulary: only " + std::to_string(words.size()) + " eligible tokens, requested " +
         std::to_string(n_c));
  } else {
    words.resize(n_c);
  }
  return ConceptVocabulary(std::move(words));
}

Vector label_video(const std::vector<std::vector<std::string>>& captions, const ConceptVocabulary& vocab) {
  Vector y(vocab.size(), 0.0);
  for (const auto& cap : captions)
    for (const auto& tok : cap)
      if (const auto i = vocab.find(tok)) y[*i] = 1.0;
  return y;
}

std::vector<ContrastivePair> sample_contrastive(const Vector& label, std::size_t n_s, SeededRng& rng) {
  require(n_s >= 1, "sample_contrastive: N_S must be >= 1");
  std::vector<std::size_t> active, inactive;
  for (std::size_t i = 0; i < label.size(); ++i) (label[i] > 0.5 ? active : inactive).push_back(i);
  std::vector<ContrastivePair> pairs;
  if (active.empty() || inactive.empty()) return pairs;
  const std::size_t n = label.size();
  const std::size_t m = std::max<std::size_t>(1, active.size());
  for (std::size_t s = 0; s < n_s; ++s) {
    ContrastivePair p{Vector(n, 0.0), Vector(n, 0.0)};
    p.positive[active[rng.uniform_index(active.size())]] = 1.0;
    for (std::size_t k = 1; k < m; ++k) p.positive[rng.uniform_index(n)] = 1.0;
    const std::size_t mn = std::min(m, inactive.size());
    for (std::size_t k : rng.sample_without_replacement(inactive.size(), mn)) p.negative[inactive[k]] = 1.0;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

ConceptParams ConceptParams::create(ParamStore& store, std::size_t d, std::size_t n_c, SeededRng& init) {
  ConceptParams p;
  p.fc_weight = store.add("concept.fc_weight", init_uniform(d, n_c, d, init));
  p.fc_bias = store.add("concept.fc_bias", init_uniform(1, n_c, d, init));
  p.temporal = store.add("concept.temporal", init_uniform(d, 1, d, init));
  p.embedding = store.add("concept.embedding", init_uniform(n_c, d, n_c, init));
  return p;
}

ConceptParams ConceptParams::find(const ParamStore& store) {
  return {store.id("concept.fc_weight"), store.id("concept.fc_bias"), store.id("concept.temporal"),
          store.id("concept.embedding")};
}

ConceptForward concept_forward(Tape& t, ParamStore& store, const ConceptParams& params, Var features) {
  ConceptForward out;
  const Var w = t.param(store, params.fc_weight);
  const Var b = t.param(store, params.fc_bias);
  const Var wtp = t.param(store, params.temporal);
  const Var wc = t.param(store, params.embedding);
  out.frame_probs = op::sigmoid(t, op::add_row(t, op::matmul(t, features, w), b));
  out.attention = op::softmax_rows(t, op::transpose(t, op::matmul(t, features, wtp)));
  out.video_probs = op::matmul(t, out.attention, out.frame_probs);
  out.frame_concept = op::matmul(t, out.frame_probs, wc);
  out.video_concept = op::matmul(t, out.video_probs, wc);
  out.enhanced = op::add(t, features, out.frame_concept);
  return out;
}

Var mil_loss(Tape& t, Var video_probs, const Vector& label) {
  const Matrix& pv = t.value(video_probs);
  require(pv.rows() == 1 && pv.cols() == label.size(), "mil_loss: label length differs from N_C");
  Matrix y(1, label.size()), ny(1, label.size());
  for (std::size_t i = 0; i < label.size(); ++i) {
    y(0, i) = label[i];
    ny(0, i) = 1.0 - label[i];
  }
  const Var pos = op::mul(t, op::clamped_log(t, video_probs), t.constant(std::move(y)));
  const Var neg = op::mul(t, op::clamped_log(t, op::affine(t, video_probs, -1.0, 1.0)), t.constant(std::move(ny)));
  return op::scale(t, op::sum(t, op::add(t, pos, neg)), -1.0);
}

Var triplet_loss(Tape& t, Var video_concept, Var concept_embedding, const std::vector<ContrastivePair>& pairs,
                 double margin) {
  require(margin >= 0.0, "triplet_loss: margin must be >= 0");
  if (pairs.empty()) return t.constant(Matrix(1, 1));
  const std::size_t n_c = t.value(concept_embedding).rows();
  Matrix pos(pairs.size(), n_c), neg(pairs.size(), n_c);
  for (std::size_t s = 0; s < pairs.size(); ++s) {
    require(pairs[s].positive.size() == n_c && pairs[s].negative.size() == n_c, "triplet_loss: label length");
    std::copy(pairs[s].positive.begin(), pairs[s].positive.end(), pos.row(s).begin());
    std::copy(pairs[s].negative.begin(), pairs[s].negative.end(), neg.row(s).begin());
  }
  const Var fp = op::matmul(t, t.constant(std::move(pos)), concept_embedding);
  const Var fn = op::matmul(t, t.constant(std::move(neg)), concept_embedding);
  const Var sp = op::cosine_rows(t, video_concept, fp);  // 1 × N_S
  const Var sn = op::cosine_rows(t, video_concept, fn);
  const Var hinge = op::relu(t, op::affine(t, op::sub(t, sn, sp), 1.0, margin));
  return op::scale(t, op::sum(t, hinge), 1.0 / static_cast<double>(pairs.size()));
}

}  // namespace cyclecap
