#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cyclecap/param_store.hpp"
#include "cyclecap/rng.hpp"
#include "cyclecap/tape.hpp"

namespace cyclecap {

enum class PosTag { noun, adj, verb, other };

const char* to_string(PosTag tag);
// "noun" | "adj" | "verb"; anything else is `other` (not eligible).
PosTag parse_tag(const std::string& s);

struct TaggedToken {
  std::string token;
  PosTag tag = PosTag::other;
};

struct ConceptWord {
  std::string token;
  PosTag tag = PosTag::noun;
  std::size_t freq = 0;
};

// Concept vocabulary E, ordered by descending frequency, ties by token.
class ConceptVocabulary {
 public:
  ConceptVocabulary() = default;
  explicit ConceptVocabulary(std::vector<ConceptWord> words);

  const std::vector<ConceptWord>& words() const { return words_; }
  std::size_t size() const { return words_.size(); }
  std::optional<std::size_t> find(const std::string& token) const;

  // JSON array of {"token", "tag", "freq"}.
  void save(const std::filesystem::path& path) const;
  static ConceptVocabulary load(const std::filesystem::path& path);
  std::string to_json() const;
  static ConceptVocabulary from_json(const std::string& text);

 private:
  std::vector<ConceptWord> words_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Top-N_C nouns/adjectives/verbs by frequency over the tagged captions.
// Fewer eligible tokens than N_C yields all of them with a warning.
ConceptVocabulary build_vocabulary(const std::vector<std::vector<TaggedToken>>& captions, std::size_t n_c);

// Multi-hot Y^C: bit i set iff word i occurs in any caption.
Vector label_video(const std::vector<std::vector<std::string>>& captions, const ConceptVocabulary& vocab);

struct ContrastivePair {
  Vector positive;
  Vector negative;
};

// N_S (positive, negative) label pairs; empty when Y^C has no active or no
// inactive bit.
std::vector<ContrastivePair> sample_contrastive(const Vector& label, std::size_t n_s, SeededRng& rng);

// Parameter handles of the concept head.
struct ConceptParams {
  ParamId fc_weight;  // d × N_C
  ParamId fc_bias;    // 1 × N_C
  ParamId temporal;   // d × 1 (W^tp)
  ParamId embedding;  // N_C × d (W^C)

  static ConceptParams create(ParamStore& store, std::size_t d, std::size_t n_c, SeededRng& init);
  static ConceptParams find(const ParamStore& store);
};

struct ConceptForward {
  Var frame_probs;    // p, T × N_C
  Var attention;      // α, 1 × T
  Var video_probs;    // P^v, 1 × N_C
  Var frame_concept;  // f^c, T × d
  Var video_concept;  // f^vc, 1 × d
  Var enhanced;       // F̃ = F + f^c
};

ConceptForward concept_forward(Tape& t, ParamStore& store, const ConceptParams& params, Var features);

// -Σ_i [Y_i log P^v_i + (1 - Y_i) log(1 - P^v_i)] with clamped logs.
Var mil_loss(Tape& t, Var video_probs, const Vector& label);

// Mean over pairs of max(0, cos(f^vc, Y⁻W^C) - cos(f^vc, Y⁺W^C) + δ); zero
// for an empty pair list.
Var triplet_loss(Tape& t, Var video_concept, Var concept_embedding, const std::vector<ContrastivePair>& pairs,
                 double margin);

}  // namespace cyclecap
