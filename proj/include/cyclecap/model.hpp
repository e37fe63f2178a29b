#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cyclecap/concepts.hpp"
#include "cyclecap/config.hpp"
#include "cyclecap/decoder.hpp"
#include "cyclecap/hungarian.hpp"
#include "cyclecap/losses.hpp"
#include "cyclecap/param_store.hpp"
#include "cyclecap/synthetic.hpp"

namespace cyclecap {

// Everything needed to run the network: effective config, caption token
// list (0 = <eos>, 1 = <bos>), concept vocabulary and parameters.
struct Model {
  RunConfig config;
  DecoderDims dims;
  std::vector<std::string> tokens;
  ConceptVocabulary concepts;
  ParamStore params;
  std::optional<ConceptParams> concept_head;  // present iff toggles.mcd
  DecoderParams decoder;

  // Fresh parameters from the "init" substream of config.seed.
  static Model create(const RunConfig& config, const Dataset& data);
  // Builds a model from explicit parts (used by the grad-check fixture).
  static Model create(const RunConfig& config, std::vector<std::string> tokens, ConceptVocabulary concepts);

  std::size_t token_id(const std::string& token) const;

  // Writes <path> (CCAP parameters) and the sidecar from sidecar_path(path).
  void save(const std::filesystem::path& path) const;
  // Throws ArtifactMismatch when the parameters disagree with the sidecar.
  static Model load(const std::filesystem::path& path);
  static std::filesystem::path sidecar_path(const std::filesystem::path& path);
};

// Per-video training/inference inputs.
struct Example {
  std::string id;
  Matrix features;  // decoder input: fused F when v2t is on, raw F^v otherwise
  Vector concept_label;
  std::vector<Segment> segments;
  std::vector<std::vector<std::size_t>> captions;  // token ids, each ending with <eos>
  Matrix caption_embeddings;                       // z_j, N* × d
};

// `training` enables the retrieval self-exclusion when configured.
Example prepare_example(const Model& model, const VideoRecord& video, const Dataset& data, bool training);
std::vector<Example> prepare_examples(const Model& model, const std::vector<VideoRecord>& videos, const Dataset& data,
                                      bool training, std::size_t threads);

struct LossBreakdown {
  double l_giou = 0.0;
  double l_cap = 0.0;
  double l_sem = 0.0;
  double l_cls = 0.0;
  double l_ct = 0.0;
  double l_tri = 0.0;
  double l_mil = 0.0;
  double total = 0.0;
};

// Matchings and contrastive draws of one forward pass. Passing a filled
// instance back in reuses them, which makes the loss a smooth function of
// the parameters (needed by the finite-difference check).
struct FrozenDraws {
  bool filled = false;
  Matching location, semantic, set;
  std::vector<ContrastivePair> pairs;
};

enum class Component { mil, tri, lg, sem, sg, cyc, cls, ct, set, total };
const char* to_string(Component c);
inline constexpr Component kAllComponents[] = {Component::mil, Component::tri, Component::lg,  Component::sem,
                                               Component::sg,  Component::cyc, Component::cls, Component::ct,
                                               Component::set, Component::total};

struct ForwardResult {
  Var total;
  LossBreakdown breakdown;
  // Filled only when every component was requested.
  std::vector<std::pair<Component, Var>> components;
};

// Training loss for one video. `sampling` drives the contrastive draws when
// `frozen` is null or empty. With `all_components` every named loss is built
// regardless of mode (slower; for gradient checks).
ForwardResult forward_loss(Tape& t, Model& model, const Example& ex, SeededRng& sampling, FrozenDraws* frozen = nullptr,
                           bool all_components = false);

struct PredictedEvent {
  Segment segment;
  double confidence = 0.0;
  std::vector<std::string> tokens;
};

struct Prediction {
  std::string video;
  std::vector<PredictedEvent> events;
};

// Runs the network and keeps the N_set most confident queries, each with its
// greedy caption. Reads the parameters only.
Prediction infer(Model& model, const Example& ex);
std::vector<Prediction> infer_all(Model& model, const std::vector<Example>& examples, std::size_t threads);

// Video-level concept probabilities P^v (1 × N_C) and frame probabilities
// (T × N_C); requires the concept head.
struct ConceptScores {
  Matrix video;
  Matrix frames;
};
ConceptScores concept_scores(Model& model, const Example& ex);

}  // namespace cyclecap
