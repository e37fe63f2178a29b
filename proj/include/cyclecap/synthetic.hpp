#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "cyclecap/concepts.hpp"
#include "cyclecap/matrix.hpp"
#include "cyclecap/retrieval.hpp"
#include "cyclecap/rng.hpp"
#include "cyclecap/segment.hpp"

namespace cyclecap {

struct SyntheticConfig {
  std::size_t train_videos = 200;
  std::size_t val_videos = 50;
  std::size_t frames = 100;  // T
  std::size_t dim = 32;      // d
  std::size_t types = 12;
  std::size_t vocab = 60;    // tagged content tokens
  std::size_t caption_min = 3;
  std::size_t caption_max = 6;
  std::size_t k_max = 5;
  double noise = 0.1;
  double strength = 1.0;
  double jitter = 0.1;
  double max_overlap = 0.2;  // pairwise IOU cap
  double min_width = 0.08;   // fraction of T (and at least 2 frames)
  double max_width = 0.4;    // fraction of T, further capped at 0.9 / k
  std::size_t attempts = 100;

  void validate() const;  // throws ConfigError
};

// Deterministic bag-of-tokens text embedding: token counts times a fixed
// random projection, L2-normalised.
class TextEmbedder {
 public:
  TextEmbedder() = default;
  TextEmbedder(std::vector<std::string> tokens, Matrix projection);

  static TextEmbedder random(std::vector<std::string> tokens, std::size_t d, SeededRng& rng);

  Vector embed(const std::vector<std::string>& tokens) const;
  std::size_t dim() const { return projection_.cols(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const Matrix& projection() const { return projection_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
  Matrix projection_;
};

struct ActivityType {
  Vector signature;  // unit norm
  std::vector<std::string> caption;
};

struct EventRecord {
  Segment segment;
  std::vector<std::string> tokens;
};

struct VideoRecord {
  std::string id;
  Matrix features;  // T × d
  std::vector<EventRecord> events;
};

struct Dataset {
  std::uint64_t seed = 0;
  SyntheticConfig config;
  std::vector<TaggedToken> lexicon;  // tagged content tokens
  std::vector<std::string> filler;   // untagged jitter tokens
  TextEmbedder embedder;
  std::vector<ActivityType> types;
  std::vector<VideoRecord> train;
  std::vector<VideoRecord> val;
  SentenceCorpus corpus;  // every train caption

  // Tagged captions of the train split, for build_vocabulary.
  std::vector<std::vector<TaggedToken>> tagged_train_captions() const;
};

Dataset generate_dataset(const SyntheticConfig& config, std::uint64_t seed);

// Writes manifest.json, vocab.json, corpus.jsonl, annotations.jsonl and
// features/<id>.ccfv under `root`. Returns the tree digest.
std::string write_dataset(const Dataset& data, const std::filesystem::path& root);
Dataset load_dataset(const std::filesystem::path& root);

// FNV-1a over relative paths and contents of every file, in sorted order.
std::string tree_digest(const std::filesystem::path& root);

std::string video_id(std::size_t index);

}  // namespace cyclecap
