#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "cyclecap/decoder.hpp"
#include "cyclecap/losses.hpp"
#include "cyclecap/synthetic.hpp"

namespace cyclecap {

enum class Optimizer { sgd, adam };

struct RetrievalConfig {
  std::size_t chunks = 20;  // W
  std::size_t top_k = 10;   // N_K
  bool fuse_residual = true;
  bool exclude_self = true;  // training only; inference never excludes
};

struct ConceptConfig {
  std::size_t vocab = 60;    // N_C
  std::size_t samples = 10;  // N_S
  double margin = 0.5;       // δ
};

struct DecoderConfig {
  std::size_t queries = 10;
  std::size_t k_max = 5;
  std::size_t max_len = 8;
  double sigma = 0.1;
  std::size_t layers = 2;
  std::size_t ff_hidden = 64;
  std::size_t embed = 16;
  std::size_t position_dims = 8;
  bool anchors = true;
  double gen_sigma = 0.0;
  CounterPool counter_pool = CounterPool::mean;
};

struct LossConfig {
  LossWeights weights;
  bool aux_losses = true;
};

struct TrainConfig {
  LossMode mode = LossMode::cyc;
  Optimizer optimizer = Optimizer::adam;
  double learning_rate = 0.001;
  double momentum = 0.9;
  bool cosine_decay = true;
  double clip_norm = 0.0;  // 0 disables
  std::size_t epochs = 50;
  std::size_t batch_size = 2;
  std::size_t eval_every = 1;
};

struct Toggles {
  bool v2t = true;
  bool mcd = true;
  bool cyc = true;
};

struct RunConfig {
  std::uint64_t seed = 42;
  SyntheticConfig data;
  RetrievalConfig retrieval;
  ConceptConfig concepts;
  DecoderConfig decoder;
  LossConfig loss;
  TrainConfig train;
  Toggles toggles;

  // The matching-loss actually used: cyc=false falls back to the set
  // baseline.
  LossMode effective_mode() const { return toggles.cyc ? train.mode : LossMode::pdvc; }

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Missing keys keep their defaults; unknown keys and ill-typed values throw
// ConfigError.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& c);
RunConfig load_config(const std::string& path);

}  // namespace cyclecap
