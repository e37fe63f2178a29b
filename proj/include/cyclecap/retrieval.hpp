#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cyclecap/error.hpp"
#include "cyclecap/matrix.hpp"

namespace cyclecap {

struct SentenceEntry {
  std::size_t id = 0;
  std::string video;
  std::vector<std::string> tokens;
  Vector embedding;  // unit norm
};

// Sentence corpus U. Ids are dense 0..M-1 and equal to the entry position.
struct SentenceCorpus {
  std::vector<SentenceEntry> entries;

  std::size_t size() const { return entries.size(); }
  std::size_t dim() const { return entries.empty() ? 0 : entries.front().embedding.size(); }
  // Throws ContractViolation if ids are not dense or an embedding is not
  // unit norm within 1e-9.
  void validate() const;
};

// JSON Lines: {"id", "video", "tokens", "embedding"} per line.
SentenceCorpus load_corpus(const std::filesystem::path& path);
void save_corpus(const SentenceCorpus& corpus, const std::filesystem::path& path);

// "CCFV" container: T u64, d u64, T*d f64 little-endian.
Matrix load_features(const std::filesystem::path& path);
void save_features(const Matrix& features, const std::filesystem::path& path);

struct ChunkFeatures {
  Matrix chunks;                                            // W' × d
  std::vector<std::pair<std::size_t, std::size_t>> spans;  // [begin, end) frame ranges
};

// Even partition into W' = min(W, T) chunks, each pooled by its mean.
ChunkFeatures build_chunks(const Matrix& frames, std::size_t w);

// No eligible corpus entry for a query.
class CorpusExhausted : public Error {
 public:
  CorpusExhausted() : Error("corpus exhausted") {}
};

// Top-N_K entry ids by cosine similarity, descending, ties by ascending id.
std::vector<std::size_t> retrieve_topk(std::span<const double> query, const SentenceCorpus& corpus, std::size_t n_k,
                                       const std::optional<std::string>& exclude_video = std::nullopt);

// F^s: row i is the mean of the embeddings retrieved for chunk i.
Matrix semantic_features(const ChunkFeatures& chunks, const SentenceCorpus& corpus, std::size_t n_k,
                         const std::optional<std::string>& exclude_video = std::nullopt);

// F = rowsoftmax(F^v F^sᵀ / √d) F^s, plus F^v when `residual` is set.
Matrix fuse(const Matrix& frames, const Matrix& semantics, bool residual);

// Full retrieval path for one video: chunk, retrieve, fuse. An exhausted
// corpus falls back to a zero semantic feature.
Matrix retrieval_features(const Matrix& frames, const SentenceCorpus& corpus, std::size_t w, std::size_t n_k,
                          const std::optional<std::string>& exclude_video, bool residual);

}  // namespace cyclecap
