#include "cyclecap/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "cyclecap/binary_io.hpp"
#include "cyclecap/numerics.hpp"

namespace cyclecap {

using nlohmann::json;

void SentenceCorpus::validate() const {
  const std::size_t d = dim();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    require(e.id == i, "corpus: ids must be dense 0..M-1 in file order");
    require(e.embedding.size() == d, "corpus: embedding dimension differs at id " + std::to_string(i));
    require(std::abs(norm(e.embedding) - 1.0) <= 1e-9, "corpus: embedding not unit norm at id " + std::to_string(i));
  }
}

SentenceCorpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus " + path.string());
  SentenceCorpus corpus;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      SentenceEntry e;
      e.id = j.at("id").get<std::size_t>();
      e.video = j.at("video").get<std::string>();
      e.tokens = j.at("tokens").get<std::vector<std::string>>();
      e.embedding = j.at("embedding").get<Vector>();
      corpus.entries.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    }
  }
  corpus.validate();
  return corpus;
}

void save_corpus(const SentenceCorpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write corpus " + path.string());
  for (const auto& e : corpus.entries) {
    const json j = {{"id", e.id}, {"video", e.video}, {"tokens", e.tokens}, {"embedding", e.embedding}};
    out << j.dump() << '\n';
  }
}

Matrix load_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open features " + path.string());
  binary::expect_magic(in, "CCFV");
  const auto t = binary::read_le<std::uint64_t>(in, "T");
  const auto d = binary::read_le<std::uint64_t>(in, "d");
  if (t * d > (std::uint64_t{1} << 30)) throw Error("features: implausible shape in " + path.string());
  Matrix m(t, d);
  for (auto& v : m.values()) v = binary::read_le<double>(in, "feature value");
  if (in.peek() != std::char_traits<char>::eof()) throw Error("features: trailing bytes in " + path.string());
  return m;
}

void save_features(const Matrix& features, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write features " + path.string());
  binary::write_magic(out, "CCFV");
  binary::write_le<std::uint64_t>(out, features.rows());
  binary::write_le<std::uint64_t>(out, features.cols());
  for (double v : features.values()) binary::write_le<double>(out, v);
}

ChunkFeatures build_chunks(const Matrix& frames, std::size_t w) {
  require(w >= 1, "build_chunks: W must be >= 1");
  require(frames.rows() >= 1, "build_chunks: empty feature sequence");
  const std::size_t t = frames.rows();
  const std::size_t wp = std::min(w, t);
  const std::size_t base = t / wp, extra = t % wp;
  ChunkFeatures out;
  out.chunks = Matrix(wp, frames.cols());
  std::size_t begin = 0;
  for (std::size_t i = 0; i < wp; ++i) {
    const std::size_t len = base + (i < extra ? 1 : 0);
    out.spans.emplace_back(begin, begin + len);
    for (std::size_t f = begin; f < begin + len; ++f) axpy(1.0, frames.row(f), out.chunks.row(i));
    for (double& v : out.chunks.row(i)) v /= static_cast<double>(len);
    begin += len;
  }
  return out;
}

std::vector<std::size_t> retrieve_topk(std::span<const double> query, const SentenceCorpus& corpus, std::size_t n_k,
                                       const std::optional<std::string>& exclude_video) {
  require(n_k >= 1, "retrieve_topk: N_K must be >= 1");
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(corpus.size());
  for (const auto& e : corpus.entries) {
    if (exclude_video && e.video == *exclude_video) continue;
    scored.emplace_back(cosine_sim(query, e.embedding), e.id);
  }
  if (scored.empty()) throw CorpusExhausted();
  const std::size_t k = std::min(n_k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(),
                    [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
  std::vector<std::size_t> ids(k);
  for (std::size_t i = 0; i < k; ++i) ids[i] = scored[i].second;
  return ids;
}

Matrix semantic_features(const ChunkFeatures& chunks, const SentenceCorpus& corpus, std::size_t n_k,
                         const std::optional<std::string>& exclude_video) {
  Matrix out(chunks.chunks.rows(), corpus.dim());
  for (std::size_t i = 0; i < chunks.chunks.rows(); ++i) {
    const auto ids = retrieve_topk(chunks.chunks.row(i), corpus, n_k, exclude_video);
    for (std::size_t id : ids) axpy(1.0 / static_cast<double>(ids.size()), corpus.entries[id].embedding, out.row(i));
  }
  return out;
}

Matrix fuse(const Matrix& frames, const Matrix& semantics, bool residual) {
  require(frames.cols() == semantics.cols(), "fuse: feature dimensions differ");
  Matrix attn = matmul_nt(frames, semantics);
  attn *= 1.0 / std::sqrt(static_cast<double>(frames.cols()));
  softmax_rows(attn);
  Matrix out = matmul(attn, semantics);
  if (residual) out += frames;
  return out;
}

Matrix retrieval_features(const Matrix& frames, const SentenceCorpus& corpus, std::size_t w, std::size_t n_k,
                          const std::optional<std::string>& exclude_video, bool residual) {
  const ChunkFeatures chunks = build_chunks(frames, w);
  Matrix semantics;
  try {
    semantics = semantic_features(chunks, corpus, n_k, exclude_video);
  } catch (const CorpusExhausted&) {
    semantics = Matrix(chunks.chunks.rows(), frames.cols());
  }
  return fuse(frames, semantics, residual);
}

}  // namespace cyclecap
