#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "cyclecap/error.hpp"
#include "cyclecap/numerics.hpp"
#include "cyclecap/synthetic.hpp"

using namespace cyclecap;
namespace fs = std::filesystem;

namespace {

SyntheticConfig small_config() {
  SyntheticConfig c;
  c.train_videos = 30;
  c.val_videos = 10;
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cyclecap-test-" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Embedder, UnitNormDeterministicAndOrderFree) {
  SeededRng rng(1);
  const TextEmbedder e = TextEmbedder::random({"a", "b", "c", "d"}, 8, rng);
  const Vector x = e.embed({"a", "b", "c"}), y = e.embed({"a", "b", "c"}), z = e.embed({"c", "a", "b"});
  EXPECT_EQ(x, y);
  double n = 0.0;
  for (double v : x) n += v * v;
  EXPECT_NEAR(std::sqrt(n), 1.0, 1e-12);
  for (std::size_t k = 0; k < x.size(); ++k) EXPECT_NEAR(x[k], z[k], 1e-15);
  EXPECT_THROW(e.embed({}), ContractViolation);
  EXPECT_THROW(e.embed({"nope"}), ContractViolation);
}

TEST(Embedder, DistinctCaptionsStayApart) {
  const Dataset data = generate_dataset(small_config(), 42);
  // 100 distinct captions drawn from the lexicon.
  SeededRng rng(2);
  std::set<std::vector<std::string>> seen;
  std::vector<Vector> emb;
  while (emb.size() < 100) {
    std::vector<std::string> cap;
    const std::size_t len = 3 + rng.uniform_index(4);
    for (std::size_t i = 0; i < len; ++i) cap.push_back(data.lexicon[rng.uniform_index(data.lexicon.size())].token);
    std::vector<std::string> key = cap;
    std::sort(key.begin(), key.end());
    if (!seen.insert(key).second) continue;
    emb.push_back(data.embedder.embed(cap));
  }
  for (std::size_t i = 0; i < emb.size(); ++i)
    for (std::size_t j = i + 1; j < emb.size(); ++j) EXPECT_LT(cosine_sim(emb[i], emb[j]), 0.99);
}

TEST(Synthetic, ShapesBoundsAndOverlap) {
  SyntheticConfig c;
  const Dataset data = generate_dataset(c, 42);
  ASSERT_EQ(data.train.size(), 200u);
  ASSERT_EQ(data.val.size(), 50u);
  std::size_t events = 0;
  for (const auto* split : {&data.train, &data.val})
    for (const VideoRecord& v : *split) {
      EXPECT_EQ(v.features.rows(), c.frames);
      EXPECT_EQ(v.features.cols(), c.dim);
      ASSERT_GE(v.events.size(), 1u);
      ASSERT_LE(v.events.size(), c.k_max);
      if (split == &data.train) events += v.events.size();
      for (std::size_t a = 0; a < v.events.size(); ++a) {
        const Segment& s = v.events[a].segment;
        EXPECT_GE(s.start, 0.0);
        EXPECT_LE(s.end, 1.0);
        EXPECT_GE(s.length(), std::max(2.0 / c.frames, c.min_width) - 1.0 / c.frames - 1e-12);
        for (std::size_t b = a + 1; b < v.events.size(); ++b) EXPECT_LE(tiou(s, v.events[b].segment), c.max_overlap);
      }
    }
  EXPECT_GE(events, 200u);
  EXPECT_LE(events, 1000u);
  EXPECT_EQ(data.corpus.size(), events);
}

TEST(Synthetic, TemplatesAreDisjointAndSignaturesMatch) {
  const Dataset data = generate_dataset(small_config(), 7);
  std::set<std::string> used;
  for (const ActivityType& t : data.types) {
    EXPECT_GE(t.caption.size(), data.config.caption_min);
    EXPECT_LE(t.caption.size(), data.config.caption_max);
    for (const auto& tok : t.caption) EXPECT_TRUE(used.insert(tok).second) << tok;
    EXPECT_EQ(t.signature, data.embedder.embed(t.caption));
  }
}

TEST(Synthetic, PlantedSignalIsWhereTheEventIs) {
  SyntheticConfig c = small_config();
  c.noise = 0.0;
  c.jitter = 0.0;
  const Dataset data = generate_dataset(c, 9);
  std::size_t checked = 0;
  for (const VideoRecord& v : data.train) {
    for (const EventRecord& e : v.events) {
      // The caption is a full template.
      const ActivityType* type = nullptr;
      for (const auto& t : data.types)
        if (t.caption == e.tokens) type = &t;
      ASSERT_NE(type, nullptr);
      // Any frame covered by this event alone carries exactly its signature.
      for (std::size_t f = 0; f < c.frames; ++f) {
        const double x = (f + 0.5) / c.frames;
        std::size_t covering = 0;
        for (const EventRecord& o : v.events) covering += x >= o.segment.start && x < o.segment.end;
        if (covering != 1 || x < e.segment.start || x >= e.segment.end) continue;
        EXPECT_NEAR(cosine_sim(v.features.row(f), type->signature), 1.0, 1e-12);
        ++checked;
      }
    }
  }
  EXPECT_GT(checked, 100u);
}

TEST(Synthetic, SameSeedSameTreeDifferentSeedDifferentTree) {
  const SyntheticConfig c = small_config();
  const fs::path a = scratch("syn-a"), b = scratch("syn-b"), other = scratch("syn-c");
  const std::string da = write_dataset(generate_dataset(c, 42), a);
  const std::string db = write_dataset(generate_dataset(c, 42), b);
  const std::string dc = write_dataset(generate_dataset(c, 43), other);
  EXPECT_EQ(da, db);
  EXPECT_EQ(da, tree_digest(a));
  EXPECT_NE(da, dc);
  for (const auto& p : {a, b, other}) fs::remove_all(p);
}

TEST(Synthetic, LoadRoundTrip) {
  const SyntheticConfig c = small_config();
  const Dataset data = generate_dataset(c, 5);
  const fs::path root = scratch("syn-load");
  write_dataset(data, root);
  const Dataset back = load_dataset(root);
  ASSERT_EQ(back.train.size(), data.train.size());
  ASSERT_EQ(back.val.size(), data.val.size());
  EXPECT_EQ(back.train[3].features, data.train[3].features);
  EXPECT_EQ(back.val[2].events.size(), data.val[2].events.size());
  EXPECT_EQ(back.val[2].events[0].tokens, data.val[2].events[0].tokens);
  EXPECT_EQ(back.val[2].events[0].segment, data.val[2].events[0].segment);
  EXPECT_EQ(back.corpus.size(), data.corpus.size());
  EXPECT_EQ(back.embedder.embed({"w01", "w02"}), data.embedder.embed({"w01", "w02"}));
  EXPECT_EQ(back.types.size(), data.types.size());
  fs::remove_all(root);
}

TEST(Synthetic, CorruptFeatureFileIsAMismatch) {
  const Dataset data = generate_dataset(small_config(), 5);
  const fs::path root = scratch("syn-bad");
  write_dataset(data, root);
  save_features(Matrix(3, 3), root / "features" / (data.train[0].id + ".ccfv"));
  EXPECT_THROW(load_dataset(root), Error);
  fs::remove_all(root);
}

TEST(Synthetic, ZeroStrengthLeavesOnlyNoise) {
  SyntheticConfig c = small_config();
  c.strength = 0.0;
  c.noise = 0.0;
  const Dataset data = generate_dataset(c, 11);
  for (double v : data.train[0].features.values()) EXPECT_EQ(v, 0.0);
}

TEST(Synthetic, UnsatisfiableOverlapReportsDiagnostics) {
  SyntheticConfig c = small_config();
  c.frames = 4;
  c.min_width = 1.0;
  c.max_width = 1.0;
  c.max_overlap = 0.0;
  c.k_max = 2;
  try {
    generate_dataset(c, 1);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("could not place"), std::string::npos);
  }
}

TEST(Synthetic, InvalidConfigIsRejected) {
  SyntheticConfig c;
  c.k_max = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = SyntheticConfig{};
  c.vocab = 5;
  EXPECT_THROW(c.validate(), ConfigError);
}
