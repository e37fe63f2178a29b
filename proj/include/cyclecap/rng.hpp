#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

namespace cyclecap {

// xoshiro256** (Blackman & Vigna), state seeded through SplitMix64.
//
// All distributions are implemented here rather than with <random> so the
// sample streams are identical across standard libraries and platforms.
// Independent purposes ("data", "init", "sampling", ...) draw from
// substreams derived from (seed, purpose, index), so adding draws in one
// purpose never shifts another.
class SeededRng {
 public:
  static constexpr std::string_view kAlgorithm = "xoshiro256**/splitmix64";

  explicit SeededRng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }

  // Deterministic child stream; does not advance this generator.
  SeededRng substream(std::string_view purpose, std::uint64_t index = 0) const;

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer in [0, n); n > 0.
  std::uint64_t uniform_index(std::uint64_t n);
  // Standard normal via Box-Muller.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct indices from [0, n) in draw order (partial Fisher-Yates).
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> state_{};
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

std::uint64_t fnv1a64(std::string_view s);

}  // namespace cyclecap
