#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "cyclecap/matrix.hpp"
#include "cyclecap/rng.hpp"

namespace cyclecap {

struct Param {
  std::string name;
  Matrix value;
  Matrix grad;  // always the same shape as value
};

// Index into a ParamStore; stable for the store's lifetime.
struct ParamId {
  std::size_t index = 0;
};

// Named registry of learnable arrays with co-located gradient buffers.
// Iteration order is insertion order.
class ParamStore {
 public:
  ParamId add(std::string name, Matrix init);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  ParamId id(const std::string& name) const;

  Matrix& value(ParamId id) { return params_[id.index].value; }
  const Matrix& value(ParamId id) const { return params_[id.index].value; }
  Matrix& grad(ParamId id) { return params_[id.index].grad; }
  const Matrix& grad(ParamId id) const { return params_[id.index].grad; }

  Matrix& value(const std::string& name) { return value(id(name)); }
  const Matrix& value(const std::string& name) const { return value(id(name)); }
  Matrix& grad(const std::string& name) { return grad(id(name)); }

  std::vector<Param>& entries() { return params_; }
  const std::vector<Param>& entries() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  void zero_grads();
  double grad_norm() const;
  bool grads_finite() const;
  bool values_finite() const;

  // Checkpoint container: "CCAP", u32 version, then per entry
  // u64 name length, utf-8 name, u64 rows, u64 cols, rows*cols f64 LE.
  void write(std::ostream& out) const;
  static ParamStore read(std::istream& in);
  void save(const std::filesystem::path& path) const;
  static ParamStore load(const std::filesystem::path& path);

  // Copies values from `other` into this store. Names, order and shapes must
  // match; otherwise throws ArtifactMismatch naming the first disagreement.
  void assign_values(const ParamStore& other);

 private:
  std::vector<Param> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Entries uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
Matrix init_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in, SeededRng& rng);

}  // namespace cyclecap
