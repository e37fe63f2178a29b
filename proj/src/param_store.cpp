#include "cyclecap/param_store.hpp"

#include <cmath>
#include <fstream>

#include "cyclecap/binary_io.hpp"
#include "cyclecap/error.hpp"

namespace cyclecap {

ParamId ParamStore::add(std::string name, Matrix init) {
  require(!contains(name), "ParamStore: duplicate parameter " + name);
  const std::size_t idx = params_.size();
  Matrix grad(init.rows(), init.cols());
  index_.emplace(name, idx);
  params_.push_back(Param{std::move(name), std::move(init), std::move(grad)});
  return ParamId{idx};
}

ParamId ParamStore::id(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ContractViolation("ParamStore: unknown parameter " + name);
  return ParamId{it->second};
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& p : params_) p.grad.fill(0.0);
}

double ParamStore::grad_norm() const {
  double s = 0.0;
  for (const auto& p : params_)
    for (double g : p.grad.values()) s += g * g;
  return std::sqrt(s);
}

bool ParamStore::grads_finite() const {
  for (const auto& p : params_)
    if (!p.grad.all_finite()) return false;
  return true;
}

bool ParamStore::values_finite() const {
  for (const auto& p : params_)
    if (!p.value.all_finite()) return false;
  return true;
}

void ParamStore::write(std::ostream& out) const {
  binary::write_magic(out, "CCAP");
  binary::write_le<std::uint32_t>(out, kCheckpointVersion);
  for (const auto& p : params_) {
    binary::write_le<std::uint64_t>(out, p.name.size());
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    binary::write_le<std::uint64_t>(out, p.value.rows());
    binary::write_le<std::uint64_t>(out, p.value.cols());
    for (double v : p.value.values()) binary::write_le<double>(out, v);
  }
}

ParamStore ParamStore::read(std::istream& in) {
  binary::expect_magic(in, "CCAP");
  const auto version = binary::read_le<std::uint32_t>(in, "checkpoint version");
  if (version != kCheckpointVersion) {
    throw Error("unsupported checkpoint version " + std::to_string(version));
  }
  ParamStore store;
  while (in.peek() != std::char_traits<char>::eof()) {
    const auto len = binary::read_le<std::uint64_t>(in, "name length");
    if (len > (1u << 16)) throw Error("checkpoint: implausible name length");
    std::string name(len, '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(len))) throw Error("checkpoint: truncated name");
    const auto rows = binary::read_le<std::uint64_t>(in, "rows");
    const auto cols = binary::read_le<std::uint64_t>(in, "cols");
    if (rows * cols > (std::uint64_t{1} << 32)) throw Error("checkpoint: implausible shape for " + name);
    Matrix m(rows, cols);
    for (auto& v : m.values()) v = binary::read_le<double>(in, "value");
    store.add(std::move(name), std::move(m));
  }
  return store;
}

void ParamStore::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  write(out);
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

ParamStore ParamStore::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  return read(in);
}

void ParamStore::assign_values(const ParamStore& other) {
  if (other.size() != size()) {
    throw ArtifactMismatch("checkpoint has " + std::to_string(other.size()) + " parameters, model expects " +
                           std::to_string(size()));
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& src = other.params_[i];
    auto& dst = params_[i];
    if (src.name != dst.name || !src.value.same_shape(dst.value)) {
      throw ArtifactMismatch("checkpoint entry '" + src.name + "' (" + std::to_string(src.value.rows()) + "x" +
                             std::to_string(src.value.cols()) + ") does not match model parameter '" + dst.name +
                             "' (" + std::to_string(dst.value.rows()) + "x" + std::to_string(dst.value.cols()) +
                             ")");
    }
    dst.value = src.value;
  }
}

Matrix init_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in, SeededRng& rng) {
  require(fan_in > 0, "init_uniform: fan_in must be positive");
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Matrix m(rows, cols);
  for (auto& v : m.values()) v = rng.uniform(-bound, bound);
  return m;
}

}  // namespace cyclecap
