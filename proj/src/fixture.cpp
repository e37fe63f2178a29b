#include "cyclecap/fixture.hpp"

#include <cmath>

#include "cyclecap/error.hpp"

namespace cyclecap {

TinyFixture make_tiny_fixture(const RunConfig& base, std::uint64_t seed) {
  RunConfig c = base;
  c.seed = seed;
  c.data.frames = 8;
  c.data.dim = 6;
  c.data.k_max = 2;
  c.decoder.queries = 4;
  c.decoder.k_max = 3;
  c.decoder.max_len = 4;
  c.decoder.ff_hidden = 8;
  c.decoder.embed = 4;
  c.decoder.position_dims = std::min<std::size_t>(c.decoder.position_dims, 4);
  c.concepts.samples = 3;

  std::vector<std::string> tokens{"<eos>", "<bos>", "man", "runs", "fast", "dog", "the"};
  ConceptVocabulary concepts({{"man", PosTag::noun, 3}, {"runs", PosTag::verb, 2}, {"dog", PosTag::noun, 2},
                              {"fast", PosTag::adj, 1}});
  TinyFixture fx{Model::create(c, tokens, concepts), {}};

  SeededRng rng = SeededRng(seed).substream("data");
  Example& ex = fx.example;
  ex.id = "fixture";
  ex.features = Matrix(8, 6);
  for (double& v : ex.features.values()) v = rng.normal();
  ex.segments = {{0.1, 0.45}, {0.55, 0.8}};
  ex.captions = {{2, 3, 4, kEosToken}, {6, 5, 3, kEosToken}};
  ex.concept_label = {1.0, 1.0, 1.0, 0.0};  // man runs dog present, fast absent
  ex.caption_embeddings = Matrix(2, 6);
  for (std::size_t j = 0; j < 2; ++j) {
    double norm = 0.0;
    for (double& v : ex.caption_embeddings.row(j)) {
      v = rng.normal();
      norm += v * v;
    }
    for (double& v : ex.caption_embeddings.row(j)) v /= std::sqrt(norm);
  }
  return fx;
}

std::vector<ComponentCheck> check_components(TinyFixture& fx, std::size_t samples, std::uint64_t seed,
                                             std::optional<Component> inject) {
  FrozenDraws frozen;
  SeededRng sampling = SeededRng(seed).substream("sampling");
  std::vector<ComponentCheck> out;
  for (Component comp : kAllComponents) {
    if (!fx.model.concept_head && (comp == Component::mil || comp == Component::tri)) continue;
    auto fn = [&](ParamStore&) {
      Tape t;
      const auto r = forward_loss(t, fx.model, fx.example, sampling, &frozen, true);
      for (const auto& [c, v] : r.components) {
        if (c != comp) continue;
        t.backward(v);
        if (inject && *inject == comp) {
          // Deliberate bug: every analytic entry is off.
          for (auto& p : fx.model.params.entries())
            for (double& g : p.grad.values()) g = 1.05 * g + 1e-3;
        }
        return t.scalar(v);
      }
      throw ContractViolation(std::string("component not built: ") + to_string(comp));
    };
    SeededRng pick = SeededRng(seed).substream("gradcheck", static_cast<std::uint64_t>(comp));
    GradCheckOptions opts;
    opts.subsample = samples;
    out.push_back({comp, grad_check(fn, fx.model.params, opts, pick)});
  }
  return out;
}

}  // namespace cyclecap
