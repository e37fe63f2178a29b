#include "cyclecap/config.hpp"

#include <fstream>
#include <set>

#include "cyclecap/error.hpp"

namespace cyclecap {

using nlohmann::json;

namespace {

// Reads known keys from one JSON object and rejects the rest.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where("") + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where(key) + ": wrong type");
    }
  }

  void get_size(const char* key, std::size_t& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError(where(key) + ": expected a non-negative integer");
    out = v.get<std::size_t>();
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, _] : j_.items())
      if (!seen_.count(k)) throw ConfigError(where(k) + ": unknown key");
  }

  std::string where(const std::string& key) const {
    if (key.empty()) return path_.empty() ? "config" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void check(bool ok, const std::string& field, const std::string& why) {
  if (!ok) throw ConfigError(field + ": " + why);
}

}  // namespace

void RunConfig::validate() const {
  data.validate();
  check(retrieval.chunks >= 1, "retrieval.W", "must be >= 1");
  check(retrieval.top_k >= 1, "retrieval.N_K", "must be >= 1");
  check(concepts.vocab >= 1, "concepts.N_C", "must be >= 1");
  check(concepts.samples >= 1, "concepts.N_S", "must be >= 1");
  check(concepts.margin >= 0.0, "concepts.delta", "must be >= 0");
  check(decoder.queries >= 1, "decoder.N", "must be >= 1");
  check(decoder.k_max >= 1, "decoder.K_max", "must be >= 1");
  check(decoder.k_max >= data.k_max, "decoder.K_max", "must cover data.k_max");
  check(decoder.max_len >= 1, "decoder.L_max", "must be >= 1");
  check(decoder.sigma > 0.0, "decoder.sigma", "must be > 0");
  check(decoder.gen_sigma >= 0.0, "decoder.gen_sigma", "must be >= 0");
  check(decoder.layers >= 1, "decoder.L_g", "must be >= 1");
  check(decoder.ff_hidden >= 1, "decoder.ff_hidden", "must be >= 1");
  check(decoder.embed >= 1, "decoder.embed", "must be >= 1");
  const auto& w = loss.weights;
  for (double v : {w.lambda1, w.lambda2, w.lambda3, w.lambda4, w.lambda5, w.beta_giou, w.beta_cls, w.beta_cap, w.beta_ct})
    check(v >= 0.0, "loss", "weights must be >= 0");
  check(w.focal_alpha >= 0.0 && w.focal_alpha <= 1.0, "loss.focal_alpha", "must lie in [0, 1]");
  check(w.focal_gamma >= 0.0, "loss.focal_gamma", "must be >= 0");
  check(train.learning_rate > 0.0, "train.learning_rate", "must be > 0");
  check(train.momentum >= 0.0 && train.momentum < 1.0, "train.momentum", "must lie in [0, 1)");
  check(train.clip_norm >= 0.0, "train.clip_norm", "must be >= 0");
  check(train.batch_size >= 1, "train.batch_size", "must be >= 1");
  check(train.eval_every >= 1, "train.eval_every", "must be >= 1");
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  Section top(j, "");
  top.get("seed", c.seed);

  if (const json* s = top.child("data")) {
    Section d(*s, "data");
    auto& x = c.data;
    d.get_size("train_videos", x.train_videos);
    d.get_size("val_videos", x.val_videos);
    d.get_size("T", x.frames);
    d.get_size("d", x.dim);
    d.get_size("types", x.types);
    d.get_size("vocab", x.vocab);
    d.get_size("caption_min", x.caption_min);
    d.get_size("caption_max", x.caption_max);
    d.get_size("K_max", x.k_max);
    d.get("noise", x.noise);
    d.get("strength", x.strength);
    d.get("jitter", x.jitter);
    d.get("max_overlap", x.max_overlap);
    d.get("min_width", x.min_width);
    d.get("max_width", x.max_width);
    d.get_size("attempts", x.attempts);
    d.finish();
  }
  if (const json* s = top.child("retrieval")) {
    Section r(*s, "retrieval");
    r.get_size("W", c.retrieval.chunks);
    r.get_size("N_K", c.retrieval.top_k);
    r.get("fuse_residual", c.retrieval.fuse_residual);
    r.get("exclude_self", c.retrieval.exclude_self);
    r.finish();
  }
  if (const json* s = top.child("concepts")) {
    Section r(*s, "concepts");
    r.get_size("N_C", c.concepts.vocab);
    r.get_size("N_S", c.concepts.samples);
    r.get("delta", c.concepts.margin);
    r.finish();
  }
  if (const json* s = top.child("decoder")) {
    Section r(*s, "decoder");
    r.get_size("N", c.decoder.queries);
    r.get_size("K_max", c.decoder.k_max);
    r.get_size("L_max", c.decoder.max_len);
    r.get("sigma", c.decoder.sigma);
    r.get_size("L_g", c.decoder.layers);
    r.get_size("ff_hidden", c.decoder.ff_hidden);
    r.get_size("embed", c.decoder.embed);
    r.get_size("position_dims", c.decoder.position_dims);
    r.get("anchors", c.decoder.anchors);
    r.get("gen_sigma", c.decoder.gen_sigma);
    std::string pool = c.decoder.counter_pool == CounterPool::max ? "max" : "mean";
    r.get("counter_pool", pool);
    if (pool != "max" && pool != "mean") throw ConfigError("decoder.counter_pool: expected max or mean");
    c.decoder.counter_pool = pool == "max" ? CounterPool::max : CounterPool::mean;
    r.finish();
  }
  if (const json* s = top.child("loss")) {
    Section r(*s, "loss");
    auto& w = c.loss.weights;
    std::vector<double> lambda{w.lambda1, w.lambda2, w.lambda3, w.lambda4, w.lambda5};
    r.get("lambda", lambda);
    if (lambda.size() != 5) throw ConfigError("loss.lambda: expected 5 values");
    w.lambda1 = lambda[0];
    w.lambda2 = lambda[1];
    w.lambda3 = lambda[2];
    w.lambda4 = lambda[3];
    w.lambda5 = lambda[4];
    r.get("beta_giou", w.beta_giou);
    r.get("beta_cls", w.beta_cls);
    r.get("beta_cap", w.beta_cap);
    r.get("beta_ct", w.beta_ct);
    r.get("focal_alpha", w.focal_alpha);
    r.get("focal_gamma", w.focal_gamma);
    r.get("aux_losses", c.loss.aux_losses);
    r.finish();
  }
  if (const json* s = top.child("train")) {
    Section r(*s, "train");
    std::string mode = to_string(c.train.mode);
    r.get("mode", mode);
    c.train.mode = parse_loss_mode(mode);
    std::string opt = c.train.optimizer == Optimizer::sgd ? "sgd" : "adam";
    r.get("optimizer", opt);
    if (opt != "sgd" && opt != "adam") throw ConfigError("train.optimizer: expected sgd or adam");
    c.train.optimizer = opt == "sgd" ? Optimizer::sgd : Optimizer::adam;
    r.get("learning_rate", c.train.learning_rate);
    r.get("momentum", c.train.momentum);
    r.get("cosine_decay", c.train.cosine_decay);
    r.get("clip_norm", c.train.clip_norm);
    r.get_size("epochs", c.train.epochs);
    r.get_size("batch_size", c.train.batch_size);
    r.get_size("eval_every", c.train.eval_every);
    r.finish();
  }
  if (const json* s = top.child("toggles")) {
    Section r(*s, "toggles");
    r.get("v2t", c.toggles.v2t);
    r.get("mcd", c.toggles.mcd);
    r.get("cyc", c.toggles.cyc);
    r.finish();
  }
  top.finish();
  c.validate();
  return c;
}

json config_to_json(const RunConfig& c) {
  const auto& x = c.data;
  const auto& w = c.loss.weights;
  return {
      {"seed", c.seed},
      {"data",
       {{"train_videos", x.train_videos}, {"val_videos", x.val_videos}, {"T", x.frames}, {"d", x.dim},
        {"types", x.types}, {"vocab", x.vocab}, {"caption_min", x.caption_min}, {"caption_max", x.caption_max},
        {"K_max", x.k_max}, {"noise", x.noise}, {"strength", x.strength}, {"jitter", x.jitter},
        {"max_overlap", x.max_overlap}, {"min_width", x.min_width}, {"max_width", x.max_width},
        {"attempts", x.attempts}}},
      {"retrieval",
       {{"W", c.retrieval.chunks}, {"N_K", c.retrieval.top_k}, {"fuse_residual", c.retrieval.fuse_residual},
        {"exclude_self", c.retrieval.exclude_self}}},
      {"concepts", {{"N_C", c.concepts.vocab}, {"N_S", c.concepts.samples}, {"delta", c.concepts.margin}}},
      {"decoder",
       {{"N", c.decoder.queries}, {"K_max", c.decoder.k_max}, {"L_max", c.decoder.max_len},
        {"sigma", c.decoder.sigma}, {"L_g", c.decoder.layers}, {"ff_hidden", c.decoder.ff_hidden},
        {"embed", c.decoder.embed}, {"position_dims", c.decoder.position_dims}, {"anchors", c.decoder.anchors}, {"gen_sigma", c.decoder.gen_sigma},
        {"counter_pool", c.decoder.counter_pool == CounterPool::max ? "max" : "mean"}}},
      {"loss",
       {{"lambda", {w.lambda1, w.lambda2, w.lambda3, w.lambda4, w.lambda5}}, {"beta_giou", w.beta_giou},
        {"beta_cls", w.beta_cls}, {"beta_cap", w.beta_cap}, {"beta_ct", w.beta_ct}, {"focal_alpha", w.focal_alpha},
        {"focal_gamma", w.focal_gamma}, {"aux_losses", c.loss.aux_losses}}},
      {"train",
       {{"mode", to_string(c.train.mode)}, {"optimizer", c.train.optimizer == Optimizer::sgd ? "sgd" : "adam"},
        {"learning_rate", c.train.learning_rate}, {"momentum", c.train.momentum},
        {"cosine_decay", c.train.cosine_decay}, {"clip_norm", c.train.clip_norm}, {"epochs", c.train.epochs},
        {"batch_size", c.train.batch_size}, {"eval_every", c.train.eval_every}}},
      {"toggles", {{"v2t", c.toggles.v2t}, {"mcd", c.toggles.mcd}, {"cyc", c.toggles.cyc}}},
  };
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& ex) {
    throw ConfigError("config " + path + ": " + ex.what());
  }
  return config_from_json(j);
}

}  // namespace cyclecap
