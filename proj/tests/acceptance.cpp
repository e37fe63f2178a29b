// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "cyclecap/evaluation.hpp"
#include "cyclecap/fixture.hpp"
#include "cyclecap/hungarian.hpp"
#include "cyclecap/log.hpp"
#include "cyclecap/losses.hpp"
#include "cyclecap/model.hpp"
#include "cyclecap/rng.hpp"
#include "cyclecap/segment.hpp"
#include "cyclecap/synthetic.hpp"
#include "cyclecap/trainer.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace cyclecap;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void verdict(int id, bool ok, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// --- 1 ---------------------------------------------------------------------

void gradients() {
  const auto t0 = Clock::now();
  RunConfig base;
  TinyFixture fx = make_tiny_fixture(base, base.seed);
  const auto checks = check_components(fx, 200, base.seed);
  const double elapsed = seconds_since(t0);
  bool ok = elapsed < 60.0;
  std::string detail;
  double worst = 0.0;
  for (const auto& c : checks) {
    worst = std::max(worst, c.result.max_rel_error);
    if (!c.result.passed(1e-4)) {
      ok = false;
      detail += std::string(to_string(c.component)) + " ";
    }
  }
  verdict(1, ok,
          "max rel err " + fmt("%.3g", worst) + " over " + std::to_string(checks.size()) + " components, " +
              fmt("%.1f s", elapsed) + (detail.empty() ? "" : "; failing: " + detail));
}

// --- 2 ---------------------------------------------------------------------

void hungarian_optimality() {
  const auto t0 = Clock::now();
  SeededRng rng = SeededRng(7).substream("acceptance-hungarian");
  std::size_t checked = 0, wrong = 0;
  for (std::size_t n = 1; n <= 7; ++n)
    for (std::size_t m = 1; m <= 7; ++m)
      for (int k = 0; k < 1000; ++k) {
        Matrix c(n, m);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) c(i, j) = rng.uniform(-1.0, 3.0);
        const Matching mt = hungarian(c);
        ++checked;
        if (mt.size() != std::min(n, m) || matching_cost(c, mt) != oracle::brute_force_min_cost_by_column(c)) ++wrong;
      }
  const double elapsed = seconds_since(t0);
  verdict(2, wrong == 0 && elapsed < 30.0,
          std::to_string(checked) + " matrices, " + std::to_string(wrong) + " non-optimal, " + fmt("%.1f s", elapsed));
}

// --- 3 ---------------------------------------------------------------------

Segment random_segment(SeededRng& rng, bool grid) {
  double a, b;
  do {
    if (grid) {
      a = static_cast<double>(rng.uniform_index(17)) / 16.0;
      b = static_cast<double>(rng.uniform_index(17)) / 16.0;
    } else {
      a = rng.uniform(-2.0, 2.0);
      b = rng.uniform(-2.0, 2.0);
    }
  } while (a == b);
  return {std::min(a, b), std::max(a, b)};
}

void giou_suite() {
  SeededRng rng = SeededRng(7).substream("acceptance-giou");
  std::size_t bad_range = 0, bad_sym = 0, bad_order = 0, bad_self = 0, bad_iff = 0, equal_cases = 0;
  const std::size_t pairs = 100000;
  for (std::size_t k = 0; k < pairs; ++k) {
    // Half the pairs on a coarse grid so containment and touching occur.
    const bool grid = k % 2 == 0;
    const Segment a = random_segment(rng, grid), b = random_segment(rng, grid);
    const double g = giou_1d(a, b), gr = giou_1d(b, a), i = tiou(a, b);
    if (!(g > -1.0 && g <= 1.0)) ++bad_range;
    if (std::abs(g - gr) > 1e-12) ++bad_sym;
    if (g > i) ++bad_order;
    if (giou_1d(a, a) != 1.0) ++bad_self;
    const double hull = std::max(a.end, b.end) - std::min(a.start, b.start);
    const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
    const double uni = a.length() + b.length() - inter;
    const bool hull_is_union = std::abs(hull - uni) <= 1e-12;
    const bool same = std::abs(g - i) <= 1e-12;
    equal_cases += same;
    if (hull_is_union != same) ++bad_iff;
  }
  const bool ok = bad_range + bad_sym + bad_order + bad_self + bad_iff == 0;
  std::ostringstream d;
  d << pairs << " pairs; violations range " << bad_range << ", symmetry " << bad_sym << ", giou<=iou " << bad_order
    << ", self " << bad_self << ", equality-iff " << bad_iff << " (" << equal_cases << " equality cases)";
  verdict(3, ok, d.str());
}

// --- 4 ---------------------------------------------------------------------

void matching_invariance() {
  SeededRng rng = SeededRng(7).substream("acceptance-invariance");
  std::size_t loc_bad = 0, sem_bad = 0;
  const int instances = 1000;
  for (int k = 0; k < instances; ++k) {
    const std::size_t n = 1 + rng.uniform_index(10), m = 1 + rng.uniform_index(5), d = 2 + rng.uniform_index(8);
    Matrix pred(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
      const Segment s = random_segment(rng, false);
      pred(i, 0) = s.start;
      pred(i, 1) = s.end;
    }
    std::vector<Segment> truth;
    for (std::size_t j = 0; j < m; ++j) truth.push_back(random_segment(rng, false));
    const double scale = std::exp(rng.uniform(-2.0, 2.0)), shift = rng.uniform(-5.0, 5.0);
    Matrix pred2 = pred;
    for (double& v : pred2.values()) v = scale * v + shift;
    std::vector<Segment> truth2;
    for (const Segment& s : truth) truth2.push_back({scale * s.start + shift, scale * s.end + shift});
    if (match_location(pred, truth).pairs != match_location(pred2, truth2).pairs) ++loc_bad;

    Matrix q(n, d), z(m, d);
    for (double& v : q.values()) v = rng.normal();
    for (double& v : z.values()) v = rng.normal();
    Matrix q2 = q;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = std::exp(rng.uniform(-3.0, 3.0));
      for (double& v : q2.row(i)) v *= r;
    }
    if (match_semantic(q, z).pairs != match_semantic(q2, z).pairs) ++sem_bad;
  }
  verdict(4, loc_bad == 0 && sem_bad == 0,
          std::to_string(instances) + " instances; location changed " + std::to_string(loc_bad) +
              ", semantic changed " + std::to_string(sem_bad));
}

// --- 5 to 8: training sweep -------------------------------------------------

const std::vector<std::uint64_t> kSeeds{42, 43, 44};

struct RunOutcome {
  EvalReport report;
  double seconds = 0.0;
  double concept_ap = 0.0;
  std::size_t mass_pairs = 0, mass_inside = 0;
  std::size_t denser_inside = 0;  // per-frame mean, reported only
};

double average_precision(std::vector<std::pair<double, bool>> scored) {
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::size_t hits = 0, positives = 0;
  double sum = 0.0;
  for (std::size_t k = 0; k < scored.size(); ++k) {
    if (!scored[k].second) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  for (const auto& s : scored) positives += s.second;
  return positives == 0 ? 0.0 : sum / static_cast<double>(positives);
}

void concept_checks(Model& model, const std::vector<Example>& val, const Dataset& data, RunOutcome& out) {
  std::vector<std::pair<double, bool>> scored;
  for (std::size_t v = 0; v < val.size(); ++v) {
    const ConceptScores cs = concept_scores(model, val[v]);
    for (std::size_t c = 0; c < model.concepts.size(); ++c)
      scored.emplace_back(cs.video(0, c), val[v].concept_label[c] > 0.5);
    const std::size_t T = cs.frames.rows();
    for (const EventRecord& ev : data.val[v].events) {
      std::vector<std::size_t> seen;
      for (const std::string& tok : ev.tokens) {
        const auto c = model.concepts.find(tok);
        if (!c || std::find(seen.begin(), seen.end(), *c) != seen.end()) continue;
        seen.push_back(*c);
        double inside = 0.0, outside = 0.0;
        std::size_t n_in = 0;
        for (std::size_t t = 0; t < T; ++t) {
          const double centre = (static_cast<double>(t) + 0.5) / static_cast<double>(T);
          const bool in = centre >= ev.segment.start && centre < ev.segment.end;
          (in ? inside : outside) += cs.frames(t, *c);
          n_in += in;
        }
        ++out.mass_pairs;
        out.mass_inside += inside > outside;
        if (n_in > 0 && n_in < T)
          out.denser_inside += inside / static_cast<double>(n_in) > outside / static_cast<double>(T - n_in);
      }
    }
  }
  out.concept_ap = average_precision(std::move(scored));
}

RunOutcome run(const RunConfig& config, const Dataset& data, bool concepts) {
  const auto t0 = Clock::now();
  TrainResult tr = train(config, data, {});
  std::vector<Example> val = prepare_examples(tr.model, data.val, data, false, 1);
  RunOutcome out;
  out.report = evaluate(infer_all(tr.model, val, 1), annotations_of(data.val));
  out.seconds = seconds_since(t0);
  if (concepts) concept_checks(tr.model, val, data, out);
  return out;
}

struct Variant {
  std::string name;
  std::function<void(RunConfig&)> apply;
};

double mean_of(const std::vector<RunOutcome>& runs, const std::function<double(const RunOutcome&)>& f) {
  double s = 0.0;
  for (const auto& r : runs) s += f(r);
  return s / static_cast<double>(runs.size());
}

void training_sweep() {
  const std::vector<Variant> variants{
      {"cyc", [](RunConfig&) {}},
      {"sg", [](RunConfig& c) { c.train.mode = LossMode::sg; }},
      {"lg", [](RunConfig& c) { c.train.mode = LossMode::lg; }},
      {"no-v2t", [](RunConfig& c) { c.toggles.v2t = false; }},
      {"no-mcd", [](RunConfig& c) { c.toggles.mcd = false; }},
      {"no-cyc", [](RunConfig& c) { c.toggles.cyc = false; }},
  };
  std::map<std::string, std::vector<RunOutcome>> results;
  for (std::uint64_t seed : kSeeds) {
    RunConfig base;
    base.seed = seed;
    const Dataset data = generate_dataset(base.data, seed);
    for (const Variant& v : variants) {
      RunConfig c = base;
      v.apply(c);
      RunOutcome r = run(c, data, v.name == "cyc");
      std::printf("  seed %llu %-7s R %.4f P %.4f F1 %.4f BLEU4 %.4f (%.0f s)\n",
                  static_cast<unsigned long long>(seed), v.name.c_str(), r.report.recall, r.report.precision,
                  r.report.f1, r.report.bleu4, r.seconds);
      std::fflush(stdout);
      results[v.name].push_back(std::move(r));
    }
  }
  auto avg = [&](const std::string& name, double EvalReport::*field) {
    return mean_of(results[name], [field](const RunOutcome& r) { return r.report.*field; });
  };

  {
    const double f1 = avg("cyc", &EvalReport::f1), bleu = avg("cyc", &EvalReport::bleu4);
    const double secs = mean_of(results["cyc"], [](const RunOutcome& r) { return r.seconds; }) * kSeeds.size();
    verdict(5, f1 >= 0.80 && bleu >= 0.60 && secs < 600.0,
            "F1@avg " + fmt("%.4f", f1) + " (need 0.80), BLEU-4 " + fmt("%.4f", bleu) + " (need 0.60), " +
                fmt("%.0f s", secs) + " for 3 seeds");
  }
  {
    const double p_sg = avg("sg", &EvalReport::precision), p_lg = avg("lg", &EvalReport::precision);
    const double r_sg = avg("sg", &EvalReport::recall), r_lg = avg("lg", &EvalReport::recall);
    const double f_sg = avg("sg", &EvalReport::f1), f_lg = avg("lg", &EvalReport::f1),
                 f_cyc = avg("cyc", &EvalReport::f1);
    const bool ok = p_sg >= p_lg && r_lg >= r_sg && f_cyc >= std::max(f_sg, f_lg) - 0.02;
    std::ostringstream d;
    d.precision(4);
    d << std::fixed << "P sg " << p_sg << " vs lg " << p_lg << "; R lg " << r_lg << " vs sg " << r_sg << "; F1 cyc "
      << f_cyc << " vs max(sg " << f_sg << ", lg " << f_lg << ") - 0.02";
    verdict(6, ok, d.str());
  }
  {
    const double f_full = avg("cyc", &EvalReport::f1), b_full = avg("cyc", &EvalReport::bleu4);
    bool ok = true;
    std::ostringstream d;
    d.precision(4);
    d << std::fixed << "full F1 " << f_full << " BLEU-4 " << b_full;
    for (const char* name : {"no-v2t", "no-mcd", "no-cyc"}) {
      const double f = avg(name, &EvalReport::f1), b = avg(name, &EvalReport::bleu4);
      ok = ok && f_full >= f - 0.02 && b_full >= b - 0.02;
      d << "; " << name << " F1 " << f << " BLEU-4 " << b;
    }
    verdict(7, ok, d.str());
  }
  {
    const auto& runs = results["cyc"];
    const double ap = mean_of(runs, [](const RunOutcome& r) { return r.concept_ap; });
    std::size_t pairs = 0, inside = 0, denser = 0;
    for (const auto& r : runs) {
      pairs += r.mass_pairs;
      inside += r.mass_inside;
      denser += r.denser_inside;
    }
    const double frac = pairs == 0 ? 0.0 : static_cast<double>(inside) / static_cast<double>(pairs);
    verdict(8, ap >= 0.90 && frac >= 0.80,
            "video concept AP " + fmt("%.4f", ap) + " (need 0.90), frame mass inside span for " +
                fmt("%.1f%%", 100.0 * frac) + " of " + std::to_string(pairs) + " concept-event pairs (need 80%)" +
                "; per-frame mean higher inside for " +
                fmt("%.1f%%", pairs == 0 ? 0.0 : 100.0 * static_cast<double>(denser) / static_cast<double>(pairs)));
  }
}

// --- 9 ---------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Relative path -> content of every regular file under root.
std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = slurp(e.path());
  return out;
}

void determinism() {
  const fs::path root = fs::temp_directory_path() / ("cyclecap-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  {
    std::ofstream cfg(root / "config.json");
    cfg << R"({"seed": 5, "data": {"train_videos": 16, "val_videos": 4}, "train": {"epochs": 2}})";
  }
  const std::string cli = CYCLECAP_CLI;
  const std::string common = cli + " --quiet --config " + (root / "config.json").string();
  std::vector<std::string> mismatched;
  bool commands_ok = true;
  std::vector<std::map<std::string, std::string>> snaps;
  for (int rep = 0; rep < 2; ++rep) {
    const fs::path dir = root / ("rep" + std::to_string(rep));
    const std::string d = dir.string();
    const std::string cmds[] = {
        common + " gen-data --out " + d + "/data",
        common + " train --data " + d + "/data --out " + d + "/run",
        common + " train --data " + d + "/data --out " + d + "/sweep --modes sg,lg",
        common + " eval --ckpt " + d + "/run/model.ccap --data " + d + "/data --report " + d + "/eval",
        common + " grad-check --samples 20 > " + d + "/grad-check.txt",
        common + " retrieve --data " + d + "/data --video " + video_id(0) + " > " + d + "/retrieve.txt",
        common + " inspect-concepts --data " + d + "/data --ckpt " + d + "/run/model.ccap --video " + video_id(0) +
            " > " + d + "/concepts.txt",
    };
    for (const std::string& c : cmds)
      if (std::system((c + " 2>/dev/null").c_str()) != 0) {
        commands_ok = false;
        std::printf("  command failed: %s\n", c.c_str());
      }
    snaps.push_back(snapshot(dir));
  }
  for (const auto& [name, content] : snaps[0]) {
    auto it = snaps[1].find(name);
    if (it == snaps[1].end() || it->second != content) mismatched.push_back(name);
  }
  if (snaps[1].size() != snaps[0].size()) mismatched.push_back("(file sets differ)");
  const bool ok = commands_ok && mismatched.empty() && !snaps[0].empty();
  std::string detail = std::to_string(snaps[0].size()) + " output files compared";
  for (const auto& m : mismatched) detail += "; differs: " + m;
  if (!commands_ok) detail += "; a command failed";
  verdict(9, ok, detail);
  if (ok) fs::remove_all(root);
}

}  // namespace

int main() {
  set_quiet(true);
  const auto t0 = Clock::now();
  gradients();
  hungarian_optimality();
  giou_suite();
  matching_invariance();
  training_sweep();
  determinism();
  std::printf("acceptance: %d failing criteria, %.0f s total\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
