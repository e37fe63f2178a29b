#include "cyclecap/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

namespace cyclecap {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

GradCheckResult grad_check(const LossAndGrad& fn, ParamStore& params, const GradCheckOptions& opts,
                           SeededRng& rng) {
  GradCheckResult result;
  params.zero_grads();
  const double base = fn(params);
  if (!std::isfinite(base)) {
    result.finite = false;
    result.failure = "non-finite loss at base point";
    return result;
  }

  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params.entries()) analytic.push_back(p.grad);

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t pi = 0; pi < params.size(); ++pi)
    for (std::size_t k = 0; k < params.entries()[pi].value.size(); ++k) coords.emplace_back(pi, k);

  std::vector<std::size_t> picks;
  if (opts.subsample == 0 || opts.subsample >= coords.size()) {
    picks.resize(coords.size());
    for (std::size_t i = 0; i < picks.size(); ++i) picks[i] = i;
  } else {
    picks = rng.sample_without_replacement(coords.size(), opts.subsample);
    std::sort(picks.begin(), picks.end());
  }

  for (std::size_t pick : picks) {
    const auto [pi, k] = coords[pick];
    auto& entry = params.entries()[pi];
    double& theta = entry.value.values()[k];
    const double saved = theta;

    theta = saved + opts.eps;
    params.zero_grads();
    const double up = fn(params);
    theta = saved - opts.eps;
    params.zero_grads();
    const double down = fn(params);
    theta = saved;

    ++result.probed;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      result.finite = false;
      result.failure = "non-finite loss probing " + entry.name + "[" + std::to_string(k) + "]";
      break;
    }
    const double numeric = (up - down) / (2.0 * opts.eps);
    const double a = analytic[pi].values()[k];
    const double err = relative_error(a, numeric);
    if (result.probed == 1 || err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_param = entry.name;
      result.worst_index = k;
      result.worst_analytic = a;
      result.worst_numeric = numeric;
    }
  }

  // Leave the analytic gradient in place for callers that inspect it.
  for (std::size_t pi = 0; pi < params.size(); ++pi) params.entries()[pi].grad = analytic[pi];
  return result;
}

}  // namespace cyclecap
