#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "cyclecap/param_store.hpp"
#include "cyclecap/rng.hpp"

namespace cyclecap {

// Evaluates the loss at the store's current values and accumulates the
// analytic gradient into the store's grad buffers (which the caller of the
// function has zeroed). Must be deterministic in the parameter values.
using LossAndGrad = std::function<double(ParamStore&)>;

struct GradCheckOptions {
  double eps = 1e-5;
  // Number of coordinates probed; 0 or >= total probes every coordinate.
  std::size_t subsample = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t probed = 0;
  bool finite = true;
  std::string failure;  // set when a probe produced a non-finite loss

  bool passed(double tol) const { return finite && max_rel_error < tol; }
};

// |a - n| / max(1e-8, |a| + |n|)
double relative_error(double analytic, double numeric);

// Central-difference check of the analytic gradient produced by `fn`.
// Parameter values are restored exactly afterwards.
GradCheckResult grad_check(const LossAndGrad& fn, ParamStore& params, const GradCheckOptions& opts,
                           SeededRng& rng);

}  // namespace cyclecap
