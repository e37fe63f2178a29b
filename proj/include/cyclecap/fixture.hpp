#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "cyclecap/config.hpp"
#include "cyclecap/grad_check.hpp"
#include "cyclecap/model.hpp"

namespace cyclecap {

// Tiny random instance for finite-difference checks: T=8, d=6, N=4, N*=2,
// V=7. Loss weights, toggles and decoder options come from `base`; sizes are
// overridden.
struct TinyFixture {
  Model model;
  Example example;
};

TinyFixture make_tiny_fixture(const RunConfig& base, std::uint64_t seed);

struct ComponentCheck {
  Component component;
  GradCheckResult result;
};

// grad_check of every loss component and of the total, with matchings and
// contrastive draws frozen at the initial point. `samples` coordinates are
// probed per component (0 = all). `inject` corrupts the analytic gradient of
// one component, to show the harness notices.
std::vector<ComponentCheck> check_components(TinyFixture& fx, std::size_t samples, std::uint64_t seed,
                                             std::optional<Component> inject = std::nullopt);

}  // namespace cyclecap
