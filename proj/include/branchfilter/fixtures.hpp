#pragma once

#include <span>
#include <string_view>

#include "branchfilter/model.hpp"

namespace branchfilter {

// One bundled simulation scenario: a 31-generation trajectory drawn from
// the epidemic model at a detection/infection pair chosen so the offspring
// mean is 1.08 throughout. The fifth scenario repeats (pi, lambda) =
// (0.4, 0.6) and is intended for runs that treat x0 as unknown.
struct Fixture {
  std::string_view name;
  ModelParams params;
  count_t x0;
  bool x0_treated_known;
  Trajectory trajectory;
};

// The five scenarios, in study order.
std::span<const Fixture> bundled_fixtures();

// Lookup by name; throws std::invalid_argument for unknown names.
const Fixture& fixture_by_name(std::string_view name);

}  // namespace branchfilter
