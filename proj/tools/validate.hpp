#pragma once

#include <ostream>

#include "cpsofdm/scenario.hpp"

namespace cpsofdm::cli {

/// Checks structural invariants of every user in the scenario and prints one
/// line per check. Returns the number of failed checks.
int validate_scenario(const ScenarioConfig& cfg, std::ostream& out);

}  // namespace cpsofdm::cli
