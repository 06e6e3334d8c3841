#pragma once

#include <cstdint>
#include <string>

namespace gnnmp {

/// Per-run metrics. Edge checks count successful and failed segment checks alike.
struct RunReport {
  std::string problem_id;
  std::string planner;
  std::uint64_t seed = 0;
  bool success = false;
  std::uint64_t edge_checks = 0;
  double path_cost = 0.0;
  double wall_ms = 0.0;
  std::uint64_t samples = 0;
  std::uint64_t explore_checks = 0;  // checks spent before smoothing, for two-phase planners
  std::string diagnostic;
};

}  // namespace gnnmp
