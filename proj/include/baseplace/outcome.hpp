#pragma once

#include <string>
#include <string_view>
#include <variant>

namespace baseplace {

/// Why a trial stopped before producing a placement.
enum class AbortReason {
  GroundingFailure,     // empty mask / footprint
  NoDirectionMajority,  // direction vote split or "uncertain"
  OracleFailure,        // invalid reply after retry, transport failure
  NoFeasibleRegion,     // rejection sampling starved
  PlanningFailure,      // baseline planner found no goal
};

inline std::string_view to_string(AbortReason r) {
  switch (r) {
    case AbortReason::GroundingFailure: return "grounding_failure";
    case AbortReason::NoDirectionMajority: return "no_direction_majority";
    case AbortReason::OracleFailure: return "oracle_failure";
    case AbortReason::NoFeasibleRegion: return "no_feasible_region";
    case AbortReason::PlanningFailure: return "planning_failure";
  }
  return "?";
}

struct Abort {
  AbortReason reason;
  std::string detail;
};

template <typename T>
using Outcome = std::variant<T, Abort>;

template <typename T>
bool succeeded(const Outcome<T>& o) {
  return std::holds_alternative<T>(o);
}

}  // namespace baseplace
