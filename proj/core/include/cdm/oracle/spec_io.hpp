#pragma once

#include <string>

#include "cdm/oracle/mixture.hpp"

namespace cdm::oracle {

// Mixture spec files:
//
//   dim = 2
//   [component]
//   weight = 0.5
//   mean = 1.0, -1.0
//   variance = 0.05
//   label = 0          # optional, but all-or-none across components
//
// A top-level `ring = components, radius, variance, classes` line may replace
// the component list.
MixtureSpec parse_mixture_spec(const std::string& text, const std::string& path);
MixtureSpec load_mixture_spec(const std::string& path);
std::string format_mixture_spec(const MixtureSpec& spec);

}  // namespace cdm::oracle
