#pragma once

// Finite-difference cases for every differentiable op and the composed blocks.
// Each case builds a fresh random instance from a seed and returns the worst
// relative error of d(sum(R * f)) against central differences, R a fixed random
// weighting so that no gradient is identically zero by symmetry.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "simmp/gradcheck.hpp"

namespace gradsuite {

struct Case {
  std::string name;
  std::function<simmp::GradCheckResult(std::uint64_t seed)> run;
};

std::vector<Case> all_cases();

}  // namespace gradsuite
