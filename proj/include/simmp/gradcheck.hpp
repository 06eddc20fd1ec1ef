#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "simmp/autograd.hpp"

namespace simmp {

struct GradCheckOptions {
  double step = 1e-5;
  // Denominator floor: error = |analytic - numeric| / max(|analytic|, |numeric|, floor).
  double denominator_floor = 1e-8;
  // Absolute fallback: differences at or below this count as exact. Covers entries
  // whose true derivative is zero and whose numeric estimate is pure rounding.
  double absolute_tolerance = 1e-9;
  // The fallback also grows with the loss: rounding in f(x +- h) is about
  // roundoff * |f| / h in the numeric estimate.
  double roundoff = 1e-14;
  // 0 checks every entry; otherwise a seeded random subset per leaf.
  std::size_t max_entries_per_leaf = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t entries_checked = 0;
  std::size_t worst_leaf = 0;
  std::size_t worst_entry = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;

  std::string describe() const;
};

// Compares backward() against central differences (f(x+h) - f(x-h)) / 2h for the
// listed leaves. `loss` must rebuild the scalar from the current leaf values on
// every call and be deterministic. Leaf gradients are reset before and after.
GradCheckResult check_gradients(const std::function<Var()>& loss, std::vector<Var> leaves,
                                const GradCheckOptions& options = {});

// Single-input form: max relative error of d f(x) / dx.
double finite_diff_check(const std::function<Var(const Var&)>& f, const Tensor& x, double step = 1e-5);

}  // namespace simmp
