#include "simmp/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "simmp/errors.hpp"

namespace simmp {

std::string GradCheckResult::describe() const {
  std::ostringstream os;
  os << "max rel err " << max_relative_error << " over " << entries_checked << " entries (leaf " << worst_leaf
     << ", entry " << worst_entry << ": analytic " << worst_analytic << ", numeric " << worst_numeric << ")";
  return os.str();
}

GradCheckResult check_gradients(const std::function<Var()>& loss, std::vector<Var> leaves,
                                const GradCheckOptions& options) {
  for (auto& leaf : leaves) leaf.zero_grad();
  {
    Var out = loss();
    if (out.value().size() != 1) throw ContractError("check_gradients: loss must be scalar");
    backward(out);
  }
  std::vector<Tensor> analytic;
  analytic.reserve(leaves.size());
  for (auto& leaf : leaves) analytic.push_back(leaf.grad());

  std::mt19937_64 rng(options.seed);
  GradCheckResult result;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor& value = leaves[li].mutable_value();
    std::vector<std::size_t> entries(value.size());
    std::iota(entries.begin(), entries.end(), 0);
    if (options.max_entries_per_leaf && entries.size() > options.max_entries_per_leaf) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(options.max_entries_per_leaf);
      std::sort(entries.begin(), entries.end());
    }
    for (std::size_t e : entries) {
      const double saved = value[e];
      value[e] = saved + options.step;
      const double fp = loss().value().item();
      value[e] = saved - options.step;
      const double fm = loss().value().item();
      value[e] = saved;
      const double numeric = (fp - fm) / (2.0 * options.step);
      const double a = analytic[li][e];
      const double diff = std::abs(a - numeric);
      double err = 0.0;
      const double noise = options.roundoff * std::max(std::abs(fp), std::abs(fm)) / options.step;
      if (diff > std::max(options.absolute_tolerance, noise)) {
        err = diff / std::max({std::abs(a), std::abs(numeric), options.denominator_floor});
      }
      ++result.entries_checked;
      if (err > result.max_relative_error || result.entries_checked == 1) {
        result.max_relative_error = std::max(err, result.max_relative_error);
        result.worst_leaf = li;
        result.worst_entry = e;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  for (auto& leaf : leaves) leaf.zero_grad();
  return result;
}

double finite_diff_check(const std::function<Var(const Var&)>& f, const Tensor& x, double step) {
  Var leaf = Var::leaf(x);
  GradCheckOptions options;
  options.step = step;
  return check_gradients([&] { return f(leaf); }, {leaf}, options).max_relative_error;
}

}  // namespace simmp
