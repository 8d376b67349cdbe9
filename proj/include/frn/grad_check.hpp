#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "frn/model.hpp"

namespace frn {

struct GradCheckFailure {
  std::string parameter;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t checked = 0;  // scalar parameters compared
  std::vector<GradCheckFailure> failures;
  double seconds = 0.0;

  bool passed() const { return failures.empty(); }
};

// Lets tests tamper with the analytic gradients before comparison.
using GradientHook = std::function<void(ModelParams<double>&)>;

// Compares backprop gradients of the mean batch loss (eval mode, so dropout
// is off) with central differences (L(theta+h) - L(theta-h)) / 2h for every
// scalar parameter. Relative error is |ga - gn| / max(1, |ga|, |gn|).
GradCheckReport grad_check(const ModelParams<double>& params,
                           std::span<const std::vector<ItemInput>> outfits,
                           std::span<const int> labels, double h = 1e-4, double tol = 1e-4,
                           const GradientHook& hook = {});

// feature dim 8, projection 8, g = [8, 8], f = [4].
ModelConfig grad_check_config();

}  // namespace frn
