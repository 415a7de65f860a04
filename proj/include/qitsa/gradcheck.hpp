#pragma once

#include <functional>
#include <span>
#include <string>

#include "qitsa/autodiff.hpp"

namespace qitsa::ad {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  // Where the worst coordinate was found.
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Compares backward() against central finite differences on every coordinate
// of every parameter. `loss_fn` must rebuild the graph from the current
// parameter values and return a one-element node. The per-coordinate error
// is |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
GradCheckResult check_gradients(const std::function<Node()>& loss_fn, std::span<const Node> params,
                                double eps = 1e-5);

}  // namespace qitsa::ad
