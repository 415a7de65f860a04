#include "qitsa/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "qitsa/error.hpp"

namespace qitsa::ad {

namespace {

double evaluate(const std::function<Node()>& loss_fn) {
  NoGradGuard guard;
  double v = loss_fn().item();
  if (!std::isfinite(v)) throw Error("check_gradients: non-finite loss");
  return v;
}

}  // namespace

GradCheckResult check_gradients(const std::function<Node()>& loss_fn, std::span<const Node> params, double eps) {
  for (Node p : params) p.zero_grad();
  Node loss = loss_fn();
  if (!std::isfinite(loss.item())) throw Error("check_gradients: non-finite loss");
  backward(loss);

  GradCheckResult result;
  for (Node p : params) {
    Array analytic = p.grad();
    auto values = p.mutable_value().data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!std::isfinite(analytic[i])) throw Error("check_gradients: non-finite gradient in " + p.name());
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = evaluate(loss_fn);
      values[i] = saved - eps;
      const double down = evaluate(loss_fn);
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = std::abs(analytic[i] - numeric) /
                         std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
      if (err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_param = p.name();
        result.worst_index = i;
        result.worst_analytic = analytic[i];
        result.worst_numeric = numeric;
      }
      ++result.coordinates;
    }
  }
  for (Node p : params) p.zero_grad();
  return result;
}

}  // namespace qitsa::ad
