#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "hpt/tensor.hpp"

namespace hpt {

/// Scalar function of one tensor, expressed on a graph.
using LossFn = std::function<Var(Graph&, Var)>;

inline double evaluate_loss(const LossFn& loss_fn, const Tensor& point) {
  Graph g;
  Var root = loss_fn(g, g.leaf(point, false));
  if (root.value().size() != 1) throw ContractError("grad_check: loss is not scalar");
  return root.value()[0];
}

/// Central finite-difference gradient of `loss_fn` at `point`.
inline std::vector<double> central_difference(const LossFn& loss_fn, const Tensor& point, double h) {
  if (!(h > 0.0)) throw ContractError("grad_check: step h must be positive");
  std::vector<double> out(point.size());
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = evaluate_loss(loss_fn, probe);
    probe[i] = orig - h;
    const double down = evaluate_loss(loss_fn, probe);
    probe[i] = orig;
    out[i] = (up - down) / (2.0 * h);
  }
  return out;
}

inline std::vector<double> analytic_gradient(const LossFn& loss_fn, const Tensor& point) {
  Graph g;
  Var x = g.leaf(point, true);
  Var root = loss_fn(g, x);
  return g.backward(root).of(x);
}

/// max_i |analytic_i - numeric_i| / max(1, |numeric_i|)
inline double grad_check(const LossFn& loss_fn, const Tensor& point, double h = 1e-5) {
  const auto numeric = central_difference(loss_fn, point, h);
  const auto analytic = analytic_gradient(loss_fn, point);
  double worst = 0.0;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / std::max(1.0, std::abs(numeric[i])));
  }
  return worst;
}

}  // namespace hpt
