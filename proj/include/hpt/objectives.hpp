#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "hpt/model.hpp"
#include "hpt/tensor.hpp"

namespace hpt {

/// Floor applied to the second KL argument before taking its log.
inline constexpr double kEpsProb = 1e-12;

inline void check_labels(std::span<const Label> labels, std::size_t rows, std::size_t num_classes) {
  if (labels.size() != rows) {
    throw DataError(detail::concat("labels: ", labels.size(), " labels for a batch of ", rows));
  }
  for (Label y : labels) {
    if (y >= num_classes) throw DataError(detail::concat("labels: class id ", y, " out of range [0, ", num_classes, ")"));
  }
}

inline Tensor one_hot(std::span<const Label> labels, std::size_t num_classes) {
  check_labels(labels, labels.size(), num_classes);
  Tensor out({labels.size(), num_classes});
  for (std::size_t i = 0; i < labels.size(); ++i) out.at(i, labels[i]) = 1.0;
  return out;
}

/// Row-wise softmax with max subtraction.
inline Tensor softmax_distribution(const Tensor& logits) {
  Graph g;
  return softmax_rows(g.constant(logits)).value();
}

/// KL(A || B) = sum_j A_j log(A_j / B_j), with 0 log 0 = 0 and B floored at kEpsProb.
inline double kl_div(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError(detail::concat("kl_div: lengths ", a.size(), " and ", b.size()));
  double total = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    if (a[j] <= 0.0) continue;
    total += a[j] * (std::log(a[j]) - std::log(std::max(b[j], kEpsProb)));
  }
  return total;
}

inline void check_same_classes(const DualEncoderModel& a, const DualEncoderModel& b) {
  if (a.num_classes != b.num_classes) {
    throw ConfigError(detail::concat("models disagree on class count (", a.num_classes, " vs ", b.num_classes, ")"));
  }
}

// ---- graph forms: differentiable w.r.t. the Var arguments only ----

/// mean_i -log softmax(logits_i)[y_i]
inline Var ce_loss(Var logits, std::span<const Label> labels) {
  const Tensor& z = logits.value();
  check_labels(labels, z.rows(), z.cols());
  Graph& g = *logits.graph;
  Var picked = mul(log_softmax_rows(logits), g.constant(one_hot(labels, z.cols())));
  return scale(sum(picked), -1.0 / static_cast<double>(z.rows()));
}

/// mean_i KL(softmax(logits_i) || target_i) where `target` is a fixed distribution batch.
inline Var kl_to_fixed(Var logits, const Tensor& target) {
  const Tensor& z = logits.value();
  if (z.shape() != target.shape()) {
    throw DimensionError(detail::concat("kl: logits ", shape_str(z.shape()), " vs target ", shape_str(target.shape())));
  }
  Graph& g = *logits.graph;
  Tensor log_target = target;
  for (double& v : log_target.values()) v = std::log(std::max(v, kEpsProb));
  Var log_p = log_softmax_rows(logits);
  Var terms = mul(softmax_rows(logits), sub(log_p, g.constant(std::move(log_target))));
  return scale(sum(terms), 1.0 / static_cast<double>(z.rows()));
}

/// Proxy predictions are computed outside the graph, so the proxy never receives gradient.
inline Tensor frozen_distribution(const DualEncoderModel& proxy, const Tensor& images) {
  return softmax_distribution(similarity_logits(proxy, images));
}

/// L_RT = mean KL(P_D(T(x_adv)) || P_D(P(x_adv)))
inline Var rt_clip_loss(const DualEncoderModel& target, const ModelVars& vars, const DualEncoderModel& proxy,
                        Var x_adv) {
  check_same_classes(target, proxy);
  return kl_to_fixed(similarity_logits(target, vars, x_adv), frozen_distribution(proxy, x_adv.value()));
}

/// L_GA = mean KL(P_D(T(x_adv)) || P_D(P(x_clean)))
inline Var ga_loss(const DualEncoderModel& target, const ModelVars& vars, const DualEncoderModel& proxy, Var x_adv,
                   const Tensor& x_clean) {
  check_same_classes(target, proxy);
  if (x_adv.value().shape() != x_clean.shape()) {
    throw DataError(detail::concat("ga_loss: adversarial batch ", shape_str(x_adv.value().shape()),
                                   " not aligned with clean batch ", shape_str(x_clean.shape())));
  }
  return kl_to_fixed(similarity_logits(target, vars, x_adv), frozen_distribution(proxy, x_clean));
}

/// alpha KL(S(x) || T(x)) + (1 - alpha) CE(S(x), y); teacher frozen.
inline Var ard_loss(const DualEncoderModel& student, const ModelVars& vars, const DualEncoderModel& teacher, Var x_adv,
                    std::span<const Label> labels, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError(detail::concat("ard_loss: alpha ", alpha, " outside [0, 1]"));
  check_same_classes(student, teacher);
  Var logits = similarity_logits(student, vars, x_adv);
  Var kl = kl_to_fixed(logits, frozen_distribution(teacher, x_adv.value()));
  Var ce = ce_loss(logits, labels);
  return add(scale(kl, alpha), scale(ce, 1.0 - alpha));
}

/// Outer objective of adversarial fine-tuning: CE at the adversarial inputs.
inline Var aft_ce_objective(const DualEncoderModel& model, const ModelVars& vars, Var x_adv,
                            std::span<const Label> labels) {
  return ce_loss(similarity_logits(model, vars, x_adv), labels);
}

// ---- value forms ----

inline double ce_loss(const Tensor& logits, std::span<const Label> labels) {
  Graph g;
  return ce_loss(g.constant(logits), labels).value()[0];
}

/// Per-row cross-entropy, used by the attack for best-iterate bookkeeping.
inline std::vector<double> per_sample_ce(const Tensor& logits, std::span<const Label> labels) {
  check_labels(labels, logits.rows(), logits.cols());
  std::vector<double> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    out[r] = -(row[labels[r]] - mx - std::log(z));
  }
  return out;
}

namespace detail {

template <class Build>
double eval_loss(const DualEncoderModel& model, const Tensor& x, Build&& build) {
  Graph g;
  ModelVars vars = bind_model(g, model, false, false);
  return build(vars, g.constant(x)).value()[0];
}

}  // namespace detail

inline double rt_clip_loss(const DualEncoderModel& target, const DualEncoderModel& proxy, const Tensor& x_adv) {
  return detail::eval_loss(target, x_adv, [&](const ModelVars& v, Var x) { return rt_clip_loss(target, v, proxy, x); });
}

inline double ga_loss(const DualEncoderModel& target, const DualEncoderModel& proxy, const Tensor& x_adv,
                      const Tensor& x_clean) {
  return detail::eval_loss(target, x_adv,
                           [&](const ModelVars& v, Var x) { return ga_loss(target, v, proxy, x, x_clean); });
}

inline double ard_loss(const DualEncoderModel& student, const DualEncoderModel& teacher, const Tensor& x_adv,
                       std::span<const Label> labels, double alpha) {
  return detail::eval_loss(student, x_adv,
                           [&](const ModelVars& v, Var x) { return ard_loss(student, v, teacher, x, labels, alpha); });
}

inline double aft_ce_objective(const DualEncoderModel& model, const Tensor& x_adv, std::span<const Label> labels) {
  return detail::eval_loss(model, x_adv, [&](const ModelVars& v, Var x) { return aft_ce_objective(model, v, x, labels); });
}

}  // namespace hpt
