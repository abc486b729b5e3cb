#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hpt/attack.hpp"
#include "hpt/data.hpp"
#include "hpt/model.hpp"
#include "hpt/objectives.hpp"
#include "hpt/params.hpp"

namespace hpt {

inline constexpr std::size_t kAttackChunk = 256;

/// PGD examples for a whole dataset, generated in fixed-size chunks. PGD is
/// per-sample separable, so chunking does not change the result.
inline Tensor attack_dataset(const DualEncoderModel& model, const Dataset& data, const AttackConfig& cfg) {
  Tensor out({data.size(), data.input_dim()});
  for (std::size_t start = 0; start < data.size(); start += kAttackChunk) {
    const std::size_t end = std::min(data.size(), start + kAttackChunk);
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    Dataset chunk = subset(data, idx);
    Tensor adv = pgd_attack(model, chunk.features, chunk.labels, cfg);
    std::copy(adv.values().begin(), adv.values().end(), out.values().begin() + start * data.input_dim());
  }
  return out;
}

inline Tensor adaptive_attack_dataset(const DualEncoderModel& target, const DualEncoderModel& proxy,
                                      const Dataset& data, const AttackConfig& cfg) {
  Tensor out({data.size(), data.input_dim()});
  for (std::size_t start = 0; start < data.size(); start += kAttackChunk) {
    const std::size_t end = std::min(data.size(), start + kAttackChunk);
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    Dataset chunk = subset(data, idx);
    Tensor adv = adaptive_attack(target, proxy, chunk.features, chunk.labels, cfg);
    std::copy(adv.values().begin(), adv.values().end(), out.values().begin() + start * data.input_dim());
  }
  return out;
}

inline double clean_accuracy(const DualEncoderModel& model, const Dataset& data) {
  if (data.size() == 0) throw DataError("clean_accuracy: empty dataset");
  return accuracy_of(model, data.features, data.labels);
}

inline double adv_accuracy(const DualEncoderModel& model, const Dataset& data, const AttackConfig& cfg) {
  if (data.size() == 0) throw DataError("adv_accuracy: empty dataset");
  return accuracy_of(model, attack_dataset(model, data, cfg), data.labels);
}

struct EvalReport {
  std::string dataset;
  std::string model;
  double clean_acc = 0.0;
  double adv_acc = 0.0;
  AttackConfig attack;
  std::size_t samples = 0;
  std::size_t clean_correct = 0;
  std::size_t adv_correct = 0;
};

inline EvalReport evaluate(const DualEncoderModel& model, const std::string& model_id, const Dataset& data,
                           const AttackConfig& cfg) {
  data.validate();
  const Labels clean_pred = predict(model, data.features);
  const Labels adv_pred = predict(model, attack_dataset(model, data, cfg));
  EvalReport r{data.domain, model_id, 0.0, 0.0, cfg, data.size(), 0, 0};
  for (std::size_t i = 0; i < data.size(); ++i) {
    r.clean_correct += clean_pred[i] == data.labels[i];
    r.adv_correct += adv_pred[i] == data.labels[i];
  }
  r.clean_acc = static_cast<double>(r.clean_correct) / static_cast<double>(r.samples);
  r.adv_acc = static_cast<double>(r.adv_correct) / static_cast<double>(r.samples);
  return r;
}

/// M[i][j]: accuracy of model i on examples crafted against model j.
struct TransferMatrix {
  std::vector<std::string> model_ids;
  std::vector<std::vector<double>> accuracy;
  std::vector<double> clean_accuracy;
  AttackConfig attack;
  std::string dataset;
};

inline TransferMatrix transfer_matrix(const std::vector<const DualEncoderModel*>& models,
                                      const std::vector<std::string>& ids, const Dataset& data,
                                      const AttackConfig& cfg) {
  if (models.size() < 2) throw ConfigError("transfer_matrix: need at least two models");
  if (ids.size() != models.size()) throw ConfigError("transfer_matrix: one id per model required");
  for (const auto* m : models) {
    check_same_classes(*models[0], *m);
    if (m->image_spec.input_dim != data.input_dim()) throw ConfigError("transfer_matrix: input_dim mismatch");
  }
  data.validate();
  const std::size_t n = models.size();
  TransferMatrix tm{ids, std::vector<std::vector<double>>(n, std::vector<double>(n)), {}, cfg, data.domain};
  for (std::size_t j = 0; j < n; ++j) {
    const Tensor adv = attack_dataset(*models[j], data, cfg);
    for (std::size_t i = 0; i < n; ++i) tm.accuracy[i][j] = accuracy_of(*models[i], adv, data.labels);
  }
  for (const auto* m : models) tm.clean_accuracy.push_back(accuracy_of(*m, data.features, data.labels));
  return tm;
}

inline double param_distance(const DualEncoderModel& a, const DualEncoderModel& b) {
  return relative_distance(a.params, b.params);
}

// ---- risk-bound checks ----

enum class BoundLoss { l1_prob, kl };

inline std::string to_string(BoundLoss k) { return k == BoundLoss::l1_prob ? "l1_prob" : "kl"; }

inline BoundLoss bound_loss_from_string(const std::string& s) {
  if (s == "l1_prob") return BoundLoss::l1_prob;
  if (s == "kl") return BoundLoss::kl;
  throw ConfigError("unknown bound loss '" + s + "' (expected l1_prob or kl)");
}

/// L(a, b) between two distributions: sum |a - b|, or KL(a || b).
inline double distribution_loss(BoundLoss kind, std::span<const double> a, std::span<const double> b) {
  if (kind == BoundLoss::kl) return kl_div(a, b);
  double total = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) total += std::abs(a[j] - b[j]);
  return total;
}

struct BoundReport {
  BoundLoss loss_kind = BoundLoss::l1_prob;
  double eps_adv_T = 0.0;        // E L(T(x^a), y)
  double eps_cln_T = 0.0;        // E L(T(x), y)
  double eps_adv_TP_clean = 0.0; // E L(T(x^a), P(x))
  double eps_adv_TP_adv = 0.0;   // E L(T(x^a), P(x^a))
  double eps_cln_TP = 0.0;       // E L(T(x), P(x))
  double eps_cln_P = 0.0;        // E L(P(x), y)
  double eps_adv_P = 0.0;        // E L(P(x^a), y)
  double lhs = 0.0;
  double rhs_theorem1 = 0.0;
  double rhs_theorem2 = 0.0;
  bool holds_1 = false;
  bool holds_2 = false;
  /// Samples where the pointwise triangle inequality behind each bound fails.
  std::size_t pointwise_violations_1 = 0;
  std::size_t pointwise_violations_2 = 0;
  std::size_t samples = 0;
  AttackConfig attack;
  std::string dataset;
};

inline constexpr double kBoundSlack = 1e-9;

/// Estimates every risk term on one shared adversarial batch against the target.
inline BoundReport bound_check(const DualEncoderModel& target, const DualEncoderModel& proxy, const Dataset& data,
                               const AttackConfig& cfg, BoundLoss kind) {
  check_same_classes(target, proxy);
  data.validate();
  const Tensor x_adv = attack_dataset(target, data, cfg);
  const Tensor t_adv = softmax_distribution(similarity_logits(target, x_adv));
  const Tensor t_cln = softmax_distribution(similarity_logits(target, data.features));
  const Tensor p_adv = softmax_distribution(similarity_logits(proxy, x_adv));
  const Tensor p_cln = softmax_distribution(similarity_logits(proxy, data.features));
  const Tensor y = one_hot(data.labels, target.num_classes);

  BoundReport r;
  r.loss_kind = kind;
  r.samples = data.size();
  r.attack = cfg;
  r.dataset = data.domain;
  const double n = static_cast<double>(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double adv_T = distribution_loss(kind, t_adv.row(i), y.row(i));
    const double cln_T = distribution_loss(kind, t_cln.row(i), y.row(i));
    const double adv_TP_cln = distribution_loss(kind, t_adv.row(i), p_cln.row(i));
    const double adv_TP_adv = distribution_loss(kind, t_adv.row(i), p_adv.row(i));
    const double cln_TP = distribution_loss(kind, t_cln.row(i), p_cln.row(i));
    const double cln_P = distribution_loss(kind, p_cln.row(i), y.row(i));
    const double adv_P = distribution_loss(kind, p_adv.row(i), y.row(i));
    if (adv_T > adv_TP_cln + cln_P + kBoundSlack || cln_T > cln_TP + cln_P + kBoundSlack) ++r.pointwise_violations_1;
    if (adv_T > adv_TP_adv + adv_P + kBoundSlack || cln_T > cln_TP + cln_P + kBoundSlack) ++r.pointwise_violations_2;
    r.eps_adv_T += adv_T / n;
    r.eps_cln_T += cln_T / n;
    r.eps_adv_TP_clean += adv_TP_cln / n;
    r.eps_adv_TP_adv += adv_TP_adv / n;
    r.eps_cln_TP += cln_TP / n;
    r.eps_cln_P += cln_P / n;
    r.eps_adv_P += adv_P / n;
  }
  r.lhs = r.eps_adv_T + r.eps_cln_T;
  r.rhs_theorem1 = r.eps_adv_TP_clean + r.eps_cln_TP + 2.0 * r.eps_cln_P;
  r.rhs_theorem2 = r.eps_adv_TP_adv + r.eps_cln_TP + r.eps_adv_P + r.eps_cln_P;
  r.holds_1 = r.lhs <= r.rhs_theorem1 + kBoundSlack;
  r.holds_2 = r.lhs <= r.rhs_theorem2 + kBoundSlack;
  return r;
}

}  // namespace hpt
