#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "hpt/model.hpp"
#include "hpt/objectives.hpp"

namespace hpt {

/// l-infinity PGD settings. An unset step_size resolves to 2.5 * epsilon / steps.
struct AttackConfig {
  double epsilon = 1.0 / 255.0;
  std::size_t steps = 10;
  std::optional<double> step_size;
  double clamp_min = 0.0;
  double clamp_max = 1.0;
  /// 0 means a single zero-initialised run; n >= 1 adds n seeded uniform starts.
  std::size_t restarts = 0;
  std::uint64_t restart_seed = 0;

  double resolved_step_size() const {
    if (step_size) return *step_size;
    return steps == 0 ? 0.0 : 2.5 * epsilon / static_cast<double>(steps);
  }

  void validate() const {
    if (!(epsilon >= 0.0)) throw ConfigError(detail::concat("attack: epsilon ", epsilon, " must be >= 0"));
    if (!(clamp_max > clamp_min)) throw ConfigError("attack: clamp_max must exceed clamp_min");
    if (epsilon > clamp_max - clamp_min) throw ConfigError("attack: epsilon exceeds the input range");
    if (step_size && !(*step_size > 0.0)) throw ConfigError("attack: step_size must be positive");
  }

  friend bool operator==(const AttackConfig&, const AttackConfig&) = default;
};

inline AttackConfig pgd_config(std::size_t steps, double epsilon = 1.0 / 255.0) {
  AttackConfig cfg;
  cfg.steps = steps;
  cfg.epsilon = epsilon;
  return cfg;
}

namespace detail {

struct LossAndGrad {
  std::vector<double> per_sample;  // losses of the model whose iterate quality we track
  std::vector<double> input_grad;
};

/// Cross-entropy of each model at x, summed for the gradient; per-sample
/// losses are reported for `models[0]`.
inline LossAndGrad attack_objective(std::span<const DualEncoderModel* const> models, const Tensor& x,
                                    std::span<const Label> labels) {
  Graph g;
  Var input = g.leaf(x, true);
  Var total{};
  std::vector<double> tracked;
  for (std::size_t m = 0; m < models.size(); ++m) {
    ModelVars vars = bind_model(g, *models[m], false, false);
    Var logits = similarity_logits(*models[m], vars, input);
    if (m == 0) tracked = per_sample_ce(logits.value(), labels);
    // Summed (not averaged) over the batch so per-sample gradients keep their scale.
    Var loss = scale(ce_loss(logits, labels), static_cast<double>(x.rows()));
    total = m == 0 ? loss : add(total, loss);
  }
  return {std::move(tracked), g.backward(total).of(input)};
}

inline std::vector<double> tracked_loss(const DualEncoderModel& model, const Tensor& x, std::span<const Label> labels) {
  return per_sample_ce(similarity_logits(model, x), labels);
}

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

/// One PGD trajectory from `start`; keeps the per-sample best iterate in (best, best_loss).
inline void pgd_run(std::span<const DualEncoderModel* const> models, const Tensor& x, Tensor start,
                    std::span<const Label> labels, const AttackConfig& cfg, Tensor& best,
                    std::vector<double>& best_loss) {
  const double step = cfg.resolved_step_size();
  Tensor cur = std::move(start);
  auto consider = [&](const Tensor& cand, const std::vector<double>& loss) {
    for (std::size_t r = 0; r < x.rows(); ++r) {
      if (loss[r] > best_loss[r]) {
        best_loss[r] = loss[r];
        std::copy(cand.row(r).begin(), cand.row(r).end(), best.row(r).begin());
      }
    }
  };
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    auto lg = attack_objective(models, cur, labels);
    consider(cur, lg.per_sample);
    for (std::size_t i = 0; i < cur.size(); ++i) {
      const double x0 = x[i];
      double v = cur[i] + step * sign(lg.input_grad[i]);
      v = std::clamp(v, x0 - cfg.epsilon, x0 + cfg.epsilon);
      cur[i] = std::clamp(v, cfg.clamp_min, cfg.clamp_max);
    }
  }
  if (cfg.steps > 0) consider(cur, tracked_loss(*models[0], cur, labels));
}

inline Tensor pgd_multi(std::span<const DualEncoderModel* const> models, const Tensor& images,
                        std::span<const Label> labels, const AttackConfig& cfg) {
  cfg.validate();
  check_labels(labels, images.rows(), models[0]->num_classes);
  for (double v : images.values()) {
    if (!(v >= cfg.clamp_min && v <= cfg.clamp_max)) {
      throw DataError(detail::concat("attack: input value ", v, " outside [", cfg.clamp_min, ", ", cfg.clamp_max, "]"));
    }
  }
  Tensor best = images;
  std::vector<double> best_loss = tracked_loss(*models[0], images, labels);
  if (cfg.epsilon == 0.0 || cfg.steps == 0) return best;

  pgd_run(models, images, images, labels, cfg, best, best_loss);
  if (cfg.restarts > 0) {
    std::mt19937_64 rng(cfg.restart_seed);
    std::uniform_real_distribution<double> dist(-cfg.epsilon, cfg.epsilon);
    for (std::size_t k = 0; k < cfg.restarts; ++k) {
      Tensor start = images;
      for (double& v : start.values()) v = std::clamp(v + dist(rng), cfg.clamp_min, cfg.clamp_max);
      pgd_run(models, images, std::move(start), labels, cfg, best, best_loss);
    }
  }
  return best;
}

}  // namespace detail

/// Untargeted l-infinity PGD on the model's cross-entropy. Returns, per sample,
/// the visited iterate (start included) with the highest loss.
inline Tensor pgd_attack(const DualEncoderModel& model, const Tensor& images, std::span<const Label> labels,
                         const AttackConfig& cfg) {
  const DualEncoderModel* models[] = {&model};
  return detail::pgd_multi(models, images, labels, cfg);
}

/// PGD whose ascent direction uses the gradient of CE_target + CE_proxy.
/// Iterates are ranked by the target's loss, the model under evaluation.
inline Tensor adaptive_attack(const DualEncoderModel& target, const DualEncoderModel& proxy, const Tensor& images,
                              std::span<const Label> labels, const AttackConfig& cfg) {
  check_same_classes(target, proxy);
  if (target.image_spec.input_dim != proxy.image_spec.input_dim) {
    throw ConfigError("adaptive_attack: models disagree on input_dim");
  }
  const DualEncoderModel* models[] = {&target, &proxy};
  return detail::pgd_multi(models, images, labels, cfg);
}

}  // namespace hpt
