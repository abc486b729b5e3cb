#pragma once

#include <cmath>
#include <cstdint>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hpt/attack.hpp"
#include "hpt/data.hpp"
#include "hpt/model.hpp"
#include "hpt/objectives.hpp"
#include "hpt/params.hpp"

namespace hpt {

enum class HptInit { vanilla, warmup_ema };

inline std::string to_string(HptInit v) { return v == HptInit::vanilla ? "vanilla" : "warmup_ema"; }

struct TrainConfig {
  double warmup_lr = 5e-5;
  double hpt_lr = 5e-2;
  /// Single learning rate of the AFT and ARD comparators.
  double baseline_lr = 5e-2;
  std::size_t warmup_epochs = 5;
  std::size_t hpt_epochs = 5;
  std::size_t batch_size = 64;
  double gamma = 0.9;
  double beta = 0.5;
  double ard_alpha = 1.0;
  AttackConfig train_attack = pgd_config(2);
  AttackConfig eval_attack = pgd_config(10);
  std::uint64_t seed = 42;
  bool freeze_text = false;
  HptInit hpt_init = HptInit::vanilla;
  /// Samples (from the head of the training set) used for per-epoch accuracy diagnostics.
  std::size_t monitor_samples = 512;

  std::size_t total_epochs() const { return warmup_epochs + hpt_epochs; }

  void validate() const {
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!unit(gamma)) throw ConfigError(detail::concat("gamma ", gamma, " outside [0, 1]"));
    if (!unit(beta)) throw ConfigError(detail::concat("beta ", beta, " outside [0, 1]"));
    if (!unit(ard_alpha)) throw ConfigError(detail::concat("ard_alpha ", ard_alpha, " outside [0, 1]"));
    for (double lr : {warmup_lr, hpt_lr, baseline_lr}) {
      if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError(detail::concat("learning rate ", lr, " must be >= 0"));
    }
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    train_attack.validate();
    eval_attack.validate();
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Epoch-indexed EMA of the full parameter set; `epoch == 0` holds the vanilla parameters.
struct EmaState {
  ParamList params;
  std::size_t epoch = 0;
};

struct TrainRecord {
  std::size_t epoch = 0;
  std::string stage;
  double loss = 0.0;
  double clean_acc = 0.0;
  double adv_acc = 0.0;
  double param_dist = 0.0;

  friend bool operator==(const TrainRecord&, const TrainRecord&) = default;
};

struct TrainLog {
  std::vector<TrainRecord> records;

  void append(const TrainLog& other) { records.insert(records.end(), other.records.begin(), other.records.end()); }

  std::string to_csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "epoch,stage,loss,clean_acc,adv_acc,param_dist\n";
    for (const auto& r : records) {
      out << r.epoch << ',' << r.stage << ',' << r.loss << ',' << r.clean_acc << ',' << r.adv_acc << ',' << r.param_dist
          << '\n';
    }
    return out.str();
  }
};

// ---- parameter-space updates ----

/// p <- p - lr * g
inline void sgd_step(ParamList& params, const std::vector<std::vector<double>>& grads, double lr) {
  if (!(lr >= 0.0)) throw ContractError(detail::concat("sgd_step: learning rate ", lr, " must be >= 0"));
  if (grads.size() != params.size()) {
    throw ContractError(detail::concat("sgd_step: ", grads.size(), " gradients for ", params.size(), " tensors"));
  }
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (grads[t].size() != params[t].size()) {
      throw ContractError(detail::concat("sgd_step: gradient ", t, " has ", grads[t].size(), " entries, tensor has ",
                                         params[t].size()));
    }
  }
  if (lr == 0.0) return;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& p = params[t].values();
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * grads[t][i];
  }
}

inline EmaState ema_init(const ParamList& vanilla) { return EmaState{vanilla, 0}; }

/// ema^k = gamma * ema^{k-1} + (1 - gamma) * current
inline EmaState ema_update(const EmaState& state, const ParamList& current, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError(detail::concat("ema_update: gamma ", gamma, " outside [0, 1]"));
  return EmaState{blend(state.params, current, gamma), state.epoch + 1};
}

/// HPT epoch-start parameters: vanilla at e = 0, otherwise beta * prev + (1 - beta) * ema.
inline ParamList generalization_pull(const ParamList& prev_epoch_end, const ParamList& ema, double beta, std::size_t e,
                                     const ParamList& vanilla) {
  if (!(beta >= 0.0 && beta <= 1.0)) {
    throw ConfigError(detail::concat("generalization_pull: beta ", beta, " outside [0, 1]"));
  }
  check_compatible(prev_epoch_end, ema, "generalization_pull");
  check_compatible(ema, vanilla, "generalization_pull");
  if (e == 0) return vanilla;
  return blend(prev_epoch_end, ema, beta);
}

// ---- epoch driver ----

/// Builds the scalar batch loss: (vars, x_adv, x_clean, labels) -> Var.
using BatchLoss =
    std::function<Var(const DualEncoderModel&, const ModelVars&, Var, const Tensor&, std::span<const Label>)>;

struct EpochOptions {
  std::string stage;
  std::size_t epoch = 0;
  double lr = 0.0;
  const AttackConfig* attack = nullptr;  // null: train on clean inputs
  bool freeze_text = false;
  std::size_t batch_size = 64;
};

inline std::vector<std::size_t> shuffled_order(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  return order;
}

/// One pass over `data` in a seeded shuffled order; returns the sample-weighted mean loss.
inline double run_epoch(DualEncoderModel& model, const Dataset& data, const EpochOptions& opt, std::mt19937_64& rng,
                        const BatchLoss& loss_fn) {
  if (data.size() == 0) throw DataError("training dataset is empty");
  const auto order = shuffled_order(data.size(), rng);
  double total = 0.0;
  std::size_t batch_index = 0;
  for (std::size_t start = 0; start < order.size(); start += opt.batch_size, ++batch_index) {
    const std::size_t end = std::min(order.size(), start + opt.batch_size);
    std::span<const std::size_t> idx(order.data() + start, end - start);
    Dataset batch = subset(data, idx);
    Tensor x_adv = opt.attack ? pgd_attack(model, batch.features, batch.labels, *opt.attack) : batch.features;

    Graph g;
    ModelVars vars = bind_model(g, model, true, !opt.freeze_text);
    Var loss = loss_fn(model, vars, g.constant(std::move(x_adv)), batch.features, batch.labels);
    const double value = loss.value()[0];
    if (!std::isfinite(value)) {
      throw NumericalError(detail::concat("non-finite loss in stage ", opt.stage, ", epoch ", opt.epoch, ", batch ",
                                          batch_index));
    }
    Gradients grads = g.backward(loss);
    std::vector<std::vector<double>> per_tensor;
    per_tensor.reserve(vars.size());
    for (Var v : vars) per_tensor.push_back(grads.of(v));
    sgd_step(model.params, per_tensor, opt.lr);
    total += value * static_cast<double>(idx.size());
  }
  if (!all_finite(model.params)) {
    throw NumericalError(detail::concat("non-finite parameters after stage ", opt.stage, ", epoch ", opt.epoch));
  }
  return total / static_cast<double>(data.size());
}

inline TrainRecord monitor(const DualEncoderModel& model, const ParamList& vanilla, const Dataset& data,
                           const TrainConfig& cfg, std::string stage, std::size_t epoch, double loss) {
  Dataset probe = head(data, cfg.monitor_samples);
  Tensor adv = pgd_attack(model, probe.features, probe.labels, cfg.train_attack);
  return TrainRecord{epoch,
                     std::move(stage),
                     loss,
                     accuracy_of(model, probe.features, probe.labels),
                     accuracy_of(model, adv, probe.labels),
                     relative_distance(model.params, vanilla)};
}

inline std::mt19937_64 stage_rng(std::uint64_t seed, std::uint32_t stage_tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stage_tag};
  return std::mt19937_64(seq);
}

// ---- stages ----

struct WarmupResult {
  DualEncoderModel target;
  EmaState ema;
  TrainLog log;
};

/// Generalization-anchored warm-up: PGD against the current target, SGD on
/// L_GA at warmup_lr, EMA of the parameters after every epoch.
inline WarmupResult warmup_stage(const DualEncoderModel& target, const DualEncoderModel& proxy, const Dataset& data,
                                 const TrainConfig& cfg) {
  cfg.validate();
  data.validate();
  check_same_classes(target, proxy);
  const ParamList vanilla = target.params;
  WarmupResult out{target, ema_init(vanilla), {}};
  auto rng = stage_rng(cfg.seed, 1);
  const BatchLoss loss = [&proxy](const DualEncoderModel& m, const ModelVars& v, Var x_adv, const Tensor& x_clean,
                                  std::span<const Label>) { return ga_loss(m, v, proxy, x_adv, x_clean); };
  for (std::size_t e = 0; e < cfg.warmup_epochs; ++e) {
    const EpochOptions opt{"warmup", e + 1, cfg.warmup_lr, &cfg.train_attack, cfg.freeze_text, cfg.batch_size};
    const double mean_loss = run_epoch(out.target, data, opt, rng, loss);
    out.ema = ema_update(out.ema, out.target.params, cfg.gamma);
    out.log.records.push_back(monitor(out.target, vanilla, data, cfg, "warmup", e + 1, mean_loss));
  }
  return out;
}

/// Generalization-pulled HPT: each epoch starts from generalization_pull, then
/// runs SGD on L_RT-CLIP at hpt_lr. Epochs are numbered from epoch_offset + 1.
inline std::pair<DualEncoderModel, TrainLog> hpt_stage(const DualEncoderModel& vanilla_model, const EmaState& ema,
                                                      const DualEncoderModel& proxy, const Dataset& data,
                                                      const TrainConfig& cfg, std::size_t epoch_offset = 0) {
  cfg.validate();
  data.validate();
  check_same_classes(vanilla_model, proxy);
  if (ema.epoch == 0) {
    std::clog << "hpt: EMA anchor has no warm-up epochs; pulls blend toward the vanilla parameters\n";
  }
  const ParamList& vanilla = vanilla_model.params;
  DualEncoderModel target = vanilla_model;
  TrainLog log;
  auto rng = stage_rng(cfg.seed, 2);
  const BatchLoss loss = [&proxy](const DualEncoderModel& m, const ModelVars& v, Var x_adv, const Tensor&,
                                  std::span<const Label>) { return rt_clip_loss(m, v, proxy, x_adv); };
  for (std::size_t e = 0; e < cfg.hpt_epochs; ++e) {
    if (e == 0) {
      target.params = cfg.hpt_init == HptInit::vanilla ? vanilla : ema.params;
    } else {
      target.params = generalization_pull(target.params, ema.params, cfg.beta, e, vanilla);
    }
    const std::size_t epoch = epoch_offset + e + 1;
    const EpochOptions opt{"hpt", epoch, cfg.hpt_lr, &cfg.train_attack, cfg.freeze_text, cfg.batch_size};
    const double mean_loss = run_epoch(target, data, opt, rng, loss);
    log.records.push_back(monitor(target, vanilla, data, cfg, "hpt", epoch, mean_loss));
  }
  return {std::move(target), std::move(log)};
}

struct HptGpdResult {
  DualEncoderModel target;
  EmaState ema;
  DualEncoderModel warmup_model;
  TrainLog log;
};

inline HptGpdResult run_hpt_gpd(const TrainConfig& cfg, const DualEncoderModel& vanilla, const DualEncoderModel& proxy,
                                const Dataset& data) {
  WarmupResult warm = warmup_stage(vanilla, proxy, data, cfg);
  HptGpdResult out{vanilla, warm.ema, warm.target, warm.log};
  if (cfg.hpt_epochs > 0) {
    auto [target, log] = hpt_stage(vanilla, warm.ema, proxy, data, cfg, cfg.warmup_epochs);
    out.target = std::move(target);
    out.log.append(log);
  } else if (cfg.warmup_epochs > 0) {
    out.target = warm.target;
  }
  return out;
}

/// Single-stage fine-tuning from vanilla for warmup_epochs + hpt_epochs epochs.
inline std::pair<DualEncoderModel, TrainLog> single_stage(const DualEncoderModel& vanilla, const Dataset& data,
                                                         const TrainConfig& cfg, const std::string& stage, double lr,
                                                         std::uint32_t tag, const BatchLoss& loss) {
  cfg.validate();
  data.validate();
  DualEncoderModel model = vanilla;
  TrainLog log;
  auto rng = stage_rng(cfg.seed, tag);
  for (std::size_t e = 0; e < cfg.total_epochs(); ++e) {
    const EpochOptions opt{stage, e + 1, lr, &cfg.train_attack, cfg.freeze_text, cfg.batch_size};
    const double mean_loss = run_epoch(model, data, opt, rng, loss);
    log.records.push_back(monitor(model, vanilla.params, data, cfg, stage, e + 1, mean_loss));
  }
  return {std::move(model), std::move(log)};
}

/// CE on PGD examples at baseline_lr (FT-TeCoA; with epsilon = 0 this is plain fine-tuning).
inline std::pair<DualEncoderModel, TrainLog> aft_baseline(const DualEncoderModel& vanilla, const Dataset& data,
                                                         const TrainConfig& cfg) {
  return single_stage(vanilla, data, cfg, "aft", cfg.baseline_lr, 3,
                      [](const DualEncoderModel& m, const ModelVars& v, Var x_adv, const Tensor&,
                         std::span<const Label> y) { return aft_ce_objective(m, v, x_adv, y); });
}

/// L_RT-CLIP alone at hpt_lr from vanilla: no warm-up, no EMA, no pulling.
inline std::pair<DualEncoderModel, TrainLog> naive_rt_baseline(const DualEncoderModel& vanilla,
                                                              const DualEncoderModel& proxy, const Dataset& data,
                                                              const TrainConfig& cfg) {
  check_same_classes(vanilla, proxy);
  return single_stage(vanilla, data, cfg, "naive_rt", cfg.hpt_lr, 4,
                      [&proxy](const DualEncoderModel& m, const ModelVars& v, Var x_adv, const Tensor&,
                               std::span<const Label>) { return rt_clip_loss(m, v, proxy, x_adv); });
}

/// ARD-style distillation from a frozen teacher at baseline_lr.
inline std::pair<DualEncoderModel, TrainLog> ard_baseline(const DualEncoderModel& vanilla,
                                                         const DualEncoderModel& teacher, const Dataset& data,
                                                         const TrainConfig& cfg) {
  check_same_classes(vanilla, teacher);
  const double alpha = cfg.ard_alpha;
  return single_stage(vanilla, data, cfg, "ard", cfg.baseline_lr, 5,
                      [&teacher, alpha](const DualEncoderModel& m, const ModelVars& v, Var x_adv, const Tensor&,
                                        std::span<const Label> y) { return ard_loss(m, v, teacher, x_adv, y, alpha); });
}

// ---- pretraining stand-in ----

struct PretrainConfig {
  std::size_t epochs = 20;
  double lr = 0.05;
  std::size_t batch_size = 64;
  std::uint64_t seed = 42;

  friend bool operator==(const PretrainConfig&, const PretrainConfig&) = default;
};

/// Clean cross-entropy training of a freshly initialised model.
inline std::pair<DualEncoderModel, TrainLog> pretrain(DualEncoderModel model, const Dataset& data,
                                                     const PretrainConfig& cfg, const std::string& stage) {
  data.validate();
  if (cfg.batch_size == 0) throw ConfigError("pretrain: batch_size must be positive");
  TrainLog log;
  auto rng = stage_rng(cfg.seed, 9);
  const ParamList init = model.params;
  const BatchLoss loss = [](const DualEncoderModel& m, const ModelVars& v, Var x, const Tensor&,
                            std::span<const Label> y) { return ce_loss(similarity_logits(m, v, x), y); };
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const EpochOptions opt{stage, e + 1, cfg.lr, nullptr, false, cfg.batch_size};
    const double mean_loss = run_epoch(model, data, opt, rng, loss);
    const double acc = accuracy_of(model, data.features, data.labels);
    log.records.push_back(TrainRecord{e + 1, stage, mean_loss, acc, 0.0, relative_distance(model.params, init)});
  }
  return {std::move(model), std::move(log)};
}

}  // namespace hpt
