#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include "hpt/config.hpp"
#include "hpt/eval.hpp"
#include "hpt/io.hpp"
#include "hpt/reports.hpp"
#include "hpt/trainer.hpp"

namespace hpt {

namespace fs = std::filesystem;

enum class FinetuneMethod { hpt_gpd, aft, naive_rt, ard };

inline std::string to_string(FinetuneMethod m) {
  switch (m) {
    case FinetuneMethod::hpt_gpd: return "hpt_gpd";
    case FinetuneMethod::aft: return "aft";
    case FinetuneMethod::naive_rt: return "naive_rt";
    case FinetuneMethod::ard: return "ard";
  }
  return "?";
}

inline FinetuneMethod finetune_method_from_string(const std::string& s) {
  for (auto m : {FinetuneMethod::hpt_gpd, FinetuneMethod::aft, FinetuneMethod::naive_rt, FinetuneMethod::ard})
    if (to_string(m) == s) return m;
  throw ConfigError("unknown method '" + s + "' (expected hpt_gpd, aft, naive_rt or ard)");
}

inline constexpr const char* kTrainFile = "in_domain_train.dsb";
inline constexpr const char* kTestFile = "in_domain_test.dsb";
inline constexpr const char* kTestDomain = "in_domain_test";

/// Files written by one command, in write order.
using Artifacts = std::vector<std::string>;

namespace detail {

inline void write_json(const fs::path& path, const json& j, Artifacts& out) {
  write_file(path, j.dump(2) + "\n");
  out.push_back(path.generic_string());
}

inline void write_text(const fs::path& path, const std::string& text, Artifacts& out) {
  write_file(path, text);
  out.push_back(path.generic_string());
}

inline std::string model_id(const fs::path& ckpt) { return ckpt.stem().string(); }

}  // namespace detail

/// Evaluation sets in a data directory: the held-out in-domain split, then each downstream domain.
inline std::vector<fs::path> eval_dataset_paths(const RunConfig& cfg, const fs::path& data_dir) {
  std::vector<fs::path> paths{data_dir / kTestFile};
  for (const auto& d : cfg.data.domains) paths.push_back(data_dir / (d.name + ".dsb"));
  return paths;
}

// ---- gen-data ----

inline Artifacts cmd_gen_data(const RunConfig& cfg, const fs::path& out_dir, std::ostream& log) {
  cfg.validate();
  const SyntheticData data = generate_synthetic(cfg.data, cfg.seed);
  Artifacts written;
  auto save = [&](const Dataset& d, const std::string& file) {
    save_dataset(d, out_dir / file);
    written.push_back((out_dir / file).generic_string());
    log << "  " << d.domain << ": " << d.size() << " samples\n";
  };
  save(data.train, kTrainFile);
  save(data.test, kTestFile);
  for (const auto& d : data.downstream) save(d, d.domain + ".dsb");
  log << "  clamp saturation " << data.saturation_rate * 100.0 << "%\n";
  return written;
}

// ---- pretrain ----

struct PretrainOutcome {
  DualEncoderModel model;
  double held_out_acc = 0.0;
  Artifacts artifacts;
};

/// Clean training of a fresh model of the given role; writes <role>.ckb and its log.
inline PretrainOutcome cmd_pretrain(const RunConfig& cfg, ModelRole role, const fs::path& data_dir,
                                    const fs::path& out_dir, std::ostream& log) {
  cfg.validate();
  const Dataset train = load_dataset(data_dir / kTrainFile);
  const Dataset test = load_dataset(data_dir / kTestFile);
  if (train.input_dim() != cfg.data.input_dim() || train.num_classes != cfg.data.num_classes) {
    throw ConfigError("pretrain: dataset geometry does not match the configuration");
  }
  DualEncoderModel init = init_model(cfg.image_spec(role), cfg.text_spec(role), cfg.data.num_classes, cfg.init_seed(role));
  init.temperature = cfg.temperature;
  const std::string name = to_string(role);
  auto [model, train_log] = pretrain(std::move(init), train, cfg.pretrain_config(role), "pretrain");
  PretrainOutcome out{std::move(model), 0.0, {}};
  out.held_out_acc = clean_accuracy(out.model, test);
  save_checkpoint(out.model, cfg.seed, out_dir / (name + ".ckb"));
  out.artifacts.push_back((out_dir / (name + ".ckb")).generic_string());
  detail::write_text(out_dir / (name + "_pretrain.csv"), train_log.to_csv(), out.artifacts);
  log << "  " << name << ": " << out.model.parameter_count() << " parameters, held-out clean accuracy "
      << out.held_out_acc << "\n";
  return out;
}

// ---- finetune ----

struct FinetuneOutcome {
  DualEncoderModel model;
  TrainLog log;
  Artifacts artifacts;
};

inline void check_models_match_data(const DualEncoderModel& m, const Dataset& d, const char* what) {
  if (m.num_classes != d.num_classes || m.image_spec.input_dim != d.input_dim()) {
    throw ConfigError(detail::concat(what, " checkpoint expects ", m.image_spec.input_dim, " inputs and ", m.num_classes,
                                     " classes; dataset has ", d.input_dim(), " and ", d.num_classes));
  }
}

/// Fine-tunes the vanilla checkpoint with one method; writes <method>.ckb plus CSV logs.
inline FinetuneOutcome cmd_finetune(const RunConfig& cfg, FinetuneMethod method, const fs::path& vanilla_ckpt,
                                    const fs::path& proxy_ckpt, const fs::path& data_dir, const fs::path& out_dir,
                                    std::ostream& log) {
  cfg.validate();
  const DualEncoderModel vanilla = load_checkpoint(vanilla_ckpt).model;
  const DualEncoderModel proxy = load_checkpoint(proxy_ckpt).model;
  const Dataset train = load_dataset(data_dir / kTrainFile);
  check_models_match_data(vanilla, train, "vanilla");
  check_models_match_data(proxy, train, "proxy");
  const TrainConfig tc = cfg.train_config();
  const std::string name = to_string(method);
  FinetuneOutcome out;
  switch (method) {
    case FinetuneMethod::hpt_gpd: {
      HptGpdResult r = run_hpt_gpd(tc, vanilla, proxy, train);
      TrainLog warm, hpt;
      for (const auto& rec : r.log.records) (rec.stage == "warmup" ? warm : hpt).records.push_back(rec);
      DualEncoderModel anchor = vanilla;
      anchor.params = r.ema.params;
      save_checkpoint(anchor, cfg.seed, out_dir / (name + "_ema.ckb"));
      out.artifacts.push_back((out_dir / (name + "_ema.ckb")).generic_string());
      detail::write_text(out_dir / (name + "_warmup.csv"), warm.to_csv(), out.artifacts);
      detail::write_text(out_dir / (name + "_hpt.csv"), hpt.to_csv(), out.artifacts);
      out.model = std::move(r.target);
      out.log = std::move(r.log);
      break;
    }
    case FinetuneMethod::aft: std::tie(out.model, out.log) = aft_baseline(vanilla, train, tc); break;
    case FinetuneMethod::naive_rt: std::tie(out.model, out.log) = naive_rt_baseline(vanilla, proxy, train, tc); break;
    case FinetuneMethod::ard: std::tie(out.model, out.log) = ard_baseline(vanilla, proxy, train, tc); break;
  }
  if (method != FinetuneMethod::hpt_gpd) detail::write_text(out_dir / (name + ".csv"), out.log.to_csv(), out.artifacts);
  save_checkpoint(out.model, cfg.seed, out_dir / (name + ".ckb"));
  out.artifacts.push_back((out_dir / (name + ".ckb")).generic_string());
  log << "  " << name << ": " << out.log.records.size() << " epochs, relative distance to vanilla "
      << param_distance(out.model, vanilla) << "\n";
  return out;
}

// ---- eval ----

struct EvalOutcome {
  std::vector<EvalReport> reports;
  Artifacts artifacts;
};

/// Clean and adversarial accuracy of one checkpoint on each dataset file; writes eval_<model>.{json,csv}.
inline EvalOutcome cmd_eval(const RunConfig& cfg, const fs::path& ckpt, const std::vector<fs::path>& datasets,
                            const fs::path& out_dir, std::ostream& log) {
  cfg.validate();
  const DualEncoderModel model = load_checkpoint(ckpt).model;
  const std::string id = detail::model_id(ckpt);
  EvalOutcome out;
  for (const auto& path : datasets) {
    const Dataset d = load_dataset(path);
    check_models_match_data(model, d, id.c_str());
    out.reports.push_back(evaluate(model, id, d, cfg.train.eval_attack));
    const auto& r = out.reports.back();
    log << "  " << id << " on " << r.dataset << ": clean " << r.clean_acc << ", adv " << r.adv_acc << "\n";
  }
  detail::write_json(out_dir / ("eval_" + id + ".json"), to_json(out.reports), out.artifacts);
  detail::write_text(out_dir / ("eval_" + id + ".csv"), to_csv(out.reports), out.artifacts);
  return out;
}

// ---- transfer matrix ----

struct TransferOutcome {
  TransferMatrix matrix;
  Artifacts artifacts;
};

inline TransferOutcome cmd_transfer_matrix(const RunConfig& cfg, const std::vector<fs::path>& ckpts,
                                           const fs::path& dataset, const fs::path& out_dir, std::ostream& log) {
  cfg.validate();
  if (ckpts.size() < 2) throw ConfigError("transfer-matrix: need at least two checkpoints");
  std::vector<DualEncoderModel> models;
  std::vector<std::string> ids;
  for (const auto& c : ckpts) {
    models.push_back(load_checkpoint(c).model);
    ids.push_back(detail::model_id(c));
  }
  std::vector<const DualEncoderModel*> ptrs;
  for (const auto& m : models) ptrs.push_back(&m);
  const Dataset d = load_dataset(dataset);
  TransferOutcome out{transfer_matrix(ptrs, ids, d, cfg.train.eval_attack), {}};
  detail::write_json(out_dir / "transfer_matrix.json", to_json(out.matrix), out.artifacts);
  detail::write_text(out_dir / "transfer_matrix.csv", to_csv(out.matrix), out.artifacts);
  log << to_csv(out.matrix);
  return out;
}

// ---- bound check ----

struct BoundOutcome {
  BoundReport report;
  Artifacts artifacts;
};

inline BoundOutcome cmd_bound_check(const RunConfig& cfg, const fs::path& target_ckpt, const fs::path& proxy_ckpt,
                                    const fs::path& dataset, BoundLoss kind, const fs::path& out_dir,
                                    std::ostream& log) {
  cfg.validate();
  const DualEncoderModel target = load_checkpoint(target_ckpt).model;
  const DualEncoderModel proxy = load_checkpoint(proxy_ckpt).model;
  const Dataset d = load_dataset(dataset);
  check_models_match_data(target, d, "target");
  check_models_match_data(proxy, d, "proxy");
  BoundOutcome out{bound_check(target, proxy, d, cfg.train.eval_attack, kind), {}};
  const std::string stem =
      "bound_" + detail::model_id(target_ckpt) + "_" + detail::model_id(proxy_ckpt) + "_" + d.domain;
  detail::write_json(out_dir / (stem + ".json"), to_json(out.report), out.artifacts);
  detail::write_text(out_dir / (stem + ".csv"), to_csv(out.report), out.artifacts);
  const auto& r = out.report;
  log << "  " << detail::model_id(target_ckpt) << " on " << d.domain << " (" << to_string(kind) << "): lhs " << r.lhs
      << " <= " << r.rhs_theorem1 << " [theorem 1 " << (r.holds_1 ? "holds" : "FAILS") << "], <= " << r.rhs_theorem2
      << " [theorem 2 " << (r.holds_2 ? "holds" : "FAILS") << "]\n";
  return out;
}

// ---- pipeline ----

struct PhaseRecord {
  std::string name;
  double seconds = 0.0;
  Artifacts artifacts;
};

struct RunManifest {
  std::uint64_t seed = 0;
  std::string config;
  std::vector<PhaseRecord> phases;
  bool completed = false;
  std::string failed_phase;
  std::string error;
};

inline json to_json(const RunManifest& m) {
  json phases = json::array();
  for (const auto& p : m.phases) phases.push_back({{"name", p.name}, {"seconds", p.seconds}, {"artifacts", p.artifacts}});
  json j = {{"schema_version", kReportSchemaVersion},
            {"kind", "manifest"},
            {"seed", m.seed},
            {"config", m.config},
            {"phases", phases},
            {"completed", m.completed}};
  if (!m.failed_phase.empty()) {
    j["failed_phase"] = m.failed_phase;
    j["error"] = m.error;
  }
  return j;
}

/// Methods compared in the summary, after the two pretrained models.
inline const std::vector<FinetuneMethod>& pipeline_methods() {
  static const std::vector<FinetuneMethod> methods{FinetuneMethod::hpt_gpd, FinetuneMethod::aft,
                                                   FinetuneMethod::naive_rt, FinetuneMethod::ard};
  return methods;
}

inline std::vector<std::string> pipeline_plan(const RunConfig& cfg) {
  const fs::path out = cfg.output_dir;
  std::vector<std::string> plan;
  plan.push_back("gen-data        -> " + (out / "data").generic_string());
  plan.push_back("pretrain        vanilla_target, proxy -> " + (out / "models").generic_string());
  std::string methods;
  for (auto m : pipeline_methods()) methods += (methods.empty() ? "" : ", ") + to_string(m);
  plan.push_back("finetune        " + methods + " -> " + (out / "models").generic_string());
  plan.push_back("eval            all models on in_domain_test and " + std::to_string(cfg.data.domains.size()) +
                 " downstream domains -> " + (out / "reports").generic_string());
  plan.push_back("transfer-matrix vanilla_target, proxy, hpt_gpd, naive_rt on in_domain_test");
  plan.push_back("bound-check     vanilla_target, hpt_gpd, naive_rt against proxy, every eval dataset, " +
                 to_string(cfg.bound_loss));
  plan.push_back("summary         -> " + (out / "summary.txt").generic_string() + ", summary.json");
  return plan;
}

/// gen-data, pretraining, every fine-tuning method, evaluation, transfer matrix,
/// bound checks and the summary table. The manifest is written last, also on failure.
inline RunManifest cmd_pipeline(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const fs::path out = cfg.output_dir;
  const fs::path data_dir = out / "data", models = out / "models", reports = out / "reports";
  RunManifest manifest{cfg.seed, serialize_config(cfg), {}, false, {}, {}};

  auto phase = [&](const std::string& name, const std::function<Artifacts()>& body) {
    log << "[" << name << "]\n";
    const auto t0 = std::chrono::steady_clock::now();
    try {
      Artifacts a = body();
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      manifest.phases.push_back({name, secs, std::move(a)});
    } catch (const std::exception& e) {
      manifest.failed_phase = name;
      manifest.error = e.what();
      try {
        write_file(out / "manifest.json", to_json(manifest).dump(2) + "\n");
      } catch (const std::exception&) {
      }
      throw;
    }
  };

  phase("config", [&] {
    Artifacts a;
    detail::write_text(out / "config.cfg", manifest.config, a);
    return a;
  });
  phase("gen-data", [&] { return cmd_gen_data(cfg, data_dir, log); });
  phase("pretrain", [&] {
    Artifacts a = cmd_pretrain(cfg, ModelRole::vanilla_target, data_dir, models, log).artifacts;
    Artifacts b = cmd_pretrain(cfg, ModelRole::proxy, data_dir, models, log).artifacts;
    a.insert(a.end(), b.begin(), b.end());
    return a;
  });
  const fs::path vanilla_ckpt = models / "vanilla_target.ckb", proxy_ckpt = models / "proxy.ckb";
  phase("finetune", [&] {
    Artifacts a;
    for (auto m : pipeline_methods()) {
      Artifacts b = cmd_finetune(cfg, m, vanilla_ckpt, proxy_ckpt, data_dir, models, log).artifacts;
      a.insert(a.end(), b.begin(), b.end());
    }
    return a;
  });

  std::vector<std::string> ids{"vanilla_target", "proxy"};
  for (auto m : pipeline_methods()) ids.push_back(to_string(m));
  const auto eval_sets = eval_dataset_paths(cfg, data_dir);
  std::vector<std::vector<EvalReport>> evals;
  phase("eval", [&] {
    Artifacts a;
    for (const auto& id : ids) {
      EvalOutcome e = cmd_eval(cfg, models / (id + ".ckb"), eval_sets, reports, log);
      evals.push_back(std::move(e.reports));
      a.insert(a.end(), e.artifacts.begin(), e.artifacts.end());
    }
    return a;
  });
  phase("transfer-matrix", [&] {
    std::vector<fs::path> ckpts;
    for (const char* id : {"vanilla_target", "proxy", "hpt_gpd", "naive_rt"}) ckpts.push_back(models / (std::string(id) + ".ckb"));
    return cmd_transfer_matrix(cfg, ckpts, data_dir / kTestFile, reports, log).artifacts;
  });
  phase("bound-check", [&] {
    Artifacts a;
    for (const char* id : {"vanilla_target", "hpt_gpd", "naive_rt"}) {
      for (const auto& d : eval_sets) {
        Artifacts b =
            cmd_bound_check(cfg, models / (std::string(id) + ".ckb"), proxy_ckpt, d, cfg.bound_loss, reports, log)
                .artifacts;
        a.insert(a.end(), b.begin(), b.end());
      }
    }
    return a;
  });
  phase("summary", [&] {
    const DualEncoderModel vanilla = load_checkpoint(vanilla_ckpt).model;
    std::vector<SummaryRow> rows;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const DualEncoderModel m = load_checkpoint(models / (ids[i] + ".ckb")).model;
      std::optional<double> dist;
      if (m.param_shapes() == vanilla.param_shapes()) dist = param_distance(m, vanilla);
      rows.push_back(summarize(ids[i], evals[i], kTestDomain, dist));
    }
    Artifacts a;
    const std::string table = summary_table(rows);
    detail::write_text(out / "summary.txt", table, a);
    detail::write_json(out / "summary.json", to_json(rows), a);
    log << table;
    return a;
  });
  manifest.completed = true;
  write_file(out / "manifest.json", to_json(manifest).dump(2) + "\n");
  return manifest;
}

}  // namespace hpt
