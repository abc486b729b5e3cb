#pragma once

#include <charconv>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "hpt/eval.hpp"
#include "hpt/io.hpp"
#include "hpt/trainer.hpp"

namespace hpt {

inline constexpr int kReportSchemaVersion = 1;

/// Shortest decimal text that reads back to the same double.
inline std::string format_number(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

inline json to_json(const AttackConfig& a) {
  return {{"epsilon", a.epsilon},
          {"steps", a.steps},
          {"step_size", a.resolved_step_size()},
          {"clamp_min", a.clamp_min},
          {"clamp_max", a.clamp_max},
          {"restarts", a.restarts},
          {"restart_seed", a.restart_seed}};
}

inline json to_json(const EvalReport& r) {
  return {{"schema_version", kReportSchemaVersion},
          {"kind", "eval"},
          {"dataset", r.dataset},
          {"model", r.model},
          {"clean_acc", r.clean_acc},
          {"adv_acc", r.adv_acc},
          {"samples", r.samples},
          {"clean_correct", r.clean_correct},
          {"adv_correct", r.adv_correct},
          {"attack", to_json(r.attack)}};
}

inline json to_json(const std::vector<EvalReport>& reports) {
  json rows = json::array();
  for (const auto& r : reports) rows.push_back(to_json(r));
  return {{"schema_version", kReportSchemaVersion}, {"kind", "eval_set"}, {"reports", rows}};
}

inline std::string to_csv(const std::vector<EvalReport>& reports) {
  std::string out = "model,dataset,samples,clean_correct,adv_correct,clean_acc,adv_acc,epsilon,steps\n";
  for (const auto& r : reports) {
    out += r.model + ',' + r.dataset + ',' + std::to_string(r.samples) + ',' + std::to_string(r.clean_correct) + ',' +
           std::to_string(r.adv_correct) + ',' + format_number(r.clean_acc) + ',' + format_number(r.adv_acc) + ',' +
           format_number(r.attack.epsilon) + ',' + std::to_string(r.attack.steps) + '\n';
  }
  return out;
}

inline json to_json(const TransferMatrix& tm) {
  return {{"schema_version", kReportSchemaVersion},
          {"kind", "transfer_matrix"},
          {"dataset", tm.dataset},
          {"models", tm.model_ids},
          {"accuracy", tm.accuracy},
          {"clean_accuracy", tm.clean_accuracy},
          {"attack", to_json(tm.attack)}};
}

/// Row i = evaluated model, column j = model the examples were crafted against.
inline std::string to_csv(const TransferMatrix& tm) {
  std::string out = "evaluated\\source";
  for (const auto& id : tm.model_ids) out += ',' + id;
  out += ",clean\n";
  for (std::size_t i = 0; i < tm.model_ids.size(); ++i) {
    out += tm.model_ids[i];
    for (double v : tm.accuracy[i]) out += ',' + format_number(v);
    out += ',' + format_number(tm.clean_accuracy[i]) + '\n';
  }
  return out;
}

inline json to_json(const BoundReport& r) {
  return {{"schema_version", kReportSchemaVersion},
          {"kind", "bound_check"},
          {"dataset", r.dataset},
          {"loss_kind", to_string(r.loss_kind)},
          {"samples", r.samples},
          {"terms",
           {{"eps_adv_T", r.eps_adv_T},
            {"eps_cln_T", r.eps_cln_T},
            {"eps_adv_TP_clean", r.eps_adv_TP_clean},
            {"eps_adv_TP_adv", r.eps_adv_TP_adv},
            {"eps_cln_TP", r.eps_cln_TP},
            {"eps_cln_P", r.eps_cln_P},
            {"eps_adv_P", r.eps_adv_P}}},
          {"lhs", r.lhs},
          {"rhs_theorem1", r.rhs_theorem1},
          {"rhs_theorem2", r.rhs_theorem2},
          {"holds_theorem1", r.holds_1},
          {"holds_theorem2", r.holds_2},
          {"pointwise_violations_theorem1", r.pointwise_violations_1},
          {"pointwise_violations_theorem2", r.pointwise_violations_2},
          {"attack", to_json(r.attack)}};
}

inline std::string to_csv(const BoundReport& r) {
  std::string out = "quantity,value\n";
  auto row = [&](const char* k, double v) { out += std::string(k) + ',' + format_number(v) + '\n'; };
  row("eps_adv_T", r.eps_adv_T);
  row("eps_cln_T", r.eps_cln_T);
  row("eps_adv_TP_clean", r.eps_adv_TP_clean);
  row("eps_adv_TP_adv", r.eps_adv_TP_adv);
  row("eps_cln_TP", r.eps_cln_TP);
  row("eps_cln_P", r.eps_cln_P);
  row("eps_adv_P", r.eps_adv_P);
  row("lhs", r.lhs);
  row("rhs_theorem1", r.rhs_theorem1);
  row("rhs_theorem2", r.rhs_theorem2);
  out += std::string("holds_theorem1,") + (r.holds_1 ? "true" : "false") + '\n';
  out += std::string("holds_theorem2,") + (r.holds_2 ? "true" : "false") + '\n';
  return out;
}

inline json to_json(const TrainLog& log) {
  json rows = json::array();
  for (const auto& r : log.records) {
    rows.push_back({{"epoch", r.epoch},
                    {"stage", r.stage},
                    {"loss", r.loss},
                    {"clean_acc", r.clean_acc},
                    {"adv_acc", r.adv_acc},
                    {"param_dist", r.param_dist}});
  }
  return {{"schema_version", kReportSchemaVersion}, {"kind", "train_log"}, {"records", rows}};
}

// ---- method comparison ----

struct SummaryRow {
  std::string method;
  double clean_mean = 0.0;  // over downstream domains
  double adv_mean = 0.0;
  double in_domain_clean = 0.0;
  double in_domain_adv = 0.0;
  std::optional<double> param_dist;  // to vanilla; absent for other architectures
};

/// Collapses a method's EvalReports: downstream means exclude `in_domain`.
inline SummaryRow summarize(const std::string& method, const std::vector<EvalReport>& reports,
                            const std::string& in_domain, std::optional<double> param_dist) {
  SummaryRow row{method, 0.0, 0.0, 0.0, 0.0, param_dist};
  std::size_t n = 0;
  for (const auto& r : reports) {
    if (r.dataset == in_domain) {
      row.in_domain_clean = r.clean_acc;
      row.in_domain_adv = r.adv_acc;
      continue;
    }
    row.clean_mean += r.clean_acc;
    row.adv_mean += r.adv_acc;
    ++n;
  }
  if (n == 0) throw DataError("summary: no downstream reports for " + method);
  row.clean_mean /= static_cast<double>(n);
  row.adv_mean /= static_cast<double>(n);
  return row;
}

inline json to_json(const std::vector<SummaryRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    json j = {{"method", r.method},
              {"clean_acc_mean", r.clean_mean},
              {"adv_acc_mean", r.adv_mean},
              {"in_domain_clean_acc", r.in_domain_clean},
              {"in_domain_adv_acc", r.in_domain_adv}};
    j["param_dist"] = r.param_dist ? json(*r.param_dist) : json(nullptr);
    out.push_back(std::move(j));
  }
  return {{"schema_version", kReportSchemaVersion}, {"kind", "summary"}, {"rows", out}};
}

inline std::string summary_table(const std::vector<SummaryRow>& rows) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-15s %10s %10s %10s %10s %10s\n", "method", "clean", "adv", "in_clean", "in_adv",
                "dist");
  out += line;
  out += std::string(70, '-') + '\n';
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-15s %10.4f %10.4f %10.4f %10.4f ", r.method.c_str(), r.clean_mean, r.adv_mean,
                  r.in_domain_clean, r.in_domain_adv);
    out += line;
    if (r.param_dist) {
      std::snprintf(line, sizeof line, "%10.4f\n", *r.param_dist);
    } else {
      std::snprintf(line, sizeof line, "%10s\n", "-");
    }
    out += line;
  }
  out += "clean/adv: mean accuracy over downstream domains; dist: relative L2 distance to vanilla\n";
  return out;
}

}  // namespace hpt
