// hpt: command-line driver for the desk-scale robustness-transfer laboratory.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "hpt/commands.hpp"

namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool dry_run = false;
};

hpt::RunConfig load_config(const Globals& g) {
  hpt::RunConfig cfg = g.config_path.empty() ? hpt::RunConfig{} : hpt::parse_config(g.config_path);
  if (g.seed) cfg.seed = *g.seed;
  if (!g.out.empty()) cfg.output_dir = g.out;
  cfg.validate();
  return cfg;
}

std::vector<fs::path> to_paths(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

void print_plan(const std::string& what, const std::vector<std::string>& lines) {
  std::cout << "dry run: " << what << "\n";
  for (const auto& l : lines) std::cout << "  " << l << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heterogeneous proxy transfer with generalization-pivot decoupling, on synthetic data"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "key = value configuration file");
  app.add_option("--seed", g.seed, "overrides the configured seed");
  app.add_option("--out", g.out, "output directory (overrides output.dir)");
  app.add_flag("--dry-run", g.dry_run, "print what would run; write nothing");

  auto* gen = app.add_subcommand("gen-data", "generate the in-domain and downstream datasets");

  std::string role = "vanilla_target", data_dir;
  auto* pre = app.add_subcommand("pretrain", "clean pretraining of the vanilla target or the proxy");
  pre->add_option("--role", role, "vanilla_target or proxy");
  pre->add_option("--data", data_dir, "directory written by gen-data")->required();

  std::string method = "hpt_gpd", vanilla_ckpt, proxy_ckpt;
  auto* ft = app.add_subcommand("finetune", "fine-tune the vanilla checkpoint");
  ft->add_option("--method", method, "hpt_gpd, aft, naive_rt or ard");
  ft->add_option("--vanilla", vanilla_ckpt, "vanilla checkpoint")->required();
  ft->add_option("--proxy", proxy_ckpt, "proxy checkpoint")->required();
  ft->add_option("--data", data_dir, "directory written by gen-data")->required();

  std::string model_ckpt;
  std::vector<std::string> datasets;
  auto* ev = app.add_subcommand("eval", "clean and adversarial accuracy per dataset");
  ev->add_option("--model", model_ckpt, "checkpoint")->required();
  auto* ev_data = ev->add_option("--data", data_dir, "gen-data directory: held-out split plus configured domains");
  auto* ev_sets = ev->add_option("--dataset", datasets, "dataset files (repeatable)");
  ev_data->excludes(ev_sets);

  std::vector<std::string> ckpts;
  std::string dataset;
  auto* tm = app.add_subcommand("transfer-matrix", "cross-model adversarial accuracy grid");
  tm->add_option("--models", ckpts, "two or more checkpoints")->required()->delimiter(',');
  tm->add_option("--dataset", dataset, "dataset file")->required();

  std::string target_ckpt, loss = "l1_prob";
  auto* bc = app.add_subcommand("bound-check", "both sides of the robust-risk bounds");
  bc->add_option("--target", target_ckpt, "target checkpoint")->required();
  bc->add_option("--proxy", proxy_ckpt, "proxy checkpoint")->required();
  bc->add_option("--dataset", dataset, "dataset file")->required();
  bc->add_option("--loss", loss, "l1_prob or kl");

  auto* pipe = app.add_subcommand("pipeline", "run every phase and write the summary table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const hpt::RunConfig cfg = load_config(g);
    const fs::path out = cfg.output_dir;
    std::ostream& log = std::cout;

    if (*gen) {
      if (g.dry_run) return print_plan("gen-data", {"write datasets to " + out.generic_string()}), 0;
      hpt::cmd_gen_data(cfg, out, log);
    } else if (*pre) {
      const auto r = hpt::model_role_from_string(role);
      if (g.dry_run) {
        return print_plan("pretrain", {hpt::to_string(r) + " on " + data_dir + " -> " + out.generic_string()}), 0;
      }
      hpt::cmd_pretrain(cfg, r, data_dir, out, log);
    } else if (*ft) {
      const auto m = hpt::finetune_method_from_string(method);
      if (g.dry_run) return print_plan("finetune", {hpt::to_string(m) + " -> " + out.generic_string()}), 0;
      hpt::cmd_finetune(cfg, m, vanilla_ckpt, proxy_ckpt, data_dir, out, log);
    } else if (*ev) {
      std::vector<fs::path> sets = data_dir.empty() ? to_paths(datasets) : hpt::eval_dataset_paths(cfg, data_dir);
      if (sets.empty()) throw hpt::ConfigError("eval: give --data or at least one --dataset");
      if (g.dry_run) return print_plan("eval", {model_ckpt + " on " + std::to_string(sets.size()) + " datasets"}), 0;
      hpt::cmd_eval(cfg, model_ckpt, sets, out, log);
    } else if (*tm) {
      if (g.dry_run) return print_plan("transfer-matrix", {std::to_string(ckpts.size()) + " models on " + dataset}), 0;
      hpt::cmd_transfer_matrix(cfg, to_paths(ckpts), dataset, out, log);
    } else if (*bc) {
      const auto kind = hpt::bound_loss_from_string(loss);
      if (g.dry_run) return print_plan("bound-check", {target_ckpt + " vs " + proxy_ckpt + " on " + dataset}), 0;
      hpt::cmd_bound_check(cfg, target_ckpt, proxy_ckpt, dataset, kind, out, log);
    } else if (*pipe) {
      if (g.dry_run) return print_plan("pipeline", hpt::pipeline_plan(cfg)), 0;
      hpt::cmd_pipeline(cfg, log);
    }
    return 0;
  } catch (const hpt::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return hpt::exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
