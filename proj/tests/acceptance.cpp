// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
// usage: hpt_acceptance [work_dir]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hpt/commands.hpp"
#include "gradient_cases.hpp"

namespace fs = std::filesystem;
using namespace hpt;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    notes.push_back((ok ? "" : "FAILED: ") + what);
  }
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream out;
  out.precision(precision);
  out << v;
  return out.str();
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, const std::string& title, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o.require(false, std::string("exception: ") + e.what());
  }
  const double secs = seconds_since(t0);
  if (limit_s > 0) o.require(secs < limit_s, "runtime " + fmt(secs, 3) + " s < " + fmt(limit_s) + " s");
  if (!o.pass) ++failures;
  std::printf("criterion %d %s: %s (%.2f s)\n", id, o.pass ? "PASS" : "FAIL", title.c_str(), secs);
  for (const auto& n : o.notes) std::printf("    %s\n", n.c_str());
  std::fflush(stdout);
}

// ---- 1 ----

Outcome gradient_correctness() {
  Outcome o;
  constexpr std::size_t kInstances = 100;
  constexpr double kTol = 1e-4;
  for (const auto& c : testing::op_cases()) {
    const double err = testing::op_gradient_error(c, kInstances);
    if (!(err < kTol)) o.require(false, c.name + " max relative error " + fmt(err));
  }
  o.require(true, std::to_string(testing::op_cases().size()) + " op cases x " + std::to_string(kInstances) +
                      " instances within " + fmt(kTol));
  std::map<std::string, double> worst;
  for (std::uint64_t seed = 0; seed < kInstances; ++seed) {
    for (const auto& [name, inst] : testing::loss_instances(seed)) {
      worst[name] = std::max(worst[name], grad_check(inst.fn, inst.point));
    }
  }
  for (const auto& [name, err] : worst) o.require(err < kTol, name + " max relative error " + fmt(err));
  return o;
}

// ---- 2 ----

struct AttackTally {
  std::size_t samples = 0, budget = 0, range = 0, worse = 0, fgsm_mismatch = 0, fgsm_kept_start = 0;
  bool identity = true;
};

void audit_attack(const DualEncoderModel& m, const Tensor& x, const Labels& y, double eps, AttackTally& t) {
  const Tensor adv = pgd_attack(m, x, y, pgd_config(10, eps));
  const auto l0 = per_sample_ce(similarity_logits(m, x), y);
  const auto l10 = per_sample_ce(similarity_logits(m, adv), y);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double dist = 0;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      dist = std::max(dist, std::abs(adv.at(r, c) - x.at(r, c)));
      t.range += !(adv.at(r, c) >= 0.0 && adv.at(r, c) <= 1.0);
    }
    t.budget += !(dist <= eps + 1e-9);
    t.worse += !(l10[r] >= l0[r]);
  }
  t.samples += x.rows();
  t.identity = t.identity && pgd_attack(m, x, y, pgd_config(10, 0.0)) == x;

  // Single sign step from the clean point, then the best-iterate rule over {x, step}.
  Graph g;
  Var input = g.leaf(x);
  ModelVars vars = bind_model(g, m, false, false);
  const auto grad = g.backward(ce_loss(similarity_logits(m, vars, input), y)).of(input);
  Tensor fgsm = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double s = grad[i] > 0 ? 1.0 : (grad[i] < 0 ? -1.0 : 0.0);
    fgsm[i] = std::clamp(std::clamp(x[i] + eps * s, x[i] - eps, x[i] + eps), 0.0, 1.0);
  }
  const auto l1 = per_sample_ce(similarity_logits(m, fgsm), y);
  AttackConfig one = pgd_config(1, eps);
  one.step_size = eps;
  const Tensor pgd1 = pgd_attack(m, x, y, one);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const bool stepped = l1[r] > l0[r];
    t.fgsm_kept_start += !stepped;
    const Tensor& expect = stepped ? fgsm : x;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      if (pgd1.at(r, c) != expect.at(r, c)) {
        ++t.fgsm_mismatch;
        break;
      }
    }
  }
}

Outcome attack_contracts() {
  Outcome o;
  const RunConfig cfg;
  const SyntheticData data = generate_synthetic(cfg.data, 11);
  const DualEncoderModel m =
      init_model(cfg.image_spec(ModelRole::vanilla_target), cfg.text_spec(ModelRole::vanilla_target), 10, 5);
  AttackTally t;
  audit_attack(m, data.test.features, data.test.labels, 1.0 / 255.0, t);

  // Saturated inputs with a wide budget exercise the range clamp.
  std::mt19937_64 rng(3);
  Tensor edge = testing::random_tensor({300, cfg.data.input_dim()}, rng, 0.0, 1.0);
  for (std::size_t i = 0; i < edge.size(); i += 3) edge[i] = (i / 3) % 2 ? 1.0 : 0.0;
  audit_attack(m, edge, testing::random_labels(300, 10, rng), 8.0 / 255.0, t);

  o.require(t.samples >= 1000, std::to_string(t.samples) + " attacked samples");
  o.require(t.budget == 0, "l-inf budget violations: " + std::to_string(t.budget));
  o.require(t.range == 0, "values outside [0, 1]: " + std::to_string(t.range));
  o.require(t.worse == 0, "samples whose returned loss is below the initial loss: " + std::to_string(t.worse));
  o.require(t.identity, "epsilon = 0 returns the input unchanged");
  o.require(t.fgsm_mismatch == 0, "PGD-1 (step = epsilon) vs single-step sign formula: " +
                                      std::to_string(t.fgsm_mismatch) + " rows differ; " +
                                      std::to_string(t.fgsm_kept_start) + " rows kept the start (step lowered the loss)");
  return o;
}

// ---- 3 ----

Outcome schedule_arithmetic() {
  Outcome o;
  const ParamList vanilla = testing::small_model(1).params;
  const double gamma = 0.9;
  EmaState s = ema_init(vanilla);
  o.require(s.epoch == 0 && s.params == vanilla, "EMA at k = 0 is the vanilla parameters, bit-exact");
  std::vector<ParamList> trajectory;
  double worst = 0;
  for (std::size_t k = 1; k <= 8; ++k) {
    trajectory.push_back(testing::small_model(100 + k).params);
    s = ema_update(s, trajectory.back(), gamma);
    for (std::size_t t = 0; t < vanilla.size(); ++t) {
      for (std::size_t i = 0; i < vanilla[t].size(); ++i) {
        double closed = std::pow(gamma, static_cast<double>(k)) * vanilla[t][i];
        for (std::size_t j = 1; j <= k; ++j) {
          closed += (1 - gamma) * std::pow(gamma, static_cast<double>(k - j)) * trajectory[j - 1][t][i];
        }
        worst = std::max(worst, std::abs(s.params[t][i] - closed));
      }
    }
  }
  o.require(worst <= 1e-12, "EMA vs closed form over 8 epochs: max error " + fmt(worst));

  const ParamList prev = testing::small_model(2).params, ema = testing::small_model(3).params;
  o.require(generalization_pull(prev, ema, 1.0, 3, vanilla) == prev, "pull with beta = 1 keeps the epoch-end parameters");
  o.require(generalization_pull(prev, ema, 0.0, 3, vanilla) == ema, "pull with beta = 0 returns the EMA anchor");
  o.require(generalization_pull(prev, ema, 0.5, 0, vanilla) == vanilla, "pull at e = 0 returns vanilla");

  const SyntheticData data = generate_synthetic(testing::tiny_spec(), 2);
  const DualEncoderModel target = testing::small_model(4, 4, 16);
  const DualEncoderModel proxy = testing::small_model(5, 4, 16, {12, 6});
  TrainConfig cfg;
  cfg.warmup_epochs = 2;
  cfg.hpt_epochs = 2;
  cfg.batch_size = 16;
  cfg.monitor_samples = 16;
  const ParamList proxy_before = proxy.params;
  const auto r = run_hpt_gpd(cfg, target, proxy, data.train);
  o.require(proxy.params == proxy_before, "proxy bit-unchanged through hpt_gpd");
  naive_rt_baseline(target, proxy, data.train, cfg);
  o.require(proxy.params == proxy_before, "proxy bit-unchanged through naive_rt");
  ard_baseline(target, proxy, data.train, cfg);
  o.require(proxy.params == proxy_before, "proxy bit-unchanged through ard");

  TrainConfig one = cfg;
  one.hpt_epochs = 1;
  const auto a = hpt_stage(target, r.ema, proxy, data.train, one).first;
  const auto b = hpt_stage(target, ema_init(target.params), proxy, data.train, one).first;
  o.require(a.params == b.params, "first HPT epoch starts from vanilla regardless of the anchor");
  return o;
}

// ---- 4 ----

Outcome kl_ce_oracles() {
  Outcome o;
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> width(2, 12);
  std::uniform_real_distribution<double> logit(-8.0, 8.0);
  double kl_err = 0, ce_err = 0;
  std::size_t self_nonzero = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t k = width(rng);
    std::vector<double> za(k), zb(k);
    for (auto& v : za) v = logit(rng);
    for (auto& v : zb) v = logit(rng);
    auto straight_softmax = [](const std::vector<double>& z) {
      double mx = z[0];
      for (double v : z) mx = v > mx ? v : mx;
      std::vector<double> p(z.size());
      double s = 0;
      for (std::size_t j = 0; j < z.size(); ++j) s += (p[j] = std::exp(z[j] - mx));
      for (double& v : p) v /= s;
      return p;
    };
    const auto a = straight_softmax(za), b = straight_softmax(zb);
    double kl = 0;
    for (std::size_t j = 0; j < k; ++j) kl += a[j] * std::log(a[j] / b[j]);
    kl_err = std::max(kl_err, std::abs(kl_div(a, b) - kl));
    self_nonzero += kl_div(a, a) != 0.0;

    const Label y = static_cast<Label>(rng() % k);
    double mx = za[0];
    for (double v : za) mx = v > mx ? v : mx;
    double s = 0;
    for (double v : za) s += std::exp(v - mx);
    const double ce = -(za[y] - mx) + std::log(s);
    ce_err = std::max(ce_err, std::abs(ce_loss(Tensor({1, k}, za), Labels{y}) - ce));
  }
  o.require(kl_err <= 1e-10, "kl_div vs straight-line on 10000 pairs: max error " + fmt(kl_err));
  o.require(ce_err <= 1e-10, "ce_loss vs straight-line on 10000 pairs: max error " + fmt(ce_err));
  o.require(self_nonzero == 0, "KL(p, p) = 0 on all pairs");
  const double ln2 = kl_div(std::vector<double>{1.0, 0.0}, std::vector<double>{0.5, 0.5});
  o.require(std::abs(ln2 - std::numbers::ln2) <= 1e-12, "KL([1,0],[0.5,0.5]) = " + fmt(ln2, 17));
  return o;
}

// ---- reference pipeline ----

struct Reference {
  fs::path dir;
  RunConfig cfg;
  double seconds = 0.0;
  bool ok = false;
  std::string error;
};

Reference run_reference(const fs::path& dir) {
  Reference ref{dir, RunConfig{}, 0.0, false, {}};
  ref.cfg.output_dir = dir.string();
  std::ostringstream log;
  const auto t0 = Clock::now();
  try {
    fs::remove_all(dir);
    cmd_pipeline(ref.cfg, log);
    ref.ok = true;
  } catch (const std::exception& e) {
    ref.error = e.what();
  }
  ref.seconds = seconds_since(t0);
  return ref;
}

DualEncoderModel load_model(const Reference& ref, const std::string& id) {
  return load_checkpoint(ref.dir / "models" / (id + ".ckb")).model;
}

// ---- 5 ----

Outcome theorem_structure(const Reference& ref) {
  Outcome o;
  if (!ref.ok) return o.require(false, "reference pipeline failed: " + ref.error), o;
  const DualEncoderModel proxy = load_model(ref, "proxy");
  const AttackConfig& attack = ref.cfg.train.eval_attack;
  std::size_t combos = 0, pointwise = 0, mean_fail = 0, report_fail = 0;
  for (const char* id : {"vanilla_target", "hpt_gpd", "naive_rt"}) {
    const DualEncoderModel target = load_model(ref, id);
    for (const auto& path : eval_dataset_paths(ref.cfg, ref.dir / "data")) {
      const Dataset d = load_dataset(path);
      const BoundReport r = bound_check(target, proxy, d, attack, BoundLoss::l1_prob);
      ++combos;

      // Independent per-sample oracle: l1 distances between probability rows.
      const Tensor xa = attack_dataset(target, d, attack);
      const Tensor ta = softmax_distribution(similarity_logits(target, xa));
      const Tensor tc = softmax_distribution(similarity_logits(target, d.features));
      const Tensor pa = softmax_distribution(similarity_logits(proxy, xa));
      const Tensor pc = softmax_distribution(similarity_logits(proxy, d.features));
      auto l1 = [](std::span<const double> a, std::span<const double> b) {
        double s = 0;
        for (std::size_t j = 0; j < a.size(); ++j) s += std::abs(a[j] - b[j]);
        return s;
      };
      double lhs = 0, rhs1 = 0, rhs2 = 0;
      for (std::size_t i = 0; i < d.size(); ++i) {
        std::vector<double> y(d.num_classes, 0.0);
        y[d.labels[i]] = 1.0;
        const double adv_t = l1(ta.row(i), y), cln_t = l1(tc.row(i), y);
        const double adv_tp_c = l1(ta.row(i), pc.row(i)), adv_tp_a = l1(ta.row(i), pa.row(i));
        const double cln_tp = l1(tc.row(i), pc.row(i)), cln_p = l1(pc.row(i), y), adv_p = l1(pa.row(i), y);
        pointwise += adv_t > adv_tp_c + cln_p + kBoundSlack;
        pointwise += adv_t > adv_tp_a + adv_p + kBoundSlack;
        pointwise += cln_t > cln_tp + cln_p + kBoundSlack;
        lhs += adv_t + cln_t;
        rhs1 += adv_tp_c + cln_tp + 2 * cln_p;
        rhs2 += adv_tp_a + cln_tp + adv_p + cln_p;
      }
      const double n = static_cast<double>(d.size());
      mean_fail += !(lhs / n <= rhs1 / n + kBoundSlack) + !(lhs / n <= rhs2 / n + kBoundSlack);
      report_fail += !(r.holds_1 && r.holds_2 && r.pointwise_violations_1 == 0 && r.pointwise_violations_2 == 0);
      report_fail += std::abs(r.lhs - lhs / n) > 1e-9;

      const std::string stem = std::string("bound_") + id + "_proxy_" + d.domain + ".json";
      const json saved = json::parse(read_file(ref.dir / "reports" / stem));
      report_fail += !(saved.at("holds_theorem1").get<bool>() && saved.at("holds_theorem2").get<bool>());
    }
  }
  o.require(combos == 12, std::to_string(combos) + " (target, proxy, dataset) combinations with PGD-10");
  o.require(pointwise == 0, "per-sample triangle-inequality violations: " + std::to_string(pointwise));
  o.require(mean_fail == 0, "mean-level bound violations: " + std::to_string(mean_fail));
  o.require(report_fail == 0, "bound_check reports and saved JSON disagreeing with the oracle: " +
                                  std::to_string(report_fail));

  const DualEncoderModel vanilla = load_model(ref, "vanilla_target");
  const Dataset test = load_dataset(ref.dir / "data" / kTestFile);
  AttackConfig none = attack;
  none.epsilon = 0.0;
  const BoundReport deg = bound_check(vanilla, vanilla, test, none, BoundLoss::l1_prob);
  o.require(deg.eps_adv_TP_clean == 0.0 && deg.eps_adv_TP_adv == 0.0 && deg.eps_cln_TP == 0.0,
            "proxy = target, epsilon = 0: discrepancy terms are exactly 0");
  return o;
}

// ---- 6 ----

Outcome proxy_robustness(const Reference& ref) {
  Outcome o;
  if (!ref.ok) return o.require(false, "reference pipeline failed: " + ref.error), o;
  const DualEncoderModel vanilla = load_model(ref, "vanilla_target");
  const DualEncoderModel proxy = load_model(ref, "proxy");
  const Dataset test = load_dataset(ref.dir / "data" / kTestFile);
  const AttackConfig& attack = ref.cfg.train.eval_attack;
  o.require(attack.steps == 10 && attack.epsilon == 1.0 / 255.0, "PGD-10, epsilon = 1/255");
  const TransferMatrix tm = transfer_matrix({&vanilla, &proxy}, {"vanilla_target", "proxy"}, test, attack);
  const auto& m = tm.accuracy;
  o.require(m[1][0] > m[0][0], "M[proxy][vanilla] " + fmt(m[1][0]) + " > M[vanilla][vanilla] " + fmt(m[0][0]));
  o.require(m[0][1] > m[1][1], "M[vanilla][proxy] " + fmt(m[0][1]) + " > M[proxy][proxy] " + fmt(m[1][1]));

  const json saved = json::parse(read_file(ref.dir / "reports" / "transfer_matrix.json"));
  const auto grid = saved.at("accuracy").get<std::vector<std::vector<double>>>();
  o.require(grid[0][0] == m[0][0] && grid[0][1] == m[0][1] && grid[1][0] == m[1][0] && grid[1][1] == m[1][1],
            "pipeline transfer_matrix.json agrees with the recomputation");
  return o;
}

// ---- 7 ----

struct Row {
  double clean = 0, adv = 0;
};

Outcome gpd_tradeoff(const Reference& ref) {
  Outcome o;
  if (!ref.ok) return o.require(false, "reference pipeline failed: " + ref.error), o;
  o.require(ref.seconds < 300.0, "full pipeline " + fmt(ref.seconds, 3) + " s < 300 s");
  std::map<std::string, Row> rows;
  for (const char* id : {"vanilla_target", "hpt_gpd", "naive_rt"}) {
    const json j = json::parse(read_file(ref.dir / "reports" / (std::string("eval_") + id + ".json")));
    Row r;
    std::size_t n = 0;
    for (const auto& e : j.at("reports")) {
      if (e.at("dataset") == kTestDomain) continue;
      r.clean += e.at("clean_acc").get<double>();
      r.adv += e.at("adv_acc").get<double>();
      ++n;
    }
    r.clean /= static_cast<double>(n);
    r.adv /= static_cast<double>(n);
    rows[id] = r;
  }
  const Row v = rows["vanilla_target"], h = rows["hpt_gpd"], nr = rows["naive_rt"];
  o.require(h.adv > v.adv, "(a) downstream adv: hpt_gpd " + fmt(h.adv) + " > vanilla " + fmt(v.adv));
  o.require(h.clean > nr.clean, "(b) downstream clean: hpt_gpd " + fmt(h.clean) + " > naive_rt " + fmt(nr.clean));
  o.require(nr.adv > v.adv, "(c) downstream adv: naive_rt " + fmt(nr.adv) + " > vanilla " + fmt(v.adv));

  auto dist_at = [&](const std::string& file, std::size_t epoch) {
    std::istringstream in(read_file(ref.dir / "models" / file));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      std::vector<std::string> cells;
      std::stringstream ss(line);
      for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
      if (cells.size() == 6 && std::stoul(cells[0]) == epoch) return std::stod(cells[5]);
    }
    throw DataError(file + ": no epoch " + std::to_string(epoch));
  };
  const std::size_t e = ref.cfg.train.warmup_epochs;
  const double warm = dist_at("hpt_gpd_warmup.csv", e), naive = dist_at("naive_rt.csv", e);
  o.require(warm < naive, "(d) parameter distance after " + std::to_string(e) + " epochs: warm-up " + fmt(warm) +
                              " < naive_rt " + fmt(naive));
  return o;
}

// ---- 8 ----

Outcome determinism(const Reference& first, const Reference& second) {
  Outcome o;
  if (!first.ok || !second.ok) return o.require(false, "a pipeline run failed"), o;
  std::size_t compared = 0, differ = 0;
  for (const auto& e : fs::recursive_directory_iterator(first.dir)) {
    if (!e.is_regular_file() || e.path().filename() == "manifest.json") continue;
    const fs::path rel = fs::relative(e.path(), first.dir);
    ++compared;
    if (!fs::exists(second.dir / rel) || read_file(e.path()) != read_file(second.dir / rel)) {
      ++differ;
      o.notes.push_back("differs: " + rel.generic_string());
    }
  }
  std::size_t second_count = 0;
  for (const auto& e : fs::recursive_directory_iterator(second.dir))
    second_count += e.is_regular_file() && e.path().filename() != "manifest.json";
  o.require(compared > 0 && differ == 0 && second_count == compared,
            std::to_string(compared) + " files (checkpoints, datasets, reports, logs, summaries) byte-identical");
  return o;
}

// ---- 9 ----

template <class Decode>
std::size_t damaged_misreads(const std::string& good, Decode decode) {
  std::size_t bad = 0;
  auto expect_format = [&](const std::string& bytes) {
    try {
      decode(bytes);
      ++bad;
    } catch (const FormatError&) {
    } catch (...) {
      ++bad;
    }
  };
  const std::size_t step = std::max<std::size_t>(1, good.size() / 997);
  for (std::size_t len = 0; len < good.size(); len += step) expect_format(good.substr(0, len));
  expect_format(good.substr(0, good.size() - 1));
  expect_format(good + '\0');
  for (std::size_t i = 0; i < 16; ++i) {
    std::string flipped = good;
    flipped[i] = static_cast<char>(flipped[i] ^ 0x20);
    expect_format(flipped);
  }
  return bad;
}

Outcome persistence(const Reference& ref) {
  Outcome o;
  if (!ref.ok) return o.require(false, "reference pipeline failed: " + ref.error), o;
  std::size_t datasets = 0, checkpoints = 0, mismatches = 0, misreads = 0;
  for (const auto& e : fs::directory_iterator(ref.dir / "data")) {
    const std::string bytes = read_file(e.path());
    const Dataset d = decode_dataset(bytes);
    mismatches += encode_dataset(d) != bytes;
    mismatches += !(decode_dataset(encode_dataset(d)) == d);
    misreads += damaged_misreads(bytes, [](const std::string& b) { return decode_dataset(b); });
    ++datasets;
  }
  for (const auto& e : fs::directory_iterator(ref.dir / "models")) {
    if (e.path().extension() != ".ckb") continue;
    const std::string bytes = read_file(e.path());
    const Checkpoint ck = decode_checkpoint(bytes);
    mismatches += encode_checkpoint(ck.model, ck.seed) != bytes;
    mismatches += decode_checkpoint(encode_checkpoint(ck.model, ck.seed)).model.params != ck.model.params;
    misreads += damaged_misreads(bytes, [](const std::string& b) { return decode_checkpoint(b); });
    ++checkpoints;
  }
  o.require(datasets == 5 && checkpoints == 7,
            std::to_string(datasets) + " datasets and " + std::to_string(checkpoints) + " checkpoints round-tripped");
  o.require(mismatches == 0, "bit-exact round-trip mismatches: " + std::to_string(mismatches));
  o.require(misreads == 0, "truncated/corrupted buffers not rejected with a format error: " + std::to_string(misreads));
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "hpt_acceptance";
  fs::create_directories(work);

  report(1, "gradient correctness", 30, gradient_correctness);
  report(2, "attack contracts", 30, attack_contracts);
  report(3, "schedule arithmetic", 5, schedule_arithmetic);
  report(4, "KL/CE oracle equivalence", 5, kl_ce_oracles);

  std::printf("reference pipeline (seed 42) x 2 in %s\n", work.string().c_str());
  std::fflush(stdout);
  Reference first = run_reference(work / "run");
  if (first.ok) {
    fs::remove_all(work / "first");
    fs::rename(work / "run", work / "first");
    first.dir = work / "first";
  }
  const Reference ref = run_reference(work / "run");
  std::printf("  runs took %.1f s and %.1f s\n", first.seconds, ref.seconds);

  report(5, "theorem structure", 60, [&] { return theorem_structure(ref); });
  report(6, "proxy-robustness phenomenon", 120, [&] { return proxy_robustness(ref); });
  report(7, "GPD trade-off", 0, [&] { return gpd_tradeoff(ref); });
  report(8, "determinism", 0, [&] { return determinism(first, ref); });
  report(9, "persistence", 0, [&] { return persistence(ref); });

  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
