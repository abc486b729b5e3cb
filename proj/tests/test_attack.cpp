#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hpt/attack.hpp"
#include "support.hpp"

namespace hpt {
namespace {

using testing::random_images;
using testing::random_labels;
using testing::small_model;

constexpr double kEps = 8.0 / 255.0;

struct Batch {
  Tensor x;
  Labels y;
};

Batch batch(std::size_t n, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  return {testing::random_tensor({n, 12}, rng, lo, hi), random_labels(n, 4, rng)};
}

double linf(const Tensor& a, const Tensor& b, std::size_t r) {
  double m = 0;
  for (std::size_t c = 0; c < a.cols(); ++c) m = std::max(m, std::abs(a.at(r, c) - b.at(r, c)));
  return m;
}

TEST(Pgd, StaysInBudgetAndRange) {
  const auto m = small_model(1);
  const auto [x, y] = batch(64, 1);
  for (std::size_t steps : {1u, 3u, 10u}) {
    const Tensor adv = pgd_attack(m, x, y, pgd_config(steps, kEps));
    for (std::size_t r = 0; r < x.rows(); ++r) EXPECT_LE(linf(adv, x, r), kEps + 1e-9);
    for (double v : adv.values()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Pgd, ClampsAtRangeEdges) {
  const auto m = small_model(2);
  auto [x, y] = batch(32, 2);
  for (std::size_t i = 0; i < x.size(); i += 2) x[i] = (i % 4 == 0) ? 0.0 : 1.0;
  const Tensor adv = pgd_attack(m, x, y, pgd_config(5, 0.1));
  for (double v : adv.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Pgd, ZeroEpsilonIsIdentity) {
  const auto m = small_model(3);
  const auto [x, y] = batch(16, 3);
  EXPECT_EQ(pgd_attack(m, x, y, pgd_config(10, 0.0)), x);
  EXPECT_EQ(pgd_attack(m, x, y, pgd_config(0, kEps)), x);
}

TEST(Pgd, BestIterateNeverWorseThanStart) {
  const auto m = small_model(4);
  const auto [x, y] = batch(64, 4);
  const auto before = per_sample_ce(similarity_logits(m, x), y);
  const auto after = per_sample_ce(similarity_logits(m, pgd_attack(m, x, y, pgd_config(10, kEps))), y);
  std::size_t raised = 0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    EXPECT_GE(after[i], before[i]);
    raised += after[i] > before[i];
  }
  EXPECT_GT(raised, x.rows() / 2);
}

TEST(Pgd, OneStepMatchesFgsm) {
  const auto m = small_model(5);
  const auto [x, y] = batch(64, 5);
  AttackConfig cfg = pgd_config(1, kEps);
  cfg.step_size = kEps;

  Graph g;
  Var input = g.leaf(x);
  ModelVars vars = bind_model(g, m, false, false);
  const auto grad = g.backward(ce_loss(similarity_logits(m, vars, input), y)).of(input);
  Tensor fgsm = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double s = grad[i] > 0 ? 1.0 : (grad[i] < 0 ? -1.0 : 0.0);
    fgsm[i] = std::clamp(std::clamp(x[i] + kEps * s, x[i] - kEps, x[i] + kEps), 0.0, 1.0);
  }
  const auto l0 = per_sample_ce(similarity_logits(m, x), y);
  const auto l1 = per_sample_ce(similarity_logits(m, fgsm), y);
  const Tensor adv = pgd_attack(m, x, y, cfg);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const Tensor& expect = l1[r] > l0[r] ? fgsm : x;
    for (std::size_t c = 0; c < x.cols(); ++c) ASSERT_EQ(adv.at(r, c), expect.at(r, c)) << r << "," << c;
  }
}

TEST(Pgd, DefaultStepSize) {
  EXPECT_DOUBLE_EQ(pgd_config(10, 0.04).resolved_step_size(), 0.01);
  EXPECT_EQ(pgd_config(0, 0.04).resolved_step_size(), 0.0);
}

TEST(Pgd, Deterministic) {
  const auto m = small_model(6);
  const auto [x, y] = batch(32, 6);
  AttackConfig cfg = pgd_config(5, kEps);
  EXPECT_EQ(pgd_attack(m, x, y, cfg), pgd_attack(m, x, y, cfg));
  cfg.restarts = 2;
  cfg.restart_seed = 11;
  EXPECT_EQ(pgd_attack(m, x, y, cfg), pgd_attack(m, x, y, cfg));
}

TEST(Pgd, RestartsNeverLowerTheLoss) {
  const auto m = small_model(7);
  const auto [x, y] = batch(64, 7);
  AttackConfig cfg = pgd_config(3, kEps);
  const auto plain = per_sample_ce(similarity_logits(m, pgd_attack(m, x, y, cfg)), y);
  cfg.restarts = 3;
  cfg.restart_seed = 5;
  const Tensor adv = pgd_attack(m, x, y, cfg);
  const auto restarted = per_sample_ce(similarity_logits(m, adv), y);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    EXPECT_GE(restarted[i], plain[i]);
    EXPECT_LE(linf(adv, x, i), kEps + 1e-9);
  }
}

TEST(Pgd, PerSampleSeparable) {
  const auto m = small_model(8);
  const auto [x, y] = batch(10, 8);
  const AttackConfig cfg = pgd_config(4, kEps);
  const Tensor full = pgd_attack(m, x, y, cfg);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    std::vector<std::size_t> one{r};
    const Tensor single = pgd_attack(m, take_rows(x, one), Labels{y[r]}, cfg);
    for (std::size_t c = 0; c < x.cols(); ++c) EXPECT_EQ(single.at(0, c), full.at(r, c));
  }
}

TEST(Pgd, InputAndConfigErrors) {
  const auto m = small_model(9);
  auto [x, y] = batch(4, 9);
  EXPECT_THROW(pgd_attack(m, x, Labels{0}, pgd_config(2, kEps)), DataError);
  EXPECT_THROW(pgd_attack(m, x, y, pgd_config(2, -0.1)), ConfigError);
  AttackConfig bad = pgd_config(2, kEps);
  bad.step_size = 0.0;
  EXPECT_THROW(pgd_attack(m, x, y, bad), ConfigError);
  x[0] = 1.5;
  EXPECT_THROW(pgd_attack(m, x, y, pgd_config(2, kEps)), DataError);
}

TEST(Adaptive, BudgetRangeAndBestIterate) {
  const auto target = small_model(10);
  const auto proxy = small_model(11, 4, 12, {10, 6});
  const auto [x, y] = batch(64, 10);
  const Tensor adv = adaptive_attack(target, proxy, x, y, pgd_config(5, kEps));
  const auto before = per_sample_ce(similarity_logits(target, x), y);
  const auto after = per_sample_ce(similarity_logits(target, adv), y);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    EXPECT_LE(linf(adv, x, r), kEps + 1e-9);
    EXPECT_GE(after[r], before[r]);
  }
  for (double v : adv.values()) EXPECT_TRUE(v >= 0.0 && v <= 1.0);
}

TEST(Adaptive, SelfPairMatchesPlainPgdDirection) {
  const auto target = small_model(12);
  const auto [x, y] = batch(16, 12);
  EXPECT_EQ(adaptive_attack(target, target, x, y, pgd_config(4, kEps)), pgd_attack(target, x, y, pgd_config(4, kEps)));
}

TEST(Adaptive, RejectsMismatchedModels) {
  const auto [x, y] = batch(4, 13);
  EXPECT_THROW(adaptive_attack(small_model(1), small_model(2, 5), x, y, pgd_config(2, kEps)), ConfigError);
  EXPECT_THROW(adaptive_attack(small_model(1), small_model(2, 4, 10), x, y, pgd_config(2, kEps)), ConfigError);
}

}  // namespace
}  // namespace hpt
