#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "fairsel/errors.hpp"
#include "fairsel/losses.hpp"
#include "test_support.hpp"

using namespace fairsel;
using fairsel::testing::mixed_mask;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

Eigen::VectorXd random_probs(Rng& rng, std::size_t n) {
  Eigen::VectorXd p(static_cast<Eigen::Index>(n));
  for (auto& v : p) v = rng.uniform(0.02, 0.98);
  return p;
}

// Central differences of a scalar function of the prediction vector.
template <typename F>
Eigen::VectorXd numeric_grad(F&& f, Eigen::VectorXd p, double step = 1e-6) {
  Eigen::VectorXd g(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double saved = p(i);
    p(i) = saved + step;
    const double up = f(p);
    p(i) = saved - step;
    const double down = f(p);
    p(i) = saved;
    g(i) = (up - down) / (2 * step);
  }
  return g;
}

double max_rel_err(const Eigen::VectorXd& a, const Eigen::VectorXd& n) {
  double worst = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a(i) - n(i)) / std::max({std::abs(a(i)), std::abs(n(i)), 1e-8}));
  }
  return worst;
}

double group_mean(const Eigen::VectorXd& p, const std::vector<bool>& m, bool want) {
  double s = 0;
  int k = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (m[static_cast<std::size_t>(i)] == want) {
      s += p(i);
      ++k;
    }
  }
  return s / k;
}

}  // namespace

TEST(Bce, HandValues) {
  EXPECT_NEAR(bce_loss(vec({0.5, 0.5}), vec({0, 1})).value, std::log(2.0), 1e-15);
  EXPECT_NEAR(bce_loss(vec({0.999999}), vec({1})).value, 0.0, 1e-5);
  EXPECT_THROW(bce_loss(vec({0.5}), vec({0, 1})), ValidationError);
}

TEST(Bce, GradientFormulaAndFiniteDifferences) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(32);
    const auto p = random_probs(rng, n);
    Eigen::VectorXd y(static_cast<Eigen::Index>(n));
    for (auto& v : y) v = rng.uniform01() < 0.5;
    const auto loss = bce_loss(p, y);
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      EXPECT_NEAR(loss.grad(i), (p(i) - y(i)) / (p(i) * (1 - p(i)) * static_cast<double>(n)), 1e-12);
    }
    const auto num = numeric_grad([&](const Eigen::VectorXd& q) { return bce_loss(q, y).value; }, p);
    EXPECT_LT(max_rel_err(loss.grad, num), 1e-6);
  }
}

TEST(ParityPairwise, HandValueAndFixedPoint) {
  EXPECT_NEAR(parity_loss_pairwise(vec({0.8, 0.8, 0.5, 0.5}), {true, true, false, false}).value, 0.09, 1e-15);
  const auto fixed = parity_loss_pairwise(vec({0.2, 0.6, 0.4, 0.4}), {true, true, false, false});
  EXPECT_LE(std::abs(fixed.value), 1e-12);
  EXPECT_LE(fixed.grad.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ParityPairwise, DegenerateBatch) {
  try {
    parity_loss_pairwise(vec({0.1, 0.2}), {false, false});
    FAIL() << "expected DegenerateBatchError";
  } catch (const DegenerateBatchError& e) {
    EXPECT_NE(std::string(e.what()).find("degenerate batch"), std::string::npos);
  }
  EXPECT_THROW(parity_loss_pairwise(vec({0.1, 0.2}), {true, true}), DegenerateBatchError);
}

TEST(ParityCombined, HandValue) {
  const auto v = parity_loss_combined(vec({0.9, 0.3, 0.6, 0.2}), {false, true, false, true},
                                      {false, false, false, true}, 0.32, 0.68);
  EXPECT_NEAR(v.value, 0.0812, 1e-15);
  const auto terms = parity_terms_combined(vec({0.9, 0.3, 0.6, 0.2}), {false, true, false, true},
                                           {false, false, false, true}, 0.32, 0.68);
  EXPECT_NEAR(terms.race, 0.02, 1e-15);
  EXPECT_NEAR(terms.country, 0.0612, 1e-15);
}

TEST(ParityCombined, EqualPredictionsAndZeroWeight) {
  const auto flat = parity_loss_combined(Eigen::VectorXd::Constant(5, 0.37), {true, false, false, true, false},
                                         {false, false, true, false, false}, 0.32, 0.68);
  EXPECT_LE(flat.value, 1e-12);
  EXPECT_LE(flat.grad.cwiseAbs().maxCoeff(), 1e-12);

  Rng rng(2);
  const auto p = random_probs(rng, 10);
  const auto rm = mixed_mask(rng, 10), cm = mixed_mask(rng, 10);
  const auto country_only = parity_loss_combined(p, rm, cm, 0.0, 0.68);
  const auto unit_country = parity_loss_combined(p, rm, cm, 0.0, 1.0);
  EXPECT_NEAR(country_only.value, 0.68 * unit_country.value, 1e-15);
  // A zero-weight term does not need its group.
  EXPECT_NO_THROW(parity_loss_combined(p, std::vector<bool>(10, false), cm, 0.0, 0.68));
  EXPECT_THROW(parity_loss_combined(p, std::vector<bool>(10, false), cm, 0.32, 0.68), DegenerateBatchError);
}

TEST(ParityCombined, SameMaskWeightsSummingToOneEqualSingleGroup) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_probs(rng, 12);
    const auto m = mixed_mask(rng, 12);
    const double w = rng.uniform01();
    const auto split = parity_loss_combined(p, m, m, w, 1.0 - w);
    const double mean = p.mean();
    const double expect = std::pow(group_mean(p, m, true) - mean, 2);
    EXPECT_NEAR(split.value, expect, 1e-14);
  }
}

TEST(FairnessLosses, OracleAndGradientProperty) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.uniform_index(31);
    const auto p = random_probs(rng, n);
    const auto rm = mixed_mask(rng, n), cm = mixed_mask(rng, n);
    const double wr = rng.uniform01(), wc = rng.uniform01();

    const auto pair = parity_loss_pairwise(p, rm);
    EXPECT_NEAR(pair.value, std::pow(group_mean(p, rm, true) - group_mean(p, rm, false), 2), 1e-14);
    EXPECT_GE(pair.value, 0.0);
    EXPECT_LT(max_rel_err(pair.grad, numeric_grad([&](const Eigen::VectorXd& q) {
                            return parity_loss_pairwise(q, rm).value;
                          }, p)),
              1e-6);

    const auto comb = parity_loss_combined(p, rm, cm, wr, wc);
    const double mean = p.mean();
    EXPECT_NEAR(comb.value,
                wr * std::pow(group_mean(p, rm, true) - mean, 2) + wc * std::pow(group_mean(p, cm, true) - mean, 2),
                1e-14);
    EXPECT_LT(max_rel_err(comb.grad, numeric_grad([&](const Eigen::VectorXd& q) {
                            return parity_loss_combined(q, rm, cm, wr, wc).value;
                          }, p)),
              1e-6);
  }
}

TEST(FairnessLosses, PermutationInvariance) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 3 + rng.uniform_index(20);
    const auto p = random_probs(rng, n);
    const auto rm = mixed_mask(rng, n), cm = mixed_mask(rng, n);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(std::span<std::size_t>(perm));
    Eigen::VectorXd pp(p.size());
    std::vector<bool> prm(n), pcm(n);
    for (std::size_t i = 0; i < n; ++i) {
      pp(static_cast<Eigen::Index>(i)) = p(static_cast<Eigen::Index>(perm[i]));
      prm[i] = rm[perm[i]];
      pcm[i] = cm[perm[i]];
    }
    EXPECT_NEAR(parity_loss_pairwise(pp, prm).value, parity_loss_pairwise(p, rm).value, 1e-15);
    EXPECT_NEAR(parity_loss_combined(pp, prm, pcm, 0.32, 0.68).value,
                parity_loss_combined(p, rm, cm, 0.32, 0.68).value, 1e-15);
  }
}

TEST(FairnessLosses, ScaleResponse) {
  // Deviations from 0.5 scaled by c scale each squared term by c^2.
  const Eigen::VectorXd base = vec({0.1, -0.2, 0.3, -0.05, 0.15, -0.3});
  const std::vector<bool> rm = {true, false, true, false, false, true};
  const std::vector<bool> cm = {false, true, true, false, true, false};
  const Eigen::VectorXd p1 = base.array() * 0.5 + 0.5;
  for (double c : {0.5, 1.5, 1.9}) {
    const Eigen::VectorXd pc = base.array() * (0.5 * c) + 0.5;
    EXPECT_NEAR(parity_loss_pairwise(pc, rm).value, c * c * parity_loss_pairwise(p1, rm).value, 1e-15);
    EXPECT_NEAR(parity_loss_combined(pc, rm, cm, 0.32, 0.68).value,
                c * c * parity_loss_combined(p1, rm, cm, 0.32, 0.68).value, 1e-15);
  }
}

TEST(FairnessLosses, DispatchByMode) {
  Rng rng(6);
  const auto p = random_probs(rng, 9);
  const auto rm = mixed_mask(rng, 9), cm = mixed_mask(rng, 9);
  FairnessConfig cfg;
  cfg.mode = FairnessMode::kRaceOnly;
  EXPECT_EQ(fairness_loss(p, rm, cm, cfg).value, parity_loss_pairwise(p, rm).value);
  cfg.mode = FairnessMode::kCountryOnly;
  EXPECT_EQ(fairness_loss(p, rm, cm, cfg).value, parity_loss_pairwise(p, cm).value);
  cfg.mode = FairnessMode::kCombined;
  EXPECT_EQ(fairness_loss(p, rm, cm, cfg).value, parity_loss_combined(p, rm, cm, 0.32, 0.68).value);
  EXPECT_FALSE(fairness_defined(std::vector<bool>(9, true), cm, FairnessConfig{0, 0.3, 0.7, FairnessMode::kRaceOnly}));
  EXPECT_TRUE(fairness_defined(std::vector<bool>(9, true), cm, FairnessConfig{0, 0.3, 0.7, FairnessMode::kCountryOnly}));
}

TEST(TotalLoss, LinearCombination) {
  LossValue pred{0.5, vec({0.1, -0.2})};
  LossValue fair{0.1, vec({0.3, 0.05})};
  const auto t = total_loss(pred, fair, 3.0);
  EXPECT_NEAR(t.value, 0.8, 1e-15);
  EXPECT_NEAR(t.grad(0), 0.1 + 3 * 0.3, 1e-15);
  EXPECT_NEAR(t.grad(1), -0.2 + 3 * 0.05, 1e-15);
  const auto zero = total_loss(pred, fair, 0.0);
  EXPECT_EQ(zero.value, pred.value);
  EXPECT_EQ(zero.grad, pred.grad);
  EXPECT_THROW(total_loss(pred, fair, -1.0), ValidationError);
  EXPECT_THROW(total_loss(pred, LossValue{0.1, vec({1})}, 1.0), ValidationError);
}

TEST(FairnessConfig, Validation) {
  EXPECT_NO_THROW(FairnessConfig{}.validate());
  EXPECT_THROW((FairnessConfig{-1, 0.3, 0.7, FairnessMode::kCombined}.validate()), ValidationError);
  EXPECT_THROW((FairnessConfig{1, 0, 0, FairnessMode::kCombined}.validate()), ValidationError);
  EXPECT_THROW((FairnessConfig{1, -0.1, 0.7, FairnessMode::kCombined}.validate()), ValidationError);
  EXPECT_EQ(parse_fairness_mode("country_only"), FairnessMode::kCountryOnly);
  EXPECT_THROW(parse_fairness_mode("both"), ValidationError);
}
