#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "oracles.hpp"
#include "sieves/metrics.hpp"

namespace sieves {
namespace {

std::vector<ScoredSample> samples(std::initializer_list<std::pair<double, int>> rows, int repetition = 0) {
  std::vector<ScoredSample> out;
  int i = 0;
  for (const auto& [c, y] : rows) out.push_back({"q" + std::to_string(++i), repetition, c, y});
  return out;
}

TEST(CoverageAtRisk, Examples) {
  const auto s = samples({{0.9, 1}, {0.8, 1}, {0.7, 0}, {0.6, 1}});
  EXPECT_DOUBLE_EQ(coverage_at_risk(s, 0.0).coverage, 0.5);
  EXPECT_DOUBLE_EQ(coverage_at_risk(s, 0.0).threshold, 0.8);
  EXPECT_DOUBLE_EQ(coverage_at_risk(s, 0.25).coverage, 1.0);
  EXPECT_DOUBLE_EQ(*coverage_at_risk(s, 0.25).realized_risk, 0.25);
}

TEST(CoverageAtRisk, EmptySetQualifies) {
  const auto s = samples({{0.9, 0}, {0.1, 1}});
  const auto c = coverage_at_risk(s, 0.0);
  EXPECT_DOUBLE_EQ(c.coverage, 0.0);
  EXPECT_EQ(c.threshold, kNoThreshold);
  EXPECT_FALSE(c.realized_risk.has_value());
}

TEST(CoverageAtRisk, AllCorrect) {
  const auto s = samples({{0.3, 1}, {0.2, 1}, {0.2, 1}});
  for (double r : kDefaultRiskGrid) EXPECT_DOUBLE_EQ(coverage_at_risk(s, r).coverage, 1.0);
  EXPECT_DOUBLE_EQ(aurc(s), 0.0);
}

TEST(CoverageAtRisk, TiesAcceptedTogether) {
  // 0.5 group holds one correct and one wrong; taking both gives risk 1/3.
  const auto s = samples({{0.9, 1}, {0.5, 1}, {0.5, 0}});
  EXPECT_NEAR(coverage_at_risk(s, 0.0).coverage, 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(coverage_at_risk(s, 0.34).coverage, 1.0, 1e-15);
}

TEST(Aurc, Examples) {
  EXPECT_DOUBLE_EQ(aurc(samples({{0.9, 1}, {0.5, 0}})), 0.25);
  EXPECT_DOUBLE_EQ(aurc(samples({{0.9, 0}, {0.5, 0}})), 1.0);
  // Pessimistic ties: the wrong answer is ranked first.
  EXPECT_DOUBLE_EQ(aurc(samples({{0.5, 1}, {0.5, 0}})), 0.75);
  EXPECT_THROW(aurc({}), ValidationError);
}

TEST(Aurc, InvariantUnderMonotoneTransform) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    auto s = oracle::random_instance(rng, 1, 30);
    const double before = aurc(s);
    for (auto& x : s) x.c_sel = std::pow(x.c_sel, 3.0) * 0.5 + 0.1;
    EXPECT_DOUBLE_EQ(aurc(s), before);
  }
}

TEST(Metrics, MatchExhaustiveOracle) {
  std::mt19937_64 rng(41);
  for (int i = 0; i < 150; ++i) {
    const auto s = oracle::random_instance(rng, 1, 10);
    for (double r : kDefaultRiskGrid) {
      const double got = coverage_at_risk(s, r).coverage;
      EXPECT_DOUBLE_EQ(got, oracle::subset_c_at_r(s, r));
      EXPECT_DOUBLE_EQ(got, oracle::threshold_sweep_c_at_r(s, r));
    }
    EXPECT_NEAR(aurc(s), oracle::prefix_aurc(s), 1e-12);
  }
}

TEST(Metrics, PermutationInvariant) {
  std::mt19937_64 rng(43);
  for (int i = 0; i < 100; ++i) {
    auto s = oracle::random_instance(rng, 2, 40);
    const auto before = evaluate_samples(s, kDefaultRiskGrid);
    std::shuffle(s.begin(), s.end(), rng);
    const auto after = evaluate_samples(s, kDefaultRiskGrid);
    EXPECT_DOUBLE_EQ(before.aurc, after.aurc);
    for (std::size_t k = 0; k < kDefaultRiskGrid.size(); ++k) {
      EXPECT_DOUBLE_EQ(before.c_at_r[k].coverage, after.c_at_r[k].coverage);
    }
  }
}

TEST(Metrics, MonotoneInRiskLevel) {
  std::mt19937_64 rng(47);
  for (int i = 0; i < 200; ++i) {
    const auto s = oracle::random_instance(rng, 1, 50);
    double prev = 0.0;
    for (double r = 0.0; r <= 1.0; r += 0.05) {
      const double c = coverage_at_risk(s, r).coverage;
      EXPECT_GE(c, prev);
      prev = c;
    }
    EXPECT_DOUBLE_EQ(coverage_at_risk(s, 1.0).coverage, 1.0);
  }
}

TEST(Metrics, CurveEndpoints) {
  const auto s = samples({{0.9, 1}, {0.7, 0}, {0.7, 1}, {0.2, 0}});
  const auto curve = risk_coverage_curve(s);
  ASSERT_EQ(curve.size(), 3u);
  EXPECT_DOUBLE_EQ(curve.back().coverage, 1.0);
  EXPECT_DOUBLE_EQ(*curve.back().risk, 1.0 - accuracy(s));
  EXPECT_DOUBLE_EQ(curve[1].coverage, 0.75);
}

// Three questions, two repetitions, worked by hand.
std::vector<ScoredSample> hand_example() {
  return {{"q1", 0, 0.9, 1}, {"q2", 0, 0.8, 0}, {"q3", 0, 0.7, 1},
          {"q1", 1, 0.6, 1}, {"q2", 1, 0.9, 1}, {"q3", 1, 0.5, 0}};
}

TEST(Repetitions, HandExample) {
  const auto all = hand_example();
  const auto report = per_repetition_evaluate(all, kDefaultRiskGrid);
  ASSERT_EQ(report.repetitions.size(), 2u);
  for (const auto& c : report.repetitions[0].second.c_at_r) EXPECT_NEAR(c.coverage, 1.0 / 3.0, 1e-15);
  for (const auto& c : report.repetitions[1].second.c_at_r) EXPECT_NEAR(c.coverage, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(report.repetitions[0].second.aurc, 5.0 / 18.0, 1e-15);
  EXPECT_NEAR(report.repetitions[1].second.aurc, 1.0 / 9.0, 1e-15);

  for (const auto& st : report.c_at_r) {
    EXPECT_NEAR(st.mean, 0.5, 1e-12);
    EXPECT_NEAR(st.std, 0.235702260395515841466948120702, 1e-12);
  }
  EXPECT_NEAR(report.aurc.mean, 7.0 / 36.0, 1e-12);
  EXPECT_NEAR(report.aurc.std, 0.117851130197757920733474060351, 1e-12);
  EXPECT_NEAR(report.accuracy.mean, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(report.accuracy.std, 0.0, 1e-15);
}

TEST(Repetitions, SingleRepetitionMatchesPooled) {
  std::mt19937_64 rng(53);
  const auto s = oracle::random_instance(rng, 20, 20);
  const auto per = per_repetition_evaluate(s, kDefaultRiskGrid);
  const auto pooled = pooled_evaluate(s, kDefaultRiskGrid);
  EXPECT_DOUBLE_EQ(per.aurc.mean, pooled.aurc.mean);
  EXPECT_DOUBLE_EQ(per.aurc.std, 0.0);
  for (std::size_t k = 0; k < kDefaultRiskGrid.size(); ++k) {
    EXPECT_DOUBLE_EQ(per.c_at_r[k].mean, pooled.c_at_r[k].mean);
  }
}

TEST(Repetitions, DuplicatedRepetitionHasZeroSpread) {
  auto s = samples({{0.9, 1}, {0.8, 1}, {0.4, 0}, {0.3, 0}});
  auto copy = s;
  for (auto& x : copy) x.repetition = 1;
  s.insert(s.end(), copy.begin(), copy.end());
  const auto per = per_repetition_evaluate(s, kDefaultRiskGrid);
  const auto pooled = pooled_evaluate(s, kDefaultRiskGrid);
  for (std::size_t k = 0; k < kDefaultRiskGrid.size(); ++k) {
    EXPECT_DOUBLE_EQ(per.c_at_r[k].std, 0.0);
    EXPECT_DOUBLE_EQ(per.c_at_r[k].mean, pooled.c_at_r[k].mean);
  }
  EXPECT_DOUBLE_EQ(per.accuracy.mean, pooled.accuracy.mean);
  EXPECT_DOUBLE_EQ(per.aurc.std, 0.0);
}

TEST(Repetitions, MismatchedQuestionSetsRejected) {
  auto s = hand_example();
  s.pop_back();  // q3 missing from repetition 1
  try {
    per_repetition_evaluate(s, kDefaultRiskGrid);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("q3"), std::string::npos) << e.what();
    EXPECT_EQ(e.field(), "repetition 1");
  }
  EXPECT_NO_THROW(pooled_evaluate(s, kDefaultRiskGrid));
}

TEST(Holdout, ThresholdsAppliedFromCalibration) {
  const auto calib = samples({{0.9, 1}, {0.8, 1}, {0.7, 0}, {0.6, 1}});
  const auto test = samples({{0.95, 1}, {0.85, 0}, {0.75, 1}, {0.5, 1}});
  const auto m = evaluate_samples(test, std::vector<double>{0.0}, calib);
  // Threshold 0.8 from calibration accepts 0.95 and 0.85 on test.
  EXPECT_DOUBLE_EQ(m.c_at_r[0].threshold, 0.8);
  EXPECT_DOUBLE_EQ(m.c_at_r[0].coverage, 0.5);
  EXPECT_DOUBLE_EQ(*m.c_at_r[0].realized_risk, 0.5);
}

TEST(MeanStd, SampleStandardDeviation) {
  const std::vector<double> v{1, 2, 3, 4};
  const auto st = mean_and_std(v);
  EXPECT_DOUBLE_EQ(st.mean, 2.5);
  EXPECT_NEAR(st.std, std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_DOUBLE_EQ(mean_and_std(std::vector<double>{7}).std, 0.0);
}

}  // namespace
}  // namespace sieves
