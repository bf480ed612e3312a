#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "sieves/confidence.hpp"

namespace sieves {
namespace {

// High-precision reference values (computed offline with 30 significant digits).
constexpr double kMinusLog09 = 0.105360515657826301227500980839;
constexpr double kLog2 = 0.693147180559945309417232121458;
constexpr double kSmoothedExample = 0.256774511221652904192435202112;

TEST(Combine, Examples) {
  EXPECT_NEAR(combine_confidence({0.5, 0.2, 0.9}), 0.45, 1e-12);
  EXPECT_DOUBLE_EQ(combine_confidence({0.5, 0.2, 0.9}, {1, 0, 0}), 0.5);
  EXPECT_DOUBLE_EQ(combine_confidence({1, 1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(combine_confidence({0, 0, 0}), 0.0);
}

TEST(Combine, InUnitIntervalForNormalizedWeights) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    double a = u(rng), b = u(rng), c = u(rng);
    const double s = a + b + c;
    const WeightConfig w{a / s, b / s, c / s};
    const double v = combine_confidence({u(rng), u(rng), u(rng)}, w);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0 + 1e-12);
  }
}

TEST(Weights, Violations) {
  EXPECT_FALSE(weight_violation({}).has_value());
  const auto neg = weight_violation({0.6, -0.1, 0.5});
  ASSERT_TRUE(neg.has_value());
  EXPECT_EQ(neg->field(), "weights.lambda_loc");
  EXPECT_TRUE(weight_violation({0, 0, 0}).has_value());
  EXPECT_TRUE(weight_violation({std::nan(""), 0.5, 0.5}).has_value());
  // Not normalized is allowed; stored as given.
  EXPECT_FALSE(weight_violation({2, 1, 1}).has_value());
}

TEST(Bce, Examples) {
  EXPECT_NEAR(weighted_bce({0.9, 0.9, 0.9}, {1, 1, 1}, {1, 0, 0}), kMinusLog09, 1e-12);
  EXPECT_NEAR(weighted_bce({0.5, 0.5, 0.5}, {0, 1, 0}), kLog2, 1e-12);
  EXPECT_NEAR(weighted_bce({0.9, 0.2, 0.7}, {1, 0, 1}, {}, 0.1), kSmoothedExample, 1e-12);
}

TEST(Bce, ClampKeepsLossFinite) {
  const double at_zero = weighted_bce({0.0, 0.0, 0.0}, {1, 1, 1});
  EXPECT_TRUE(std::isfinite(at_zero));
  EXPECT_NEAR(at_zero, -std::log(1e-7), 1e-6);
  EXPECT_TRUE(std::isfinite(weighted_bce({1.0, 1.0, 1.0}, {0, 0, 0})));
}

TEST(Bce, ZeroOnlyAtUnsmoothedTarget) {
  EXPECT_NEAR(weighted_bce({1, 0, 1}, {1, 0, 1}), 0.0, 1e-6);
  EXPECT_GT(weighted_bce({0.99, 0.0, 1.0}, {1, 0, 1}), 1e-3);
}

TEST(Bce, SmoothedLossMinimizedAtSmoothedTarget) {
  const double eps = 0.1;
  for (int y : {0, 1}) {
    const double target = smooth_target(y, eps);
    const double at_target = bce(target, target);
    for (double c = 0.01; c < 1.0; c += 0.01) EXPECT_GE(bce(c, target) + 1e-15, at_target);
  }
  EXPECT_DOUBLE_EQ(smooth_target(1, eps), 0.95);
  EXPECT_DOUBLE_EQ(smooth_target(0, eps), 0.05);
}

TEST(Bce, NonNegativeProperty) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  for (int i = 0; i < 1000; ++i) {
    const HeadTargets t{coin(rng), coin(rng), coin(rng)};
    EXPECT_GE(weighted_bce({u(rng), u(rng), u(rng)}, t, {}, u(rng) * 0.5), 0.0);
  }
}

TEST(Bce, RejectsBadSmoothing) {
  EXPECT_THROW(weighted_bce({0.5, 0.5, 0.5}, {1, 1, 1}, {}, 1.0), ValidationError);
  EXPECT_THROW(weighted_bce({0.5, 0.5, 0.5}, {1, 1, 1}, {}, -0.1), ValidationError);
}

TEST(ConfidenceFile, ParseAndValidate) {
  std::istringstream ok(
      R"({"question_id":"a","repetition":0,"c_corr":0.1,"c_loc":0.2,"c_coh":0.3})"
      "\n"
      R"({"question_id":"a","repetition":1,"c_corr":1,"c_loc":0,"c_coh":0.5})");
  const auto table = parse_confidences(ok);
  ASSERT_EQ(table.size(), 2u);
  EXPECT_EQ(table.at({"a", 0}), (ConfidenceTriple{0.1, 0.2, 0.3}));

  std::istringstream dup(
      R"({"question_id":"a","repetition":0,"c_corr":0.1,"c_loc":0.2,"c_coh":0.3})"
      "\n"
      R"({"question_id":"a","repetition":0,"c_corr":0.1,"c_loc":0.2,"c_coh":0.3})");
  EXPECT_THROW(parse_confidences(dup), ParseError);

  std::istringstream range(R"({"question_id":"a","repetition":0,"c_corr":1.5,"c_loc":0.2,"c_coh":0.3})");
  EXPECT_THROW(parse_confidences(range), ParseError);
}

}  // namespace
}  // namespace sieves
