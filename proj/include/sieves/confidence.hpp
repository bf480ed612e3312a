#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <ostream>
#include <string>

#include "sieves/error.hpp"
#include "sieves/jsonl.hpp"
#include "sieves/trace.hpp"

namespace sieves {

// Per-head weights, used both for the training objective and for combining
// head outputs into the abstention score. Stored as given.
struct WeightConfig {
  double lambda_corr = 0.6;
  double lambda_loc = 0.3;
  double lambda_coh = 0.1;

  double sum() const noexcept { return lambda_corr + lambda_loc + lambda_coh; }

  friend bool operator==(const WeightConfig&, const WeightConfig&) = default;
};

inline std::optional<ValidationError> weight_violation(const WeightConfig& w) {
  const std::pair<const char*, double> parts[] = {
      {"weights.lambda_corr", w.lambda_corr},
      {"weights.lambda_loc", w.lambda_loc},
      {"weights.lambda_coh", w.lambda_coh}};
  for (const auto& [name, v] : parts) {
    if (!std::isfinite(v) || v < 0.0) return ValidationError(name, "must be a non-negative number");
  }
  if (!(w.sum() > 0.0)) return ValidationError("weights", "at least one weight must be positive");
  return std::nullopt;
}

// c_sel = λ_corr·c_corr + λ_loc·c_loc + λ_coh·c_coh
inline double combine_confidence(const ConfidenceTriple& c, const WeightConfig& w = {}) {
  return w.lambda_corr * c.c_corr + w.lambda_loc * c.c_loc + w.lambda_coh * c.c_coh;
}

// Binary targets for the three heads.
struct HeadTargets {
  int y = 0;
  int g_loc = 0;
  int g_coh = 0;
};

inline constexpr double kDefaultLabelSmoothing = 0.1;
inline constexpr double kProbabilityClamp = 1e-7;

// Two-class smoothing: y' = y(1-ε) + ε/2.
inline double smooth_target(int y, double epsilon) {
  return static_cast<double>(y) * (1.0 - epsilon) + epsilon / 2.0;
}

inline double bce(double prediction, double target) {
  const double c = std::clamp(prediction, kProbabilityClamp, 1.0 - kProbabilityClamp);
  return -(target * std::log(c) + (1.0 - target) * std::log1p(-c));
}

// Weighted per-head BCE with label smoothing applied to every head.
inline double weighted_bce(const ConfidenceTriple& pred, const HeadTargets& target,
                           const WeightConfig& w = {}, double epsilon = 0.0) {
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw ValidationError("label_smoothing", "must be in [0,1)");
  return w.lambda_corr * bce(pred.c_corr, smooth_target(target.y, epsilon)) +
         w.lambda_loc * bce(pred.c_loc, smooth_target(target.g_loc, epsilon)) +
         w.lambda_coh * bce(pred.c_coh, smooth_target(target.g_coh, epsilon));
}

// The atom of every selective-prediction metric.
struct ScoredSample {
  std::string question_id;
  int repetition = 0;
  double c_sel = 0.0;
  int y = 0;

  SampleKey key() const { return {question_id, repetition}; }
};

// Confidence file: one record per (question_id, repetition).
using ConfidenceTable = std::map<SampleKey, ConfidenceTriple>;

inline ConfidenceTable parse_confidences(std::istream& in) {
  ConfidenceTable out;
  for_each_jsonl(in, [&](const json& r, std::size_t line) {
    SampleKey key;
    key.question_id = field::string(field::require(r, "question_id", line), "question_id", line);
    key.repetition = static_cast<int>(field::integer(field::require(r, "repetition", line), "repetition", line));
    ConfidenceTriple c;
    c.c_corr = field::number(field::require(r, "c_corr", line), "c_corr", line);
    c.c_loc = field::number(field::require(r, "c_loc", line), "c_loc", line);
    c.c_coh = field::number(field::require(r, "c_coh", line), "c_coh", line);
    if (auto bad = confidence_violation(c)) throw ParseError(line, "confidences", *bad);
    if (!out.emplace(key, c).second) {
      throw ParseError(line, "question_id", "duplicate (question_id, repetition) " + to_string(key));
    }
  });
  return out;
}

inline ConfidenceTable load_confidences(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_confidences(in);
}

inline json encode_confidence(const SampleKey& key, const ConfidenceTriple& c) {
  return {{"question_id", key.question_id}, {"repetition", key.repetition},
          {"c_corr", c.c_corr}, {"c_loc", c.c_loc}, {"c_coh", c.c_coh}};
}

}  // namespace sieves
