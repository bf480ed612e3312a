#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sieves/confidence.hpp"
#include "sieves/error.hpp"

namespace sieves {

// Default risk levels (fractions) at which coverage is reported.
inline const std::vector<double> kDefaultRiskGrid = {0.01, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30};

inline constexpr double kNoThreshold = std::numeric_limits<double>::infinity();

struct RiskCoveragePoint {
  double threshold = 0.0;
  double coverage = 0.0;
  std::optional<double> risk;  // undefined when nothing is accepted
  std::size_t accepted = 0;
};

namespace detail {

// Descending confidence; among ties, incorrect before correct.
inline std::vector<std::size_t> ranked_order(std::span<const ScoredSample> samples) {
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (samples[a].c_sel != samples[b].c_sel) return samples[a].c_sel > samples[b].c_sel;
    return samples[a].y < samples[b].y;
  });
  return idx;
}

// One point per distinct confidence, highest threshold first. Samples sharing
// a confidence are accepted together.
inline std::vector<RiskCoveragePoint> threshold_sweep(std::span<const ScoredSample> samples) {
  std::vector<RiskCoveragePoint> out;
  const auto order = ranked_order(samples);
  const double n = static_cast<double>(samples.size());
  std::size_t accepted = 0;
  std::size_t errors = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& s = samples[order[k]];
    ++accepted;
    if (s.y == 0) ++errors;
    const bool group_end = k + 1 == order.size() || samples[order[k + 1]].c_sel != s.c_sel;
    if (!group_end) continue;
    out.push_back({s.c_sel, static_cast<double>(accepted) / n,
                   static_cast<double>(errors) / static_cast<double>(accepted), accepted});
  }
  return out;
}

}  // namespace detail

// Coverage and risk when answering every sample with c_sel >= threshold.
inline RiskCoveragePoint coverage_risk_at(std::span<const ScoredSample> samples, double threshold) {
  if (samples.empty()) throw ValidationError("samples", "no scored samples");
  std::size_t accepted = 0;
  std::size_t errors = 0;
  for (const auto& s : samples) {
    if (s.c_sel >= threshold) {
      ++accepted;
      if (s.y == 0) ++errors;
    }
  }
  RiskCoveragePoint p{threshold, static_cast<double>(accepted) / static_cast<double>(samples.size()),
                      std::nullopt, accepted};
  if (accepted > 0) p.risk = static_cast<double>(errors) / static_cast<double>(accepted);
  return p;
}

struct CoverageAtRisk {
  double risk_level = 0.0;
  double coverage = 0.0;
  // Operating threshold; kNoThreshold when only the empty accept set qualifies.
  double threshold = kNoThreshold;
  std::optional<double> realized_risk;
};

// Largest coverage whose risk stays at or below `risk_level`, over every
// achievable threshold. The empty accept set (coverage 0) always qualifies.
inline CoverageAtRisk coverage_at_risk(std::span<const ScoredSample> samples, double risk_level) {
  if (samples.empty()) throw ValidationError("samples", "no scored samples");
  CoverageAtRisk best{risk_level, 0.0, kNoThreshold, std::nullopt};
  for (const auto& p : detail::threshold_sweep(samples)) {
    if (*p.risk <= risk_level) best = {risk_level, p.coverage, p.threshold, p.risk};
  }
  return best;
}

// Discrete AURC: mean over k of the error rate among the top-k samples.
// Ties are broken pessimistically (incorrect answers ranked first).
inline double aurc(std::span<const ScoredSample> samples) {
  if (samples.empty()) throw ValidationError("samples", "no scored samples");
  const auto order = detail::ranked_order(samples);
  double total = 0.0;
  std::size_t errors = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (samples[order[k]].y == 0) ++errors;
    total += static_cast<double>(errors) / static_cast<double>(k + 1);
  }
  return total / static_cast<double>(order.size());
}

inline std::vector<RiskCoveragePoint> risk_coverage_curve(std::span<const ScoredSample> samples) {
  if (samples.empty()) throw ValidationError("samples", "no scored samples");
  return detail::threshold_sweep(samples);
}

inline double accuracy(std::span<const ScoredSample> samples) {
  if (samples.empty()) throw ValidationError("samples", "no scored samples");
  const auto correct = std::count_if(samples.begin(), samples.end(), [](const auto& s) { return s.y == 1; });
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

enum class AggregationMode { pooled, per_repetition };

inline const char* to_string(AggregationMode m) {
  return m == AggregationMode::pooled ? "pooled" : "per_repetition";
}

inline std::optional<AggregationMode> parse_aggregation_mode(std::string_view s) {
  if (s == "pooled") return AggregationMode::pooled;
  if (s == "per_repetition") return AggregationMode::per_repetition;
  return std::nullopt;
}

// Metrics of one sample set.
struct MetricSet {
  std::size_t n = 0;
  double accuracy = 0.0;
  std::vector<CoverageAtRisk> c_at_r;
  double mean_c_at_r = 0.0;
  double aurc = 0.0;
};

struct Stat {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
};

inline Stat mean_and_std(std::span<const double> values) {
  if (values.empty()) return {};
  const double n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / n;
  if (values.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

// Coverage at each risk level. With `calibration`, operating thresholds are
// picked on that set and applied to `samples`; otherwise on `samples` itself.
inline MetricSet evaluate_samples(std::span<const ScoredSample> samples, std::span<const double> risk_grid,
                                  std::span<const ScoredSample> calibration = {}) {
  MetricSet m;
  m.n = samples.size();
  m.accuracy = accuracy(samples);
  m.aurc = aurc(samples);
  for (double r : risk_grid) {
    if (calibration.empty()) {
      m.c_at_r.push_back(coverage_at_risk(samples, r));
    } else {
      const auto picked = coverage_at_risk(calibration, r);
      const auto applied = coverage_risk_at(samples, picked.threshold);
      m.c_at_r.push_back({r, applied.coverage, picked.threshold, applied.risk});
    }
  }
  if (!m.c_at_r.empty()) {
    double sum = 0.0;
    for (const auto& c : m.c_at_r) sum += c.coverage;
    m.mean_c_at_r = sum / static_cast<double>(m.c_at_r.size());
  }
  return m;
}

struct RiskCoverageReport {
  AggregationMode mode = AggregationMode::pooled;
  std::vector<double> risk_grid;
  std::size_t n_samples = 0;
  // Pooled mode: the single metric set. Per-repetition mode: one entry per
  // repetition index, ascending.
  std::vector<std::pair<int, MetricSet>> repetitions;
  MetricSet pooled;
  // Aggregates across repetitions (pooled mode: the pooled value, std 0).
  Stat accuracy;
  std::vector<Stat> c_at_r;
  Stat mean_c_at_r;
  Stat aurc;
};

inline RiskCoverageReport pooled_evaluate(std::span<const ScoredSample> samples,
                                          std::span<const double> risk_grid,
                                          std::span<const ScoredSample> calibration = {}) {
  RiskCoverageReport rep;
  rep.mode = AggregationMode::pooled;
  rep.risk_grid.assign(risk_grid.begin(), risk_grid.end());
  rep.n_samples = samples.size();
  rep.pooled = evaluate_samples(samples, risk_grid, calibration);
  rep.accuracy = {rep.pooled.accuracy, 0.0};
  rep.mean_c_at_r = {rep.pooled.mean_c_at_r, 0.0};
  rep.aurc = {rep.pooled.aurc, 0.0};
  for (const auto& c : rep.pooled.c_at_r) rep.c_at_r.push_back({c.coverage, 0.0});
  return rep;
}

// Each repetition gets its own operating thresholds; the report carries the
// mean and sample standard deviation across repetitions.
inline RiskCoverageReport per_repetition_evaluate(std::span<const ScoredSample> samples,
                                                  std::span<const double> risk_grid,
                                                  std::span<const ScoredSample> calibration = {}) {
  if (samples.empty()) throw ValidationError("samples", "no scored samples");
  std::map<int, std::vector<ScoredSample>> by_rep;
  for (const auto& s : samples) by_rep[s.repetition].push_back(s);

  std::set<std::string> all_ids;
  for (const auto& [rep, group] : by_rep) {
    for (const auto& s : group) all_ids.insert(s.question_id);
  }
  for (const auto& [rep, group] : by_rep) {
    std::set<std::string> ids;
    for (const auto& s : group) ids.insert(s.question_id);
    if (ids.size() == all_ids.size()) continue;
    std::string missing;
    for (const auto& id : all_ids) {
      if (ids.count(id) == 0) missing += (missing.empty() ? "" : ", ") + id;
    }
    throw ValidationError("repetition " + std::to_string(rep), "missing question ids: " + missing);
  }

  RiskCoverageReport out;
  out.mode = AggregationMode::per_repetition;
  out.risk_grid.assign(risk_grid.begin(), risk_grid.end());
  out.n_samples = samples.size();
  for (const auto& [rep, group] : by_rep) {
    out.repetitions.emplace_back(rep, evaluate_samples(group, risk_grid, calibration));
  }
  auto collect = [&](auto getter) {
    std::vector<double> v;
    for (const auto& [rep, m] : out.repetitions) v.push_back(getter(m));
    return mean_and_std(v);
  };
  out.accuracy = collect([](const MetricSet& m) { return m.accuracy; });
  out.mean_c_at_r = collect([](const MetricSet& m) { return m.mean_c_at_r; });
  out.aurc = collect([](const MetricSet& m) { return m.aurc; });
  for (std::size_t k = 0; k < risk_grid.size(); ++k) {
    out.c_at_r.push_back(collect([k](const MetricSet& m) { return m.c_at_r[k].coverage; }));
  }
  return out;
}

inline RiskCoverageReport evaluate(AggregationMode mode, std::span<const ScoredSample> samples,
                                   std::span<const double> risk_grid,
                                   std::span<const ScoredSample> calibration = {}) {
  return mode == AggregationMode::pooled ? pooled_evaluate(samples, risk_grid, calibration)
                                         : per_repetition_evaluate(samples, risk_grid, calibration);
}

}  // namespace sieves
