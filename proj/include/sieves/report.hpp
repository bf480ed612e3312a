#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sieves/geometry.hpp"
#include "sieves/jsonl.hpp"
#include "sieves/metrics.hpp"

namespace sieves::report {

// Shortest round-trip decimal.
inline std::string number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Fraction rendered as a percentage with one decimal.
inline std::string percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", fraction * 100.0);
  return buf;
}

inline std::string percent_label(double fraction) { return number(std::round(fraction * 1e6) / 1e4); }

using Header = std::vector<std::pair<std::string, std::string>>;

inline std::string header_block(const Header& header) {
  std::string out;
  for (const auto& [k, v] : header) out += "# " + k + "=" + v + "\n";
  return out;
}

// One row per metric set; per-repetition reports add mean and std rows.
inline std::string risk_coverage_csv(const std::string& benchmark, const RiskCoverageReport& r,
                                     const Header& header) {
  std::string out = header_block(header);
  out += "benchmark,mode,repetition,n,acc";
  for (double level : r.risk_grid) out += ",C@" + percent_label(level);
  out += ",mean_C@r,aurc\n";
  auto row = [&](const std::string& rep, std::size_t n, double acc, const std::vector<double>& cov,
                 double mean_cov, double aurc_value) {
    out += benchmark + "," + to_string(r.mode) + "," + rep + "," + std::to_string(n) + "," + percent(acc);
    for (double c : cov) out += "," + percent(c);
    out += "," + percent(mean_cov) + "," + percent(aurc_value) + "\n";
  };
  auto coverages = [](const MetricSet& m) {
    std::vector<double> v;
    for (const auto& c : m.c_at_r) v.push_back(c.coverage);
    return v;
  };
  if (r.mode == AggregationMode::pooled) {
    row("all", r.pooled.n, r.pooled.accuracy, coverages(r.pooled), r.pooled.mean_c_at_r, r.pooled.aurc);
    return out;
  }
  for (const auto& [rep, m] : r.repetitions) {
    row(std::to_string(rep), m.n, m.accuracy, coverages(m), m.mean_c_at_r, m.aurc);
  }
  std::vector<double> means, stds;
  for (const auto& s : r.c_at_r) {
    means.push_back(s.mean);
    stds.push_back(s.std);
  }
  row("mean", r.n_samples, r.accuracy.mean, means, r.mean_c_at_r.mean, r.aurc.mean);
  row("std", r.n_samples, r.accuracy.std, stds, r.mean_c_at_r.std, r.aurc.std);
  return out;
}

inline json metric_set_json(const MetricSet& m) {
  json levels = json::array();
  for (const auto& c : m.c_at_r) {
    levels.push_back({{"risk", c.risk_level},
                      {"coverage", c.coverage},
                      {"threshold", std::isfinite(c.threshold) ? json(c.threshold) : json(nullptr)},
                      {"realized_risk", c.realized_risk ? json(*c.realized_risk) : json(nullptr)}});
  }
  return {{"n", m.n}, {"accuracy", m.accuracy}, {"c_at_r", levels}, {"mean_c_at_r", m.mean_c_at_r},
          {"aurc", m.aurc}};
}

inline json stat_json(const Stat& s) { return {{"mean", s.mean}, {"std", s.std}}; }

inline json risk_coverage_json(const std::string& benchmark, const RiskCoverageReport& r, const json& config,
                               const json& extra = json::object()) {
  json out{{"benchmark", benchmark},
           {"mode", to_string(r.mode)},
           {"config", config},
           {"n_samples", r.n_samples},
           {"risk_grid", r.risk_grid},
           {"accuracy", stat_json(r.accuracy)},
           {"mean_c_at_r", stat_json(r.mean_c_at_r)},
           {"aurc", stat_json(r.aurc)}};
  json levels = json::array();
  for (std::size_t k = 0; k < r.risk_grid.size(); ++k) {
    levels.push_back({{"risk", r.risk_grid[k]}, {"coverage", stat_json(r.c_at_r[k])}});
  }
  out["c_at_r"] = levels;
  if (r.mode == AggregationMode::pooled) {
    out["pooled"] = metric_set_json(r.pooled);
  } else {
    json reps = json::array();
    for (const auto& [rep, m] : r.repetitions) {
      auto j = metric_set_json(m);
      j["repetition"] = rep;
      reps.push_back(std::move(j));
    }
    out["repetitions"] = reps;
  }
  for (auto it = extra.begin(); it != extra.end(); ++it) out[it.key()] = it.value();
  return out;
}

inline std::string curve_csv(std::span<const RiskCoveragePoint> curve, const Header& header) {
  std::string out = header_block(header);
  out += "threshold,coverage,risk\n";
  for (const auto& p : curve) {
    out += number(p.threshold) + "," + number(p.coverage) + "," + (p.risk ? number(*p.risk) : "") + "\n";
  }
  return out;
}

inline std::string crop_stats_csv(const std::string& benchmark, const CropStatsSummary& s, const Header& header) {
  auto cell = [](const std::optional<double>& v) { return v ? number(*v) : std::string(); };
  std::string out = header_block(header);
  out += "benchmark,traces,traces_with_crops,ratio_median,object_to_crop_median,gt_recall_median,"
         "oversized_fraction,iou_ge_0.25,iou_ge_0.50,iou_ge_0.75\n";
  out += benchmark + "," + std::to_string(s.traces) + "," + std::to_string(s.traces_with_crops) + "," +
         cell(s.ratio_median) + "," + cell(s.object_to_crop_median) + "," + cell(s.gt_recall_median) + "," +
         cell(s.oversized_fraction) + "," + cell(s.iou_share[0]) + "," + cell(s.iou_share[1]) + "," +
         cell(s.iou_share[2]) + "\n";
  return out;
}

}  // namespace sieves::report
