#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sieves/confidence.hpp"
#include "sieves/error.hpp"
#include "sieves/geometry.hpp"
#include "sieves/labeling.hpp"
#include "sieves/trace.hpp"

namespace sieves {

// Confidence draws for one head: clip(N(mean, noise), 0, 1), with the mean
// chosen by the head's binary target.
struct HeadModel {
  double mean_pos = 0.75;
  double mean_neg = 0.35;
  double noise = 0.15;
};

struct SimSpec {
  int n_questions = 500;
  int n_repetitions = 1;
  double accuracy = 0.6;
  double p_loc = 0.5;               // P(g_loc = 1)
  double loc_accuracy_lift = 0.2;   // P(y|g_loc=1) - P(y|g_loc=0)
  double p_coh_given_loc = 0.8;     // P(g_coh = 1 | g_loc = 1)
  double p_no_crop = 0.2;           // P(no crop | g_loc = 0)
  double p_two_gt = 0.2;            // questions with two ground-truth boxes
  double p_unanswerable = 0.0;
  HeadModel corr{0.75, 0.45, 0.15};
  HeadModel loc{0.80, 0.30, 0.15};
  HeadModel coh{0.75, 0.35, 0.15};
  std::uint64_t seed = 0;
};

inline std::vector<ValidationError> sim_spec_violations(const SimSpec& s) {
  std::vector<ValidationError> out;
  if (s.n_questions < 1) out.emplace_back("simulate.n_questions", "must be >= 1");
  if (s.n_repetitions < 1) out.emplace_back("simulate.n_repetitions", "must be >= 1");
  const std::pair<const char*, double> probs[] = {
      {"simulate.accuracy", s.accuracy},         {"simulate.p_loc", s.p_loc},
      {"simulate.p_coh_given_loc", s.p_coh_given_loc}, {"simulate.p_no_crop", s.p_no_crop},
      {"simulate.p_two_gt", s.p_two_gt},         {"simulate.p_unanswerable", s.p_unanswerable},
      {"simulate.corr.mean_pos", s.corr.mean_pos}, {"simulate.corr.mean_neg", s.corr.mean_neg},
      {"simulate.loc.mean_pos", s.loc.mean_pos},   {"simulate.loc.mean_neg", s.loc.mean_neg},
      {"simulate.coh.mean_pos", s.coh.mean_pos},   {"simulate.coh.mean_neg", s.coh.mean_neg}};
  for (const auto& [name, v] : probs) {
    if (!(v >= 0.0 && v <= 1.0)) out.emplace_back(name, "must be a probability in [0,1]");
  }
  for (const auto& [name, v] : {std::pair{"simulate.corr.noise", s.corr.noise},
                                std::pair{"simulate.loc.noise", s.loc.noise},
                                std::pair{"simulate.coh.noise", s.coh.noise}}) {
    if (!(v >= 0.0) || !std::isfinite(v)) out.emplace_back(name, "must be >= 0");
  }
  // Conditional accuracies that keep the marginal accuracy at `accuracy`.
  const double with_loc = s.accuracy + (1.0 - s.p_loc) * s.loc_accuracy_lift;
  const double without_loc = s.accuracy - s.p_loc * s.loc_accuracy_lift;
  if (!(with_loc >= 0.0 && with_loc <= 1.0 && without_loc >= 0.0 && without_loc <= 1.0)) {
    out.emplace_back("simulate.loc_accuracy_lift",
                     "infeasible: conditional accuracies " + std::to_string(with_loc) + " / " +
                         std::to_string(without_loc) + " leave [0,1]");
  }
  return out;
}

struct SimulatedCorpus {
  std::vector<Trace> traces;
  std::vector<LabelSet> labels;
  ConfidenceTable confidences;
};

namespace detail {

struct QuestionLayout {
  std::string id;
  int width = 0;
  int height = 0;
  std::vector<BoundingBox> gt;
  bool answerable = true;
};

inline double clip01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace detail

// Generates traces with real geometry: localized answers get a crop that
// contains every ground-truth box (mIoGT = 1); the rest get either no crop or
// a crop covering less than `miogt_threshold` of the first box. Labels are
// derived from that geometry, so the full labeling path can be replayed.
inline SimulatedCorpus simulate(const SimSpec& spec, double miogt_threshold = kDefaultMiogtThreshold) {
  if (auto bad = sim_spec_violations(spec); !bad.empty()) throw bad.front();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto bernoulli = [&](double p) { return unit(rng) < p; };
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  auto head = [&](const HeadModel& m, int target) {
    const double mean = target ? m.mean_pos : m.mean_neg;
    if (m.noise == 0.0) return mean;
    std::normal_distribution<double> dist(mean, m.noise);
    return detail::clip01(dist(rng));
  };

  std::vector<detail::QuestionLayout> questions;
  for (int q = 0; q < spec.n_questions; ++q) {
    detail::QuestionLayout l;
    l.id = "q" + std::to_string(q);
    l.width = 640 + static_cast<int>(unit(rng) * 3360);
    l.height = 480 + static_cast<int>(unit(rng) * 2520);
    const bool two = bernoulli(spec.p_two_gt);
    // First box lives in the left part of the image (x_max <= 0.45), the
    // second in the right half, so a crop on one never touches the other.
    const double w0 = uniform(0.02, 0.15), h0 = uniform(0.02, 0.15);
    const double x0 = uniform(0.0, 0.45 - w0), y0 = uniform(0.0, 1.0 - h0);
    l.gt.push_back({x0, y0, x0 + w0, y0 + h0});
    if (two) {
      const double w1 = uniform(0.02, 0.15), h1 = uniform(0.02, 0.15);
      const double x1 = uniform(0.5, 1.0 - w1), y1 = uniform(0.0, 1.0 - h1);
      l.gt.push_back({x1, y1, x1 + w1, y1 + h1});
    }
    l.answerable = !bernoulli(spec.p_unanswerable);
    questions.push_back(std::move(l));
  }

  const double acc_with_loc = spec.accuracy + (1.0 - spec.p_loc) * spec.loc_accuracy_lift;
  const double acc_without_loc = spec.accuracy - spec.p_loc * spec.loc_accuracy_lift;

  SimulatedCorpus out;
  for (int rep = 0; rep < spec.n_repetitions; ++rep) {
    for (const auto& q : questions) {
      Trace t;
      t.question_id = q.id;
      t.repetition = rep;
      t.question = "Question " + q.id + ": what is shown in the marked region?";
      t.image = {"images/" + q.id + ".jpg", q.width, q.height};
      t.gt_boxes = q.gt;
      t.answerable = q.answerable;
      t.gt_answers = {q.answerable ? "answer " + q.id : "unanswerable"};

      const bool localized = bernoulli(spec.p_loc);
      if (localized) {
        BoundingBox hull = q.gt.front();
        for (const auto& b : q.gt) {
          hull = {std::min(hull.x_min, b.x_min), std::min(hull.y_min, b.y_min), std::max(hull.x_max, b.x_max),
                  std::max(hull.y_max, b.y_max)};
        }
        const double m = uniform(0.0, 0.1);
        t.crops.push_back({1,
                           {detail::clip01(hull.x_min - m), detail::clip01(hull.y_min - m),
                            detail::clip01(hull.x_max + m), detail::clip01(hull.y_max + m)},
                           CropSource::tool_call,
                           {}});
      } else if (!bernoulli(spec.p_no_crop)) {
        const auto& g = q.gt.front();
        const double f = uniform(0.0, 0.95 * std::min(1.0, miogt_threshold));
        const double x_min = g.x_max - f * g.width();
        const double x_max = std::min(0.5, std::max(g.x_max, x_min) + uniform(0.01, 0.05));
        const double m = uniform(0.0, 0.05);
        t.crops.push_back({1,
                           {x_min, detail::clip01(g.y_min - m), x_max, detail::clip01(g.y_max + m)},
                           CropSource::tool_call,
                           {}});
      }

      const auto loc = label_localization(t, miogt_threshold);
      int y = bernoulli(loc.g_loc ? acc_with_loc : acc_without_loc) ? 1 : 0;
      if (!q.answerable) y = 0;
      const int g_coh = loc.g_loc && bernoulli(spec.p_coh_given_loc) ? 1 : 0;

      t.final_answer = y ? (rep % 2 == 0 ? "Answer " + q.id : "answer " + q.id + ".")
                         : "wrong " + q.id + " r" + std::to_string(rep);
      t.last_message = "Repetition " + std::to_string(rep) + ". After zooming in, the region shows the object. " +
                       "Final answer: \\boxed{" + t.final_answer + "}";

      LabelSet label;
      label.key = t.key();
      label.y = y;
      label.g_loc = loc.g_loc;
      label.g_coh = g_coh;
      label.miogt_value = loc.miogt_value;
      label.correctness_source = q.answerable ? CorrectnessSource::exact_match : CorrectnessSource::unanswerable_rule;
      label.coherence_source = loc.g_loc ? CoherenceSource::judge : CoherenceSource::forced_zero_by_loc;

      const ConfidenceTriple conf{head(spec.corr, y), head(spec.loc, loc.g_loc), head(spec.coh, g_coh)};
      out.confidences.emplace(t.key(), conf);
      out.labels.push_back(label);
      out.traces.push_back(std::move(t));
    }
  }
  return out;
}

}  // namespace sieves
