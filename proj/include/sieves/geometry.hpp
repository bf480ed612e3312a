#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "sieves/box.hpp"
#include "sieves/error.hpp"
#include "sieves/trace.hpp"

namespace sieves {

// Default spatial-recall threshold and the ablation grid it is drawn from.
inline constexpr double kDefaultMiogtThreshold = 0.75;
inline constexpr double kMiogtThresholdGrid[] = {0.25, 0.50, 0.75};

// Intersection over ground truth: |gt ∩ crop| / |gt|.
inline double iogt(const BoundingBox& gt, const BoundingBox& crop) {
  const double gt_area = gt.area();
  if (!(gt_area > 0.0)) throw DegenerateBoxError("ground-truth box has zero area");
  if (contains(crop, gt)) return 1.0;
  return std::clamp(intersection_area(gt, crop) / gt_area, 0.0, 1.0);
}

inline double iou(const BoundingBox& a, const BoundingBox& b) {
  const double area_a = a.area();
  const double area_b = b.area();
  if (!(area_a > 0.0) && !(area_b > 0.0)) throw DegenerateBoxError("both boxes have zero area");
  const double inter = intersection_area(a, b);
  return std::clamp(inter / (area_a + area_b - inter), 0.0, 1.0);
}

// IoGT of every (gt, crop) pair; rows are ground-truth boxes.
class MatchMatrix {
 public:
  MatchMatrix(std::span<const BoundingBox> gt_boxes, std::span<const BoundingBox> crops)
      : rows_(gt_boxes.size()), cols_(crops.size()), cells_(rows_ * cols_) {
    for (std::size_t i = 0; i < rows_; ++i) {
      for (std::size_t j = 0; j < cols_; ++j) cells_[i * cols_ + j] = iogt(gt_boxes[i], crops[j]);
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double at(std::size_t i, std::size_t j) const { return cells_.at(i * cols_ + j); }

  // Best crop for ground-truth box i; 0 when there are no crops.
  double row_max(std::size_t i) const {
    double best = 0.0;
    for (std::size_t j = 0; j < cols_; ++j) best = std::max(best, at(i, j));
    return best;
  }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> cells_;
};

// Mean over ground-truth boxes of the best IoGT among crops. A crop may serve
// several ground-truth boxes. No crops gives 0.
inline double miogt(std::span<const BoundingBox> gt_boxes, std::span<const BoundingBox> crops) {
  if (gt_boxes.empty()) throw ValidationError("gt_boxes", "no ground-truth boxes");
  for (const auto& gt : gt_boxes) {
    if (gt.degenerate()) throw DegenerateBoxError("ground-truth box has zero area");
  }
  const MatchMatrix m(gt_boxes, crops);
  double sum = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) sum += m.row_max(i);
  return sum / static_cast<double>(m.rows());
}

// g_loc: 1 iff mIoGT >= threshold (inclusive).
inline int spatial_recall(double miogt_value, double threshold = kDefaultMiogtThreshold) {
  return miogt_value >= threshold ? 1 : 0;
}

inline std::vector<BoundingBox> crop_boxes(const Trace& t) {
  std::vector<BoundingBox> out;
  out.reserve(t.crops.size());
  for (const auto& c : t.crops) out.push_back(c.box);
  return out;
}

// Zoom-in quality of a single crop. The ground-truth dependent fields are
// empty when the trace has no ground-truth boxes.
struct CropStats {
  double crop_to_image_ratio = 0.0;
  std::optional<double> object_to_crop_ratio;
  std::optional<double> gt_recall;
  bool oversized = false;
};

inline constexpr double kOversizedCropRatio = 0.25;

inline CropStats crop_stats_for(const BoundingBox& crop, std::span<const BoundingBox> gt_boxes) {
  CropStats s;
  s.crop_to_image_ratio = std::clamp(crop.area(), 0.0, 1.0);
  s.oversized = s.crop_to_image_ratio > kOversizedCropRatio;
  if (!gt_boxes.empty()) {
    // Best-matched ground truth is the one sharing the largest area with the crop.
    double best_inter = 0.0;
    for (const auto& gt : gt_boxes) best_inter = std::max(best_inter, intersection_area(gt, crop));
    s.object_to_crop_ratio = crop.degenerate() ? 0.0 : std::clamp(best_inter / crop.area(), 0.0, 1.0);
    const BoundingBox single[] = {crop};
    s.gt_recall = miogt(gt_boxes, single);
  }
  return s;
}

struct TraceCropStats {
  std::vector<CropStats> per_crop;
  // Largest IoU between any crop and any ground-truth box, for the IoU-skew table.
  std::optional<double> best_iou;

  // Summaries use the last crop of the conversation.
  const CropStats* final_crop() const { return per_crop.empty() ? nullptr : &per_crop.back(); }
};

// Per-crop statistics in conversation order. A trace without crops yields an
// empty result.
inline TraceCropStats crop_stats(const Trace& t) {
  TraceCropStats out;
  for (const auto& c : t.crops) out.per_crop.push_back(crop_stats_for(c.box, t.gt_boxes));
  if (!t.crops.empty() && !t.gt_boxes.empty()) {
    double best = 0.0;
    for (const auto& gt : t.gt_boxes) {
      for (const auto& c : t.crops) best = std::max(best, iou(gt, c.box));
    }
    out.best_iou = best;
  }
  return out;
}

inline std::optional<double> median(std::vector<double> values) {
  if (values.empty()) return std::nullopt;
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + mid);
  return 0.5 * (lower + upper);
}

// Corpus-level crop quality, computed over the final crop of each trace.
struct CropStatsSummary {
  std::size_t traces = 0;
  std::size_t traces_with_crops = 0;
  std::optional<double> ratio_median;
  std::optional<double> object_to_crop_median;
  std::optional<double> gt_recall_median;
  std::optional<double> oversized_fraction;
  // Share of traces (with crops and boxes) whose best IoU reaches 0.25 / 0.50 / 0.75.
  std::optional<double> iou_share[3];
};

inline constexpr double kIouSkewThresholds[] = {0.25, 0.50, 0.75};

inline CropStatsSummary summarize_crop_stats(std::span<const Trace> traces) {
  CropStatsSummary s;
  s.traces = traces.size();
  std::vector<double> ratio, object, recall, ious;
  std::size_t oversized = 0;
  for (const auto& t : traces) {
    const auto stats = crop_stats(t);
    const CropStats* last = stats.final_crop();
    if (last == nullptr) continue;
    ++s.traces_with_crops;
    ratio.push_back(last->crop_to_image_ratio);
    if (last->object_to_crop_ratio) object.push_back(*last->object_to_crop_ratio);
    if (last->gt_recall) recall.push_back(*last->gt_recall);
    if (last->oversized) ++oversized;
    if (stats.best_iou) ious.push_back(*stats.best_iou);
  }
  s.ratio_median = median(ratio);
  s.object_to_crop_median = median(object);
  s.gt_recall_median = median(recall);
  if (s.traces_with_crops > 0) {
    s.oversized_fraction = static_cast<double>(oversized) / static_cast<double>(s.traces_with_crops);
  }
  if (!ious.empty()) {
    for (std::size_t k = 0; k < 3; ++k) {
      const auto hits = std::count_if(ious.begin(), ious.end(),
                                      [&](double v) { return v >= kIouSkewThresholds[k]; });
      s.iou_share[k] = static_cast<double>(hits) / static_cast<double>(ious.size());
    }
  }
  return s;
}

}  // namespace sieves
