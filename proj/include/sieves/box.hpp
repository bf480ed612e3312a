#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "sieves/error.hpp"

namespace sieves {

// Axis-aligned rectangle in normalized image coordinates, origin top-left.
struct BoundingBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const noexcept { return x_max - x_min; }
  double height() const noexcept { return y_max - y_min; }
  double area() const noexcept { return width() * height(); }
  bool degenerate() const noexcept { return !(area() > 0.0); }

  std::array<double, 4> to_array() const { return {x_min, y_min, x_max, y_max}; }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

// Checks the [0,1] range and min <= max ordering. Returns the offending
// component name and reason, or nothing when the box is valid.
inline std::optional<std::string> box_violation(const BoundingBox& b) {
  const std::array<std::pair<const char*, double>, 4> parts{
      {{"x_min", b.x_min}, {"y_min", b.y_min}, {"x_max", b.x_max}, {"y_max", b.y_max}}};
  for (const auto& [name, v] : parts) {
    if (!std::isfinite(v)) return std::string(name) + " is not finite";
    if (v < 0.0 || v > 1.0) return std::string(name) + " outside [0,1]";
  }
  if (b.x_min > b.x_max) return std::string("x_min > x_max");
  if (b.y_min > b.y_max) return std::string("y_min > y_max");
  return std::nullopt;
}

inline double intersection_area(const BoundingBox& a, const BoundingBox& b) {
  const double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

inline bool contains(const BoundingBox& outer, const BoundingBox& inner) {
  return outer.x_min <= inner.x_min && outer.y_min <= inner.y_min &&
         outer.x_max >= inner.x_max && outer.y_max >= inner.y_max;
}

// Coordinate convention of a raw rectangle handed to normalize_box.
enum class CoordinateSpace {
  normalized,  // already in [0,1]
  pixel,       // absolute pixels of the full image
  permille,    // 0-1000 on both axes
};

inline std::optional<CoordinateSpace> parse_coordinate_space(std::string_view s) {
  if (s == "normalized") return CoordinateSpace::normalized;
  if (s == "pixel") return CoordinateSpace::pixel;
  if (s == "permille") return CoordinateSpace::permille;
  return std::nullopt;
}

inline const char* to_string(CoordinateSpace s) {
  switch (s) {
    case CoordinateSpace::normalized: return "normalized";
    case CoordinateSpace::pixel: return "pixel";
    case CoordinateSpace::permille: return "permille";
  }
  return "normalized";
}

// Rectangle as found in raw logs or annotator output. Corners may come in
// either order.
struct RawRect {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;
};

// Converts a raw rectangle into [0,1] space. Corner order is canonicalized and
// coordinates are clamped to the image. Image dimensions are only consulted
// for pixel input but must be positive regardless.
inline BoundingBox normalize_box(const RawRect& raw, double image_width, double image_height,
                                 CoordinateSpace space) {
  for (double v : {raw.x0, raw.y0, raw.x1, raw.y1, image_width, image_height}) {
    if (!std::isfinite(v)) throw ValidationError("box", "non-finite coordinate");
  }
  if (image_width <= 0.0 || image_height <= 0.0) {
    throw ValidationError("image", "dimensions must be positive");
  }
  double sx = 1.0;
  double sy = 1.0;
  if (space == CoordinateSpace::pixel) {
    sx = image_width;
    sy = image_height;
  } else if (space == CoordinateSpace::permille) {
    sx = sy = 1000.0;
  }
  auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };
  const double ax = clamp01(raw.x0 / sx), bx = clamp01(raw.x1 / sx);
  const double ay = clamp01(raw.y0 / sy), by = clamp01(raw.y1 / sy);
  return {std::min(ax, bx), std::min(ay, by), std::max(ax, bx), std::max(ay, by)};
}

// Annotator output is [top, left, bottom, right] on the 0-1000 grid.
inline BoundingBox from_box_2d(const std::array<double, 4>& tlbr) {
  return normalize_box({tlbr[1], tlbr[0], tlbr[3], tlbr[2]}, 1.0, 1.0, CoordinateSpace::permille);
}

}  // namespace sieves
