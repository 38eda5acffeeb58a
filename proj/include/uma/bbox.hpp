#pragma once

#include <algorithm>

namespace uma {

/// Axis-aligned box, top-left corner plus size, in 0-based pixel coordinates.
struct BBox {
  double x = 0, y = 0, w = 1, h = 1;

  double cx() const { return x + 0.5 * w; }
  double cy() const { return y + 0.5 * h; }
  double right() const { return x + w; }
  double bottom() const { return y + h; }
  double area() const { return w * h; }

  static BBox from_center(double cx, double cy, double w, double h) { return {cx - 0.5 * w, cy - 0.5 * h, w, h}; }

  friend bool operator==(const BBox&, const BBox&) = default;
};

inline double intersection_area(const BBox& a, const BBox& b) {
  const double iw = std::min(a.right(), b.right()) - std::max(a.x, b.x);
  const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
  return iw > 0 && ih > 0 ? iw * ih : 0.0;
}

inline double iou(const BBox& a, const BBox& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

}  // namespace uma
