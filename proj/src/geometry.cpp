#include "spl/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace spl {

Corners to_corners(const BBox& b) {
  return {b.cx - b.w / 2, b.cy - b.h / 2, b.cx + b.w / 2, b.cy + b.h / 2};
}

BBox from_corners(double x0, double y0, double x1, double y1) {
  return {(x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0};
}

BBox clamp_unit(const BBox& b) {
  Corners c = to_corners(b);
  c.x0 = std::clamp(c.x0, 0.0, 1.0);
  c.y0 = std::clamp(c.y0, 0.0, 1.0);
  c.x1 = std::clamp(c.x1, 0.0, 1.0);
  c.y1 = std::clamp(c.y1, 0.0, 1.0);
  return from_corners(c.x0, c.y0, c.x1, c.y1);
}

double box_area(const BBox& b) { return b.w * b.h; }

void validate_box(const BBox& b) {
  if (!(b.w > 0.0) || !(b.h > 0.0))
    throw std::invalid_argument("box: degenerate extents (w, h must be > 0)");
  if (!std::isfinite(b.cx) || !std::isfinite(b.cy) || !std::isfinite(b.w) ||
      !std::isfinite(b.h))
    throw std::invalid_argument("box: non-finite coordinates");
}

double box_iou(const BBox& a, const BBox& b) {
  const Corners ca = to_corners(a), cb = to_corners(b);
  const double iw = std::max(0.0, std::min(ca.x1, cb.x1) - std::max(ca.x0, cb.x0));
  const double ih = std::max(0.0, std::min(ca.y1, cb.y1) - std::max(ca.y0, cb.y0));
  const double inter = iw * ih;
  const double uni = box_area(a) + box_area(b) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double giou(const BBox& a, const BBox& b) {
  validate_box(a);
  validate_box(b);
  const Corners ca = to_corners(a), cb = to_corners(b);
  const double iw = std::max(0.0, std::min(ca.x1, cb.x1) - std::max(ca.x0, cb.x0));
  const double ih = std::max(0.0, std::min(ca.y1, cb.y1) - std::max(ca.y0, cb.y0));
  const double inter = iw * ih;
  const double uni = box_area(a) + box_area(b) - inter;
  const double hw = std::max(ca.x1, cb.x1) - std::min(ca.x0, cb.x0);
  const double hh = std::max(ca.y1, cb.y1) - std::min(ca.y0, cb.y0);
  const double hull = hw * hh;
  return inter / uni - (hull - uni) / hull;
}

std::vector<double> to_pixel_xywh(const BBox& b, int width, int height) {
  const Corners c = to_corners(b);
  return {c.x0 * width, c.y0 * height, (c.x1 - c.x0) * width,
          (c.y1 - c.y0) * height};
}

BBox from_pixel_xywh(double x, double y, double w, double h, int width,
                     int height) {
  return {(x + w / 2) / width, (y + h / 2) / height, w / width, h / height};
}

}  // namespace spl
