#pragma once

#include <cstdint>
#include <vector>

namespace spl {

// Axis-aligned box in normalized center format; all coordinates in [0, 1].
struct BBox {
  double cx = 0, cy = 0, w = 0, h = 0;
};

struct Corners {
  double x0, y0, x1, y1;
};

Corners to_corners(const BBox& b);
BBox from_corners(double x0, double y0, double x1, double y1);
BBox clamp_unit(const BBox& b);
double box_area(const BBox& b);
void validate_box(const BBox& b);  // throws on non-positive extents

double box_iou(const BBox& a, const BBox& b);
// IoU - (hull - union) / hull, in (-1, 1]. Throws on a zero-area box.
double giou(const BBox& a, const BBox& b);

// Pixel-space conversions for an image of the given extents.
// Pixel boxes are [x, y, w, h] with x/y the top-left corner.
std::vector<double> to_pixel_xywh(const BBox& b, int width, int height);
BBox from_pixel_xywh(double x, double y, double w, double h, int width,
                     int height);

}  // namespace spl
