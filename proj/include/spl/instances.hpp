#pragma once

#include <cstdint>
#include <vector>

#include "spl/geometry.hpp"

namespace spl {

// One annotated defect instance: a binary mask at image resolution plus the
// tight bounding box of that mask.
struct InstanceAnnotation {
  BBox bbox;                  // normalized center format
  std::vector<uint8_t> mask;  // height*width, row-major, 0/1
  int class_id = -1;

  int64_t positive_pixels() const {
    int64_t n = 0;
    for (uint8_t v : mask) n += v != 0;
    return n;
  }
};

// Tight box of a mask's positive pixels, normalized against the image.
BBox tight_box(const std::vector<uint8_t>& mask, int width, int height);

// Extracts instances from one binary defect map using 8-connected component
// labeling. Components whose pixel width or height is smaller than 1% of the
// image width or height are discarded. An empty map yields an empty list.
std::vector<InstanceAnnotation> masks_to_instances(
    const std::vector<uint8_t>& defect_map, int width, int height,
    int class_id = 0);

}  // namespace spl
