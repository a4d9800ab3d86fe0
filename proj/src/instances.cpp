#include "spl/instances.hpp"

#include <stdexcept>

namespace spl {

BBox tight_box(const std::vector<uint8_t>& mask, int width, int height) {
  int min_r = height, max_r = -1, min_c = width, max_c = -1;
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c)
      if (mask[static_cast<size_t>(r) * width + c]) {
        min_r = std::min(min_r, r);
        max_r = std::max(max_r, r);
        min_c = std::min(min_c, c);
        max_c = std::max(max_c, c);
      }
  if (max_r < 0) throw std::invalid_argument("tight_box: empty mask");
  return from_pixel_xywh(min_c, min_r, max_c - min_c + 1, max_r - min_r + 1,
                         width, height);
}

std::vector<InstanceAnnotation> masks_to_instances(
    const std::vector<uint8_t>& defect_map, int width, int height,
    int class_id) {
  if (defect_map.size() != static_cast<size_t>(width) * height)
    throw std::invalid_argument("masks_to_instances: map size mismatch");

  std::vector<int32_t> label(defect_map.size(), 0);
  std::vector<InstanceAnnotation> instances;
  std::vector<int64_t> stack;
  int32_t next_label = 0;

  for (int64_t start = 0; start < static_cast<int64_t>(defect_map.size()); ++start) {
    if (!defect_map[start] || label[start]) continue;
    ++next_label;
    stack.assign(1, start);
    label[start] = next_label;
    InstanceAnnotation inst;
    inst.class_id = class_id;
    inst.mask.assign(defect_map.size(), 0);
    int min_r = height, max_r = -1, min_c = width, max_c = -1;
    while (!stack.empty()) {
      const int64_t cur = stack.back();
      stack.pop_back();
      const int r = static_cast<int>(cur / width);
      const int c = static_cast<int>(cur % width);
      inst.mask[cur] = 1;
      min_r = std::min(min_r, r);
      max_r = std::max(max_r, r);
      min_c = std::min(min_c, c);
      max_c = std::max(max_c, c);
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          if (!dr && !dc) continue;
          const int nr = r + dr, nc = c + dc;
          if (nr < 0 || nr >= height || nc < 0 || nc >= width) continue;
          const int64_t ni = static_cast<int64_t>(nr) * width + nc;
          if (defect_map[ni] && !label[ni]) {
            label[ni] = next_label;
            stack.push_back(ni);
          }
        }
    }
    const int comp_w = max_c - min_c + 1;
    const int comp_h = max_r - min_r + 1;
    if (comp_w < 0.01 * width || comp_h < 0.01 * height) continue;
    inst.bbox = from_pixel_xywh(min_c, min_r, comp_w, comp_h, width, height);
    instances.push_back(std::move(inst));
  }
  return instances;
}

}  // namespace spl
