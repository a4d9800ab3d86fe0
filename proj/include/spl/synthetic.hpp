#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spl/instances.hpp"
#include "spl/rng.hpp"

namespace spl {

enum class DefectFamily {
  Scratch,
  Spot,
  Crack,
  Ring,
  DentTexture,
  CheckerPatch,
};

const char* family_name(DefectFamily family);
DefectFamily family_from_name(const std::string& name);  // throws on unknown
std::vector<DefectFamily> all_families();

// Parameters of one procedural defect instance.
struct SyntheticSpec {
  DefectFamily defect_family = DefectFamily::Spot;
  double rotation_deg = 0.0;  // [0, 360)
  double scale = 1.0;         // [0.25, 2.0]
  double intensity = 0.35;    // signed brightness delta
  int background_id = 0;
  uint64_t seed = 0;          // shapes the crack polyline and texture phase

  void validate() const;
};

struct SampleImage {
  int id = 0;
  int width = 0;
  int height = 0;
  std::vector<double> pixels;  // [0, 1], row-major
  std::vector<InstanceAnnotation> instances;
  std::string file_name;
};

struct Dataset {
  int image_size = 64;
  std::vector<std::string> category_names;  // index == class id
  std::vector<SampleImage> images;
};

struct GenConfig {
  std::vector<DefectFamily> classes = all_families();
  int n_images = 600;
  int image_size = 64;
  uint64_t seed = 42;
  // Fraction of images whose instances come from two classes instead of one.
  double multi_class_fraction = 0.2;
};

// Deterministic procedural benchmark: textured background plus 1-3
// non-overlapping defect instances with exact masks and tight boxes.
Dataset generate_dataset(const GenConfig& cfg);

// Renders a single centered instance on a flat background; used by the
// exemplar-level tests. Returns the image and the instance annotation.
SampleImage render_exemplar(const SyntheticSpec& spec, int size,
                            double background = 0.45);

// ---- training-time augmentation ------------------------------------------

struct AugmentConfig {
  double contrast_lo = 0.8;
  double contrast_hi = 1.1;
  double brightness_lo = 0.5;
  double brightness_hi = 1.3;
  double flip_prob = 0.5;

  void validate() const;
};

struct AugmentDraw {
  bool flipped = false;
  double contrast = 1.0;
  double brightness = 1.0;
};

// Horizontal flip + contrast + brightness jitter; boxes and masks follow the
// flip. The draw that was applied is returned for range checks.
AugmentDraw augment_image(SampleImage& image, const AugmentConfig& cfg, Rng& rng);

}  // namespace spl
