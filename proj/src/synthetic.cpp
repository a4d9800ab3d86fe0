#include "spl/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace spl {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct RenderSpec {
  DefectFamily family;
  double cx, cy;         // pixel coordinates of the defect center (integers)
  int quarter_turns;     // exact part of the rotation
  double cos_r, sin_r;   // residual rotation in [0, 90) degrees
  double scale;
  double intensity;
  double cell = 1.5;     // checker cell size
  double freq = 2.0;     // dent modulation frequency
  std::vector<std::array<double, 4>> segments;  // crack polyline, canonical
};

// The rotation splits into exact quarter turns (coordinate swaps) plus a
// residual; two instances that differ by 90 degrees therefore produce
// bit-identical pixel fields under the corresponding index permutation.
RenderSpec make_render_spec(const SyntheticSpec& spec, double cx, double cy) {
  spec.validate();
  RenderSpec r;
  r.family = spec.defect_family;
  r.cx = cx;
  r.cy = cy;
  const int q = static_cast<int>(spec.rotation_deg / 90.0);
  r.quarter_turns = q % 4;
  const double residual = spec.rotation_deg - 90.0 * q;
  r.cos_r = std::cos(residual * kPi / 180.0);
  r.sin_r = std::sin(residual * kPi / 180.0);
  r.scale = spec.scale;
  r.intensity = spec.intensity;
  Rng shape_rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  r.cell = 1.3 + 0.4 * shape_rng.uniform01();
  r.freq = 1.8 + 0.5 * shape_rng.uniform01();
  if (spec.defect_family == DefectFamily::Crack) {
    double x = -8.0, y = 0.0, heading = 0.0;
    for (int s = 0; s < 6; ++s) {
      heading += shape_rng.uniform(-0.55, 0.55);
      const double nx = x + 2.8 * std::cos(heading);
      const double ny = y + 2.8 * std::sin(heading);
      r.segments.push_back({x, y, nx, ny});
      x = nx;
      y = ny;
    }
  }
  return r;
}

double segment_distance(double px, double py, const std::array<double, 4>& s) {
  const double vx = s[2] - s[0], vy = s[3] - s[1];
  const double wx = px - s[0], wy = py - s[1];
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? (wx * vx + wy * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = px - (s[0] + t * vx), dy = py - (s[1] + t * vy);
  return std::hypot(dx, dy);
}

// inside flag + intensity modulation (in [0, 1]) at canonical coordinates.
bool field_at(const RenderSpec& r, double xs, double ys, double* modulation) {
  *modulation = 1.0;
  switch (r.family) {
    case DefectFamily::Scratch:
      return std::fabs(xs) <= 9.0 && std::fabs(ys) <= 1.1;
    case DefectFamily::Spot: {
      const double ex = xs / 4.2, ey = ys / 2.8;
      return ex * ex + ey * ey <= 1.0;
    }
    case DefectFamily::Crack: {
      for (const auto& s : r.segments)
        if (segment_distance(xs, ys, s) <= 0.9) return true;
      return false;
    }
    case DefectFamily::Ring: {
      const double rad = std::hypot(xs, ys);
      return rad >= 3.4 && rad <= 4.8;
    }
    case DefectFamily::DentTexture: {
      if (std::hypot(xs, ys) > 4.6) return false;
      const double s = std::sin(r.freq * xs) * std::sin(r.freq * ys);
      *modulation = 0.35 + 0.65 * s * s;
      return true;
    }
    case DefectFamily::CheckerPatch: {
      if (std::fabs(xs) > 4.6 || std::fabs(ys) > 4.6) return false;
      const long long px = static_cast<long long>(std::floor(xs / r.cell));
      const long long py = static_cast<long long>(std::floor(ys / r.cell));
      *modulation = ((px + py) & 1) ? 1.0 : 0.15;
      return true;
    }
  }
  return false;
}

// Paints the defect over pixels and records its exact mask. Existing mask
// bits block painting so instances never overlap.
bool paint_instance(const RenderSpec& r, int size, std::vector<double>& pixels,
                    const std::vector<uint8_t>& occupied,
                    std::vector<uint8_t>& mask_out) {
  mask_out.assign(static_cast<size_t>(size) * size, 0);
  bool any = false;
  for (int row = 0; row < size; ++row)
    for (int col = 0; col < size; ++col) {
      double x = col + 0.5 - r.cx;
      double y = row + 0.5 - r.cy;
      for (int t = 0; t < r.quarter_turns; ++t) {
        const double nx = y;
        const double ny = -x;
        x = nx;
        y = ny;
      }
      const double xr = r.cos_r * x + r.sin_r * y;
      const double yr = -r.sin_r * x + r.cos_r * y;
      double modulation = 1.0;
      if (!field_at(r, xr / r.scale, yr / r.scale, &modulation)) continue;
      const size_t at = static_cast<size_t>(row) * size + col;
      if (occupied[at]) return false;  // overlap: caller retries
      pixels[at] = std::clamp(pixels[at] + r.intensity * modulation, 0.0, 1.0);
      mask_out[at] = 1;
      any = true;
    }
  return any;
}

void fill_background(std::vector<double>& pixels, int size, int background_id,
                     Rng& rng) {
  const double base = 0.42 + 0.06 * rng.uniform01();
  switch (background_id % 4) {
    case 0:
      std::fill(pixels.begin(), pixels.end(), base);
      break;
    case 1: {
      const double slope = rng.uniform(-0.12, 0.12);
      for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c)
          pixels[static_cast<size_t>(r) * size + c] =
              std::clamp(base + slope * (c / static_cast<double>(size) - 0.5), 0.0, 1.0);
      break;
    }
    case 2: {
      const double f1 = rng.uniform(1.0, 3.0), f2 = rng.uniform(1.0, 3.0);
      const double p1 = rng.uniform(0.0, 2 * kPi), p2 = rng.uniform(0.0, 2 * kPi);
      for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c)
          pixels[static_cast<size_t>(r) * size + c] = std::clamp(
              base + 0.05 * std::sin(2 * kPi * f1 * c / size + p1) +
                  0.05 * std::sin(2 * kPi * f2 * r / size + p2),
              0.0, 1.0);
      break;
    }
    default: {
      const double bx = rng.uniform(0.25, 0.75) * size;
      const double by = rng.uniform(0.25, 0.75) * size;
      const double sg = rng.uniform(0.25, 0.5) * size;
      for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) {
          const double d2 = (c - bx) * (c - bx) + (r - by) * (r - by);
          pixels[static_cast<size_t>(r) * size + c] =
              std::clamp(base + 0.09 * std::exp(-d2 / (2 * sg * sg)), 0.0, 1.0);
        }
      break;
    }
  }
}

}  // namespace

const char* family_name(DefectFamily family) {
  switch (family) {
    case DefectFamily::Scratch: return "scratch";
    case DefectFamily::Spot: return "spot";
    case DefectFamily::Crack: return "crack";
    case DefectFamily::Ring: return "ring";
    case DefectFamily::DentTexture: return "dent-texture";
    case DefectFamily::CheckerPatch: return "checker-patch";
  }
  return "unknown";
}

DefectFamily family_from_name(const std::string& name) {
  for (DefectFamily f : all_families())
    if (name == family_name(f)) return f;
  throw std::invalid_argument("unknown defect family '" + name + "'");
}

std::vector<DefectFamily> all_families() {
  return {DefectFamily::Scratch, DefectFamily::Spot, DefectFamily::Crack,
          DefectFamily::Ring, DefectFamily::DentTexture,
          DefectFamily::CheckerPatch};
}

void SyntheticSpec::validate() const {
  if (!(rotation_deg >= 0.0 && rotation_deg < 360.0))
    throw std::invalid_argument("spec: rotation must lie in [0, 360)");
  if (!(scale >= 0.25 && scale <= 2.0))
    throw std::invalid_argument("spec: scale must lie in [0.25, 2.0]");
}

SampleImage render_exemplar(const SyntheticSpec& spec, int size,
                            double background) {
  SampleImage img;
  img.width = img.height = size;
  img.pixels.assign(static_cast<size_t>(size) * size, background);
  const auto r = make_render_spec(spec, size / 2, size / 2);
  std::vector<uint8_t> occupied(img.pixels.size(), 0);
  std::vector<uint8_t> mask;
  if (!paint_instance(r, size, img.pixels, occupied, mask))
    throw std::runtime_error("render_exemplar: defect fell outside the canvas");
  auto found = masks_to_instances(mask, size, size, 0);
  if (found.empty())
    throw std::runtime_error("render_exemplar: defect below the size filter");
  // Keep the largest component as the instance.
  size_t best = 0;
  for (size_t i = 1; i < found.size(); ++i)
    if (found[i].positive_pixels() > found[best].positive_pixels()) best = i;
  img.instances.push_back(std::move(found[best]));
  return img;
}

Dataset generate_dataset(const GenConfig& cfg) {
  if (cfg.n_images < 1) throw std::invalid_argument("gen: n_images must be >= 1");
  if (cfg.image_size < 16)
    throw std::invalid_argument("gen: image size too small");
  if (cfg.classes.empty()) throw std::invalid_argument("gen: no classes");

  Dataset ds;
  ds.image_size = cfg.image_size;
  for (DefectFamily f : cfg.classes) ds.category_names.push_back(family_name(f));

  Rng master(cfg.seed);
  const int n_classes = static_cast<int>(cfg.classes.size());
  for (int i = 0; i < cfg.n_images; ++i) {
    Rng rng(master.next_u64());
    SampleImage img;
    img.id = i;
    img.width = img.height = cfg.image_size;
    img.pixels.assign(static_cast<size_t>(cfg.image_size) * cfg.image_size, 0.0);
    char name[32];
    std::snprintf(name, sizeof(name), "img_%06d.pgm", i);
    img.file_name = name;

    const int background_id = static_cast<int>(rng.uniform_int(0, 3));
    fill_background(img.pixels, cfg.image_size, background_id, rng);

    // Most images are single-class; a fraction mixes two classes so the
    // single-label prompt rule has something to filter.
    const int primary = static_cast<int>(rng.uniform_int(0, n_classes - 1));
    int secondary = primary;
    if (n_classes > 1 && rng.uniform01() < cfg.multi_class_fraction)
      while (secondary == primary)
        secondary = static_cast<int>(rng.uniform_int(0, n_classes - 1));

    const int want = 1 + static_cast<int>(rng.uniform_int(0, 2));
    std::vector<uint8_t> occupied(img.pixels.size(), 0);
    const double margin = 14.0;
    for (int inst = 0; inst < want; ++inst) {
      const int cls = (inst == 0) ? primary : (rng.bernoulli(0.5) ? primary : secondary);
      bool placed = false;
      for (int attempt = 0; attempt < 30 && !placed; ++attempt) {
        SyntheticSpec spec;
        spec.defect_family = cfg.classes[static_cast<size_t>(cls)];
        spec.rotation_deg = rng.uniform(0.0, 360.0);
        spec.scale = rng.uniform(0.8, 1.4);
        spec.intensity = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.28, 0.45);
        spec.background_id = background_id;
        spec.seed = rng.next_u64();
        const double cx = std::floor(rng.uniform(margin, cfg.image_size - margin));
        const double cy = std::floor(rng.uniform(margin, cfg.image_size - margin));
        auto render = make_render_spec(spec, cx, cy);
        std::vector<double> backup = img.pixels;
        std::vector<uint8_t> mask;
        if (!paint_instance(render, cfg.image_size, img.pixels, occupied, mask)) {
          img.pixels = std::move(backup);
          continue;
        }
        auto found = masks_to_instances(mask, cfg.image_size, cfg.image_size, cls);
        if (found.empty()) {
          img.pixels = std::move(backup);
          continue;
        }
        size_t best = 0;
        for (size_t f = 1; f < found.size(); ++f)
          if (found[f].positive_pixels() > found[best].positive_pixels()) best = f;
        // Stray satellite pixels outside the main component are erased so
        // the stored mask reproduces the painted defect exactly.
        for (size_t px = 0; px < mask.size(); ++px)
          if (mask[px] && !found[best].mask[px]) img.pixels[px] = backup[px];
        for (size_t px = 0; px < mask.size(); ++px)
          if (found[best].mask[px]) occupied[px] = 1;
        img.instances.push_back(std::move(found[best]));
        placed = true;
      }
    }
    if (img.instances.empty()) {
      // Guarantee at least one instance per image.
      --i;
      continue;
    }
    img.id = static_cast<int>(ds.images.size());
    std::snprintf(name, sizeof(name), "img_%06d.pgm", img.id);
    img.file_name = name;
    ds.images.push_back(std::move(img));
    if (static_cast<int>(ds.images.size()) == cfg.n_images) break;
  }
  return ds;
}

void AugmentConfig::validate() const {
  if (!(contrast_lo <= contrast_hi && brightness_lo <= brightness_hi))
    throw std::invalid_argument("augment: empty ranges");
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0))
    throw std::invalid_argument("augment: flip probability outside [0, 1]");
}

AugmentDraw augment_image(SampleImage& image, const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  AugmentDraw draw;
  draw.flipped = rng.bernoulli(cfg.flip_prob);
  draw.contrast = rng.uniform(cfg.contrast_lo, cfg.contrast_hi);
  draw.brightness = rng.uniform(cfg.brightness_lo, cfg.brightness_hi);

  const int w = image.width, h = image.height;
  if (draw.flipped) {
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w / 2; ++c)
        std::swap(image.pixels[static_cast<size_t>(r) * w + c],
                  image.pixels[static_cast<size_t>(r) * w + (w - 1 - c)]);
    for (InstanceAnnotation& inst : image.instances) {
      for (int r = 0; r < h; ++r)
        for (int c = 0; c < w / 2; ++c)
          std::swap(inst.mask[static_cast<size_t>(r) * w + c],
                    inst.mask[static_cast<size_t>(r) * w + (w - 1 - c)]);
      inst.bbox.cx = 1.0 - inst.bbox.cx;
    }
  }
  for (double& p : image.pixels)
    p = std::clamp(((p - 0.5) * draw.contrast + 0.5) * draw.brightness, 0.0, 1.0);
  return draw;
}

}  // namespace spl
