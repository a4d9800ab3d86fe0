#include "spl/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "spl/kernels.hpp"

namespace spl {

void ImagePatch::validate() const {
  if (height < 2 || width < 2)
    throw std::invalid_argument("patch: extents must be at least 2x2, got " +
                                std::to_string(height) + "x" +
                                std::to_string(width));
  if (pixels.size() != static_cast<size_t>(height) * width)
    throw std::invalid_argument("patch: pixel count does not match extents");
  for (double p : pixels)
    if (!(p >= 0.0 && p <= 1.0))
      throw std::invalid_argument("patch: intensity outside [0, 1]");
}

std::vector<double> dft2_magnitude(const ImagePatch& patch) {
  patch.validate();
  std::vector<double> out(patch.pixels.size());
  kernels::dft2_magnitude_centered(patch.pixels.data(), patch.height,
                                   patch.width, out.data());
  return out;
}

RadialSpectrum radial_bin(const std::vector<double>& magnitude, int height,
                          int width, int bin_count) {
  if (bin_count < 1) throw std::invalid_argument("radial_bin: bin count must be >= 1");
  if (height < 1 || width < 1 ||
      magnitude.size() != static_cast<size_t>(height) * width)
    throw std::invalid_argument("radial_bin: empty or mismatched grid");

  const int cy = height / 2;
  const int cx = width / 2;
  double max_radius = 0.0;
  for (int u = 0; u < height; ++u)
    for (int v = 0; v < width; ++v) {
      const double r = std::hypot(u - cy, v - cx);
      max_radius = std::max(max_radius, r);
    }

  std::vector<double> sums(static_cast<size_t>(bin_count), 0.0);
  std::vector<int64_t> counts(static_cast<size_t>(bin_count), 0);
  for (int u = 0; u < height; ++u)
    for (int v = 0; v < width; ++v) {
      const double r = std::hypot(u - cy, v - cx);
      const double rnorm = max_radius > 0.0 ? r / max_radius : 0.0;
      int j = static_cast<int>(rnorm * bin_count);
      j = std::min(j, bin_count - 1);  // last bin closed at 1
      sums[static_cast<size_t>(j)] += magnitude[static_cast<size_t>(u) * width + v];
      counts[static_cast<size_t>(j)] += 1;
    }

  RadialSpectrum spectrum;
  spectrum.bins.resize(static_cast<size_t>(bin_count));
  for (int j = 0; j < bin_count; ++j)
    spectrum.bins[j] = counts[j] > 0 ? sums[j] / static_cast<double>(counts[j]) : 0.0;

  double norm = 0.0;
  for (double b : spectrum.bins) norm += b * b;
  norm = std::sqrt(norm);
  if (norm < 1e-12) {
    spectrum.degenerate = true;
    std::fill(spectrum.bins.begin(), spectrum.bins.end(), 0.0);
  } else {
    for (double& b : spectrum.bins) b /= norm;
  }
  return spectrum;
}

ImagePatch resize_bilinear(const ImagePatch& patch, int out_h, int out_w) {
  patch.validate();
  if (out_h < 1 || out_w < 1)
    throw std::invalid_argument("resize: output extents must be positive");
  ImagePatch out;
  out.height = out_h;
  out.width = out_w;
  out.pixels.resize(static_cast<size_t>(out_h) * out_w);
  for (int oy = 0; oy < out_h; ++oy) {
    double sy = (oy + 0.5) * patch.height / out_h - 0.5;
    sy = std::clamp(sy, 0.0, static_cast<double>(patch.height - 1));
    const int y0 = static_cast<int>(sy);
    const int y1 = std::min(y0 + 1, patch.height - 1);
    const double fy = sy - y0;
    for (int ox = 0; ox < out_w; ++ox) {
      double sx = (ox + 0.5) * patch.width / out_w - 0.5;
      sx = std::clamp(sx, 0.0, static_cast<double>(patch.width - 1));
      const int x0 = static_cast<int>(sx);
      const int x1 = std::min(x0 + 1, patch.width - 1);
      const double fx = sx - x0;
      const auto at = [&](int y, int x) {
        return patch.pixels[static_cast<size_t>(y) * patch.width + x];
      };
      out.pixels[static_cast<size_t>(oy) * out_w + ox] =
          (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) +
          fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
    }
  }
  return out;
}

ImagePatch rotate90(const ImagePatch& patch, int quarter_turns) {
  int q = quarter_turns % 4;
  if (q < 0) q += 4;
  ImagePatch cur = patch;
  for (int t = 0; t < q; ++t) {
    ImagePatch next;
    next.height = cur.width;
    next.width = cur.height;
    next.pixels.resize(cur.pixels.size());
    // (r, c) of the rotated image reads (H-1-c, r) of the source.
    for (int r = 0; r < next.height; ++r)
      for (int c = 0; c < next.width; ++c)
        next.pixels[static_cast<size_t>(r) * next.width + c] =
            cur.pixels[static_cast<size_t>(cur.height - 1 - c) * cur.width + r];
    cur = std::move(next);
  }
  return cur;
}

ImagePatch flip_horizontal(const ImagePatch& patch) {
  ImagePatch out = patch;
  for (int r = 0; r < patch.height; ++r)
    for (int c = 0; c < patch.width; ++c)
      out.pixels[static_cast<size_t>(r) * patch.width + c] =
          patch.pixels[static_cast<size_t>(r) * patch.width + (patch.width - 1 - c)];
  return out;
}

ImagePatch flip_vertical(const ImagePatch& patch) {
  ImagePatch out = patch;
  for (int r = 0; r < patch.height; ++r)
    for (int c = 0; c < patch.width; ++c)
      out.pixels[static_cast<size_t>(r) * patch.width + c] =
          patch.pixels[static_cast<size_t>(patch.height - 1 - r) * patch.width + c];
  return out;
}

RadialSpectrum prompt_spectrum(const ImagePatch& roi_crop, int bin_count,
                               int patch_size) {
  const ImagePatch sized = (roi_crop.height == patch_size &&
                            roi_crop.width == patch_size)
                               ? roi_crop
                               : resize_bilinear(roi_crop, patch_size, patch_size);
  return radial_bin(dft2_magnitude(sized), patch_size, patch_size, bin_count);
}

}  // namespace spl
