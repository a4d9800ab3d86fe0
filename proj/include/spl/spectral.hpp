#pragma once

#include <vector>

namespace spl {

// Grayscale patch with intensities in [0, 1], row-major.
struct ImagePatch {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;

  void validate() const;  // throws on bad extents or out-of-range intensities
};

// J-bin, L2-normalized, ring-averaged magnitude profile of a patch spectrum.
// Orientation-invariant by construction. degenerate is set for an all-zero
// patch, whose spectrum stays the zero vector.
struct RadialSpectrum {
  std::vector<double> bins;
  bool degenerate = false;

  int bin_count() const { return static_cast<int>(bins.size()); }
};

// Centered 2-D DFT magnitude grid of the patch (height x width, zero
// frequency at (h/2, w/2)).
std::vector<double> dft2_magnitude(const ImagePatch& patch);

// Ring-average the magnitude grid into bin_count equal-width radius bins.
// Cell radii are measured from the grid center and normalized by the largest
// radius; bin j covers [j/J, (j+1)/J) with the last bin closed. Empty rings
// contribute 0. The result is L2-normalized.
RadialSpectrum radial_bin(const std::vector<double>& magnitude, int height,
                          int width, int bin_count);

// Crop resize with bilinear sampling (half-pixel centers).
ImagePatch resize_bilinear(const ImagePatch& patch, int out_h, int out_w);

// Exact grid transforms (index permutations).
ImagePatch rotate90(const ImagePatch& patch, int quarter_turns);
ImagePatch flip_horizontal(const ImagePatch& patch);
ImagePatch flip_vertical(const ImagePatch& patch);

// Full descriptor path for one RoI crop: resize to patch_size x patch_size,
// DFT magnitude, radial binning.
RadialSpectrum prompt_spectrum(const ImagePatch& roi_crop, int bin_count,
                               int patch_size = 64);

inline double luma(double r, double g, double b) {
  return 0.299 * r + 0.587 * g + 0.114 * b;
}

}  // namespace spl
