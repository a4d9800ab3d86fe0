#pragma once

#include <string>
#include <vector>

#include "spl/rng.hpp"
#include "spl/spectral.hpp"
#include "spl/tensor.hpp"

namespace spl {

enum class Activation { Gelu, Relu, Identity };

// Two-layer perceptron in -> hidden -> out.
struct Mlp {
  Parameter w1, b1, w2, b2;
  Activation activation = Activation::Gelu;

  static Mlp create(const std::string& prefix, int in, int hidden, int out,
                    Activation act, Rng& rng);
  Tensor forward(const Tensor& x) const;  // x: [n, in]
  void collect(std::vector<Parameter>& params) const;
};

// A learned query attends over prompt tokens; tokens outside the RoI are
// masked out before normalization, so they cannot contribute.
struct MaskedAttentionPool {
  Parameter query;  // [1, d]
  Parameter wk, wv;  // [d, d]

  static MaskedAttentionPool create(const std::string& prefix, int d, Rng& rng);
  // roi_mask has one entry per token row; true marks an RoI token. Throws a
  // "degenerate RoI" error when no entry is true.
  Tensor forward(const Tensor& tokens, const std::vector<uint8_t>& roi_mask) const;
  void collect(std::vector<Parameter>& params) const;
};

// The fused spatial+spectral embedding of one exemplar region.
struct PromptEmbedding {
  std::vector<double> vector;
  int class_label = -1;
  std::string source_id;
};

// Dual-path prompt encoder: a spectral code from the radial spectrum and a
// spatial code from masked attention, fused by two aligner perceptrons.
struct PromptEncoder {
  int bins = 256;
  int d = 32;
  bool use_spectral = true;  // off = spatial path only

  Mlp spectral_encoder;  // bins -> d -> d
  MaskedAttentionPool spatial;
  Mlp f_align, v_align;  // d -> d -> d

  static PromptEncoder create(int bins, int d, Rng& rng);

  // Spectral code z_freq for one spectrum ([1, bins] expected).
  Tensor encode_spectral(const Tensor& spectrum) const;
  // Spatial code z_spatial from prompt tokens plus RoI mask.
  Tensor encode_spatial(const Tensor& prompt_tokens,
                        const std::vector<uint8_t>& roi_mask) const;
  // e = f_align(z_spatial) + v_align(z_freq).
  Tensor fuse(const Tensor& z_spatial, const Tensor& z_freq) const;
  // Full path; honors use_spectral.
  Tensor encode(const Tensor& prompt_tokens, const std::vector<uint8_t>& roi_mask,
                const RadialSpectrum& spectrum) const;

  void collect(std::vector<Parameter>& params) const;
};

}  // namespace spl
