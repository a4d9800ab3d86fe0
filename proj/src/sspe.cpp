#include "spl/sspe.hpp"

#include <cmath>
#include <stdexcept>

#include "spl/init.hpp"

namespace spl {

namespace {

Tensor activate(const Tensor& x, Activation act) {
  switch (act) {
    case Activation::Gelu:
      return gelu(x);
    case Activation::Relu:
      return relu(x);
    case Activation::Identity:
      return x;
  }
  throw std::logic_error("unknown activation");
}

}  // namespace

Mlp Mlp::create(const std::string& prefix, int in, int hidden, int out,
                Activation act, Rng& rng) {
  Mlp m;
  m.w1 = xavier_param(prefix + ".w1", in, hidden, rng);
  m.b1 = zeros_param(prefix + ".b1", {hidden});
  m.w2 = xavier_param(prefix + ".w2", hidden, out, rng);
  m.b2 = zeros_param(prefix + ".b2", {out});
  m.activation = act;
  return m;
}

Tensor Mlp::forward(const Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != w1.tensor.dim(0))
    throw std::invalid_argument("mlp: input " + shape_str(x.shape()) +
                                " does not match weight " +
                                shape_str(w1.tensor.shape()));
  auto h = activate(add(matmul(x, w1.tensor), b1.tensor), activation);
  return add(matmul(h, w2.tensor), b2.tensor);
}

void Mlp::collect(std::vector<Parameter>& params) const {
  params.push_back(w1);
  params.push_back(b1);
  params.push_back(w2);
  params.push_back(b2);
}

MaskedAttentionPool MaskedAttentionPool::create(const std::string& prefix,
                                                int d, Rng& rng) {
  MaskedAttentionPool pool;
  pool.query = xavier_param(prefix + ".query", 1, d, rng);
  pool.wk = xavier_param(prefix + ".wk", d, d, rng);
  pool.wv = xavier_param(prefix + ".wv", d, d, rng);
  return pool;
}

Tensor MaskedAttentionPool::forward(const Tensor& tokens,
                                    const std::vector<uint8_t>& roi_mask) const {
  const int64_t n = tokens.dim(0);
  const int64_t d = tokens.dim(1);
  if (static_cast<int64_t>(roi_mask.size()) != n)
    throw std::invalid_argument("masked attention: mask has " +
                                std::to_string(roi_mask.size()) +
                                " entries for " + std::to_string(n) + " tokens");
  bool any = false;
  std::vector<uint8_t> fill(roi_mask.size());
  for (size_t i = 0; i < roi_mask.size(); ++i) {
    fill[i] = roi_mask[i] ? 0 : 1;
    any = any || roi_mask[i];
  }
  if (!any) throw std::invalid_argument("masked attention: degenerate RoI (all tokens masked out)");

  auto keys = matmul(tokens, wk.tensor);                  // [n, d]
  auto vals = matmul(tokens, wv.tensor);                  // [n, d]
  auto scores = scale(matmul(query.tensor, transpose(keys)), 1.0 / std::sqrt(static_cast<double>(d)));
  // Masked-out keys get a score low enough to underflow to weight 0.
  auto masked = masked_fill(scores, fill, -1e30);          // [1, n]
  return matmul(softmax(masked), vals);                    // [1, d]
}

void MaskedAttentionPool::collect(std::vector<Parameter>& params) const {
  params.push_back(query);
  params.push_back(wk);
  params.push_back(wv);
}

PromptEncoder PromptEncoder::create(int bins, int d, Rng& rng) {
  PromptEncoder enc;
  enc.bins = bins;
  enc.d = d;
  enc.spectral_encoder = Mlp::create("prompt.spectral", bins, d, d, Activation::Gelu, rng);
  enc.spatial = MaskedAttentionPool::create("prompt.spatial", d, rng);
  enc.f_align = Mlp::create("prompt.f_align", d, d, d, Activation::Gelu, rng);
  enc.v_align = Mlp::create("prompt.v_align", d, d, d, Activation::Gelu, rng);
  return enc;
}

Tensor PromptEncoder::encode_spectral(const Tensor& spectrum) const {
  if (spectrum.rank() != 2 || spectrum.dim(1) != bins)
    throw std::invalid_argument("spectral encoder: expected [1," +
                                std::to_string(bins) + "] spectrum, got " +
                                shape_str(spectrum.shape()));
  return spectral_encoder.forward(spectrum);
}

Tensor PromptEncoder::encode_spatial(const Tensor& prompt_tokens,
                                     const std::vector<uint8_t>& roi_mask) const {
  return spatial.forward(prompt_tokens, roi_mask);
}

Tensor PromptEncoder::fuse(const Tensor& z_spatial, const Tensor& z_freq) const {
  if (z_spatial.dim(-1) != d || z_freq.dim(-1) != d)
    throw std::invalid_argument("fuse: both codes must be " + std::to_string(d) +
                                "-dimensional");
  return add(f_align.forward(z_spatial), v_align.forward(z_freq));
}

Tensor PromptEncoder::encode(const Tensor& prompt_tokens,
                             const std::vector<uint8_t>& roi_mask,
                             const RadialSpectrum& spectrum) const {
  auto z_spatial = encode_spatial(prompt_tokens, roi_mask);
  if (!use_spectral) return f_align.forward(z_spatial);
  if (spectrum.bin_count() != bins)
    throw std::invalid_argument("prompt encoder: spectrum has " +
                                std::to_string(spectrum.bin_count()) +
                                " bins, expected " + std::to_string(bins));
  auto z_freq = encode_spectral(
      Tensor::from_vector({1, bins}, spectrum.bins, false));
  return fuse(z_spatial, z_freq);
}

void PromptEncoder::collect(std::vector<Parameter>& params) const {
  spectral_encoder.collect(params);
  spatial.collect(params);
  f_align.collect(params);
  v_align.collect(params);
}

}  // namespace spl
