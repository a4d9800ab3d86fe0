#pragma once

#include <string>
#include <utility>
#include <vector>

#include "spl/cpe.hpp"
#include "spl/geometry.hpp"
#include "spl/instances.hpp"
#include "spl/pqs.hpp"
#include "spl/sspe.hpp"
#include "spl/tensor.hpp"

namespace spl {

struct LossWeights {
  double cls = 4.0;
  double l1 = 5.0;
  double giou = 2.0;
  double bce = 5.0;
  double dice = 5.0;
  double cpe = 1.0;

  void validate() const;  // all weights >= 0
};

struct ModelConfig {
  int image_size = 64;
  int patch = 8;
  int d = 32;
  int encoder_blocks = 2;
  int decoder_layers = 3;
  int queries = 16;        // k
  int spectrum_bins = 256; // J
  int mask_stride = 4;     // mask head resolution = image / stride
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  double tau = 1.0;
  CpeConfig cpe;
  LossWeights weights;
  bool use_sspe = true;
  bool use_cpe = true;
  bool use_pqs = true;
  bool prototype_grad = true;
  bool leave_one_out = false;
  bool mask_multiply = false;

  int grid() const { return image_size / patch; }
  int mask_size() const { return image_size / mask_stride; }
  void validate() const;
};

// 2-D sinusoidal position table for a gh x gw token grid, [gh*gw, d].
Tensor sinusoidal_positions(int grid_h, int grid_w, int d);

struct EncoderBlock {
  Parameter ln1_g, ln1_b;
  Parameter wq, wk, wv, wo;
  Parameter ln2_g, ln2_b;
  Parameter mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

// Patch projection + positions + pre-norm residual self-attention blocks.
struct VisionEncoder {
  int patch = 8;
  int d = 32;
  Parameter proj_w, proj_b;  // [P*P, d], [d]
  std::vector<EncoderBlock> blocks;

  static VisionEncoder create(int patch, int d, int n_blocks, Rng& rng);
  // image is a flat [h*w] tensor; h and w must divide by the patch size.
  Tensor encode(const Tensor& image, int h, int w) const;
  void collect(std::vector<Parameter>& params) const;
};

// One cross-attention decoder layer; the output projection h is shared
// between the query and prototype branches.
struct DecoderLayer {
  Parameter wq, wk, wv;
  Parameter h_w, h_b;

  static DecoderLayer create(const std::string& prefix, int d, Rng& rng);
  Tensor apply(const Tensor& x, const Tensor& keys, const Tensor& vals) const;
  void collect(std::vector<Parameter>& params) const;
};

struct DecodedLayer {
  Tensor queries;     // [k, d]
  Tensor prototypes;  // [C, d]
};

struct BoxHead {
  Parameter w1, b1, w2, b2, w3, b3;  // d -> d -> d -> 4, sigmoid output
  static BoxHead create(int d, Rng& rng);
  Tensor forward(const Tensor& q) const;  // [k, 4] center boxes in (0,1)
  void collect(std::vector<Parameter>& params) const;
};

struct MaskHead {
  Parameter embed_w, embed_b;  // query embedding, d -> d
  Parameter pixel_w, pixel_b;  // token features -> pixel features, d -> d
  static MaskHead create(int d, Rng& rng);
  // tokens form a grid_h x grid_w grid; logits at mask_h x mask_w.
  Tensor forward(const Tensor& queries, const Tensor& tokens, int grid_h,
                 int grid_w, int mask_h, int mask_w) const;  // [k, mask_h*mask_w]
  void collect(std::vector<Parameter>& params) const;
};

struct DetectionModel {
  ModelConfig cfg;
  VisionEncoder encoder;
  PromptEncoder prompt_encoder;
  std::vector<DecoderLayer> decoder;
  BoxHead box_head;
  MaskHead mask_head;
  Parameter static_queries;  // [k, d]; decoder input when PQS is disabled

  static DetectionModel create(const ModelConfig& cfg, uint64_t init_seed);
  std::vector<Parameter> parameters() const;
  // Cross-attention decode of queries and prototypes over the tokens,
  // retaining every layer's output for deep supervision.
  std::vector<DecodedLayer> decode(const Tensor& queries, const Tensor& protos,
                                   const Tensor& tokens) const;
};

// y[i][c] = p_hat_c . q_hat_i; plain dot products.
Tensor logits(const Tensor& decoded_protos, const Tensor& decoded_queries);

struct LayerPrediction {
  Tensor boxes;         // [k, 4]
  Tensor class_logits;  // [k, C]
  Tensor mask_logits;   // [k, mask_h*mask_w]
};

struct GroundTruthInstance {
  BBox box;
  int class_index = 0;            // position within the prompted class list
  std::vector<double> mask;       // mask_h*mask_w, values 0/1
};

struct LayerTerms {
  double cls = 0, l1 = 0, giou = 0, bce = 0, dice = 0;  // unweighted values
};

struct TotalLossResult {
  Tensor loss;                        // scalar
  std::vector<double> layer_values;   // weighted per-layer sums
  std::vector<LayerTerms> layer_terms;
  double cpe_value = 0.0;
  std::vector<std::vector<std::pair<int, int>>> assignments;  // per layer
};

// Deep-supervised set-prediction objective. Matching runs per layer with the
// same weighted cost; unmatched queries are supervised as background in the
// focal term. cpe_term, when given, joins the total with weight weights.cpe.
TotalLossResult total_loss(const std::vector<LayerPrediction>& layers,
                           const std::vector<GroundTruthInstance>& gt,
                           const Tensor* cpe_term, const LossWeights& weights,
                           double focal_gamma, double focal_alpha);

struct Detection {
  BBox box;                   // normalized, clamped to the unit square
  int class_index = -1;       // into the prototype order
  double score = 0.0;         // sigmoid of the top class logit
  std::vector<uint8_t> mask;  // image-resolution binary mask
};

// Full inference path: encode, prompt-guided selection, decode, heads,
// score thresholding, mask binarization at probability 0.5. Prototypes come
// from the offline extraction; an empty set is rejected.
std::vector<Detection> predict(const DetectionModel& model,
                               const std::vector<double>& image, int h, int w,
                               const std::vector<ClassPrototype>& prototypes,
                               double score_threshold);

}  // namespace spl
