#include "spl/detector.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "spl/hungarian.hpp"
#include "spl/init.hpp"

namespace spl {

namespace {
constexpr double kLogEps = 1e-12;

double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor column(const Tensor& m, int64_t col) {
  const int64_t rows = m.dim(0), cols = m.dim(1);
  std::vector<int64_t> idx(static_cast<size_t>(rows));
  for (int64_t r = 0; r < rows; ++r) idx[r] = r * cols + col;
  return gather_elements(m, std::move(idx), {rows});
}

// Differentiable GIoU of matched prediction rows against constant targets.
Tensor giou_vector(const Tensor& pred, const Tensor& target) {
  auto half = [](const Tensor& t) { return scale(t, 0.5); };
  auto pcx = column(pred, 0), pcy = column(pred, 1);
  auto pw = column(pred, 2), ph = column(pred, 3);
  auto gcx = column(target, 0), gcy = column(target, 1);
  auto gw = column(target, 2), gh = column(target, 3);
  auto px0 = sub(pcx, half(pw)), px1 = add(pcx, half(pw));
  auto py0 = sub(pcy, half(ph)), py1 = add(pcy, half(ph));
  auto gx0 = sub(gcx, half(gw)), gx1 = add(gcx, half(gw));
  auto gy0 = sub(gcy, half(gh)), gy1 = add(gcy, half(gh));
  auto iw = relu(sub(minimum(px1, gx1), maximum(px0, gx0)));
  auto ih = relu(sub(minimum(py1, gy1), maximum(py0, gy0)));
  auto inter = mul(iw, ih);
  auto uni = sub(add(mul(pw, ph), mul(gw, gh)), inter);
  auto hull = mul(sub(maximum(px1, gx1), minimum(px0, gx0)),
                  sub(maximum(py1, gy1), minimum(py0, gy0)));
  return sub(div(inter, uni), div(sub(hull, uni), hull));
}

}  // namespace

void LossWeights::validate() const {
  for (double w : {cls, l1, giou, bce, dice, cpe})
    if (w < 0.0) throw std::invalid_argument("loss weights must be >= 0");
}

void ModelConfig::validate() const {
  if (image_size < patch || image_size % patch != 0)
    throw std::invalid_argument("config: image size must divide by the patch size");
  if (d % 4 != 0)
    throw std::invalid_argument("config: hidden size must divide by 4");
  if (image_size % mask_stride != 0)
    throw std::invalid_argument("config: image size must divide by the mask stride");
  if (queries < 1 || queries > grid() * grid())
    throw std::invalid_argument("config: queries must lie in [1, token count]");
  if (spectrum_bins < 1) throw std::invalid_argument("config: bins must be >= 1");
  if (!(tau > 0.0)) throw std::invalid_argument("config: tau must be > 0");
  cpe.validate();
  weights.validate();
}

Tensor sinusoidal_positions(int grid_h, int grid_w, int d) {
  const int half = d / 2;
  std::vector<double> pos(static_cast<size_t>(grid_h) * grid_w * d);
  for (int gy = 0; gy < grid_h; ++gy)
    for (int gx = 0; gx < grid_w; ++gx) {
      double* row = pos.data() + (static_cast<size_t>(gy) * grid_w + gx) * d;
      for (int i = 0; i < half / 2; ++i) {
        const double omega = std::pow(10000.0, -2.0 * i / half);
        row[2 * i] = std::sin(gy * omega);
        row[2 * i + 1] = std::cos(gy * omega);
        row[half + 2 * i] = std::sin(gx * omega);
        row[half + 2 * i + 1] = std::cos(gx * omega);
      }
    }
  return Tensor::from_vector({static_cast<int64_t>(grid_h) * grid_w, d},
                             std::move(pos));
}

VisionEncoder VisionEncoder::create(int patch, int d, int n_blocks, Rng& rng) {
  VisionEncoder enc;
  enc.patch = patch;
  enc.d = d;
  enc.proj_w = xavier_param("enc.proj_w", patch * patch, d, rng);
  enc.proj_b = zeros_param("enc.proj_b", {d});
  for (int b = 0; b < n_blocks; ++b) {
    const std::string p = "enc.block" + std::to_string(b);
    EncoderBlock blk;
    blk.ln1_g = ones_param(p + ".ln1_g", {d});
    blk.ln1_b = zeros_param(p + ".ln1_b", {d});
    blk.wq = xavier_param(p + ".wq", d, d, rng);
    blk.wk = xavier_param(p + ".wk", d, d, rng);
    blk.wv = xavier_param(p + ".wv", d, d, rng);
    blk.wo = xavier_param(p + ".wo", d, d, rng);
    blk.ln2_g = ones_param(p + ".ln2_g", {d});
    blk.ln2_b = zeros_param(p + ".ln2_b", {d});
    blk.mlp_w1 = xavier_param(p + ".mlp_w1", d, 2 * d, rng);
    blk.mlp_b1 = zeros_param(p + ".mlp_b1", {2 * d});
    blk.mlp_w2 = xavier_param(p + ".mlp_w2", 2 * d, d, rng);
    blk.mlp_b2 = zeros_param(p + ".mlp_b2", {d});
    enc.blocks.push_back(std::move(blk));
  }
  return enc;
}

Tensor VisionEncoder::encode(const Tensor& image, int h, int w) const {
  if (h % patch != 0 || w % patch != 0)
    throw std::invalid_argument("encode_image: " + std::to_string(h) + "x" +
                                std::to_string(w) +
                                " does not divide by patch size " +
                                std::to_string(patch));
  if (image.size() != static_cast<int64_t>(h) * w)
    throw std::invalid_argument("encode_image: pixel count mismatch");
  const int gh = h / patch, gw = w / patch;
  const int64_t n_tokens = static_cast<int64_t>(gh) * gw;

  std::vector<int64_t> idx(static_cast<size_t>(n_tokens) * patch * patch);
  size_t at = 0;
  for (int ty = 0; ty < gh; ++ty)
    for (int tx = 0; tx < gw; ++tx)
      for (int py = 0; py < patch; ++py)
        for (int px = 0; px < patch; ++px)
          idx[at++] = static_cast<int64_t>(ty * patch + py) * w + tx * patch + px;
  auto patches = gather_elements(image, std::move(idx),
                                 {n_tokens, static_cast<int64_t>(patch) * patch});
  auto x = add(add(matmul(patches, proj_w.tensor), proj_b.tensor),
               sinusoidal_positions(gh, gw, d));

  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  for (const EncoderBlock& blk : blocks) {
    auto a = layer_norm(x, blk.ln1_g.tensor, blk.ln1_b.tensor);
    auto q = matmul(a, blk.wq.tensor);
    auto k = matmul(a, blk.wk.tensor);
    auto v = matmul(a, blk.wv.tensor);
    auto attn = softmax(scale(matmul(q, transpose(k)), inv_sqrt_d));
    x = add(x, matmul(matmul(attn, v), blk.wo.tensor));
    auto m = layer_norm(x, blk.ln2_g.tensor, blk.ln2_b.tensor);
    auto hmid = gelu(add(matmul(m, blk.mlp_w1.tensor), blk.mlp_b1.tensor));
    x = add(x, add(matmul(hmid, blk.mlp_w2.tensor), blk.mlp_b2.tensor));
  }
  return x;
}

void VisionEncoder::collect(std::vector<Parameter>& params) const {
  params.push_back(proj_w);
  params.push_back(proj_b);
  for (const EncoderBlock& blk : blocks)
    for (const Parameter* p :
         {&blk.ln1_g, &blk.ln1_b, &blk.wq, &blk.wk, &blk.wv, &blk.wo,
          &blk.ln2_g, &blk.ln2_b, &blk.mlp_w1, &blk.mlp_b1, &blk.mlp_w2,
          &blk.mlp_b2})
      params.push_back(*p);
}

DecoderLayer DecoderLayer::create(const std::string& prefix, int d, Rng& rng) {
  DecoderLayer l;
  l.wq = xavier_param(prefix + ".wq", d, d, rng);
  l.wk = xavier_param(prefix + ".wk", d, d, rng);
  l.wv = xavier_param(prefix + ".wv", d, d, rng);
  l.h_w = xavier_param(prefix + ".h_w", d, d, rng);
  l.h_b = zeros_param(prefix + ".h_b", {d});
  return l;
}

Tensor DecoderLayer::apply(const Tensor& x, const Tensor& keys,
                           const Tensor& vals) const {
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(x.dim(1)));
  auto q = matmul(x, wq.tensor);
  auto attn = softmax(scale(matmul(q, transpose(keys)), inv_sqrt_d));
  auto ca = matmul(attn, vals);
  return add(matmul(ca, h_w.tensor), h_b.tensor);
}

void DecoderLayer::collect(std::vector<Parameter>& params) const {
  for (const Parameter* p : {&wq, &wk, &wv, &h_w, &h_b}) params.push_back(*p);
}

BoxHead BoxHead::create(int d, Rng& rng) {
  BoxHead head;
  head.w1 = xavier_param("box.w1", d, d, rng);
  head.b1 = zeros_param("box.b1", {d});
  head.w2 = xavier_param("box.w2", d, d, rng);
  head.b2 = zeros_param("box.b2", {d});
  head.w3 = xavier_param("box.w3", d, 4, rng);
  head.b3 = zeros_param("box.b3", {4});
  return head;
}

Tensor BoxHead::forward(const Tensor& q) const {
  auto h1 = gelu(add(matmul(q, w1.tensor), b1.tensor));
  auto h2 = gelu(add(matmul(h1, w2.tensor), b2.tensor));
  return sigmoid(add(matmul(h2, w3.tensor), b3.tensor));
}

void BoxHead::collect(std::vector<Parameter>& params) const {
  for (const Parameter* p : {&w1, &b1, &w2, &b2, &w3, &b3})
    params.push_back(*p);
}

MaskHead MaskHead::create(int d, Rng& rng) {
  MaskHead head;
  head.embed_w = xavier_param("mask.embed_w", d, d, rng);
  head.embed_b = zeros_param("mask.embed_b", {d});
  head.pixel_w = xavier_param("mask.pixel_w", d, d, rng);
  head.pixel_b = zeros_param("mask.pixel_b", {d});
  return head;
}

Tensor MaskHead::forward(const Tensor& queries, const Tensor& tokens,
                         int grid_h, int grid_w, int mask_h, int mask_w) const {
  auto embed = add(matmul(queries, embed_w.tensor), embed_b.tensor);  // [k, d]
  auto pixf = add(matmul(tokens, pixel_w.tensor), pixel_b.tensor);    // [N, d]
  auto up = upsample_bilinear(pixf, grid_h, grid_w, mask_h, mask_w);  // [HW, d]
  return matmul(embed, transpose(up));                                // [k, HW]
}

void MaskHead::collect(std::vector<Parameter>& params) const {
  for (const Parameter* p : {&embed_w, &embed_b, &pixel_w, &pixel_b})
    params.push_back(*p);
}

DetectionModel DetectionModel::create(const ModelConfig& cfg, uint64_t init_seed) {
  cfg.validate();
  Rng rng(init_seed);
  DetectionModel model;
  model.cfg = cfg;
  model.encoder = VisionEncoder::create(cfg.patch, cfg.d, cfg.encoder_blocks, rng);
  model.prompt_encoder = PromptEncoder::create(cfg.spectrum_bins, cfg.d, rng);
  model.prompt_encoder.use_spectral = cfg.use_sspe;
  for (int l = 0; l < cfg.decoder_layers; ++l)
    model.decoder.push_back(
        DecoderLayer::create("dec.layer" + std::to_string(l), cfg.d, rng));
  model.box_head = BoxHead::create(cfg.d, rng);
  model.mask_head = MaskHead::create(cfg.d, rng);
  const double limit = std::sqrt(6.0 / (cfg.queries + cfg.d));
  std::vector<double> sq(static_cast<size_t>(cfg.queries) * cfg.d);
  for (double& x : sq) x = rng.uniform(-limit, limit);
  model.static_queries = {"static_queries",
                          Tensor::from_vector({cfg.queries, cfg.d}, std::move(sq), true)};
  return model;
}

std::vector<Parameter> DetectionModel::parameters() const {
  std::vector<Parameter> params;
  encoder.collect(params);
  prompt_encoder.collect(params);
  for (const DecoderLayer& l : decoder) l.collect(params);
  box_head.collect(params);
  mask_head.collect(params);
  params.push_back(static_queries);
  return params;
}

std::vector<DecodedLayer> DetectionModel::decode(const Tensor& queries,
                                                 const Tensor& protos,
                                                 const Tensor& tokens) const {
  if (queries.dim(1) != cfg.d || protos.dim(1) != cfg.d || tokens.dim(1) != cfg.d)
    throw std::invalid_argument("decode: hidden dimension mismatch");
  std::vector<DecodedLayer> out;
  Tensor q = queries, p = protos;
  for (const DecoderLayer& layer : decoder) {
    auto keys = matmul(tokens, layer.wk.tensor);
    auto vals = matmul(tokens, layer.wv.tensor);
    q = layer.apply(q, keys, vals);
    p = layer.apply(p, keys, vals);
    out.push_back({q, p});
  }
  return out;
}

Tensor logits(const Tensor& decoded_protos, const Tensor& decoded_queries) {
  if (decoded_protos.dim(1) != decoded_queries.dim(1))
    throw std::invalid_argument("logits: dimension mismatch");
  return matmul(decoded_queries, transpose(decoded_protos));
}

TotalLossResult total_loss(const std::vector<LayerPrediction>& layers,
                           const std::vector<GroundTruthInstance>& gt,
                           const Tensor* cpe_term, const LossWeights& weights,
                           double focal_gamma, double focal_alpha) {
  weights.validate();
  if (layers.empty()) throw std::invalid_argument("total_loss: no layers");
  const int64_t k = layers[0].boxes.dim(0);
  const int64_t n_cls = layers[0].class_logits.dim(1);
  const int64_t hw = layers[0].mask_logits.dim(1);
  const int64_t n_gt = static_cast<int64_t>(gt.size());
  for (const GroundTruthInstance& g : gt) {
    if (g.class_index < 0 || g.class_index >= n_cls)
      throw std::invalid_argument("total_loss: ground-truth class outside the prompted set");
    if (static_cast<int64_t>(g.mask.size()) != hw)
      throw std::invalid_argument("total_loss: ground-truth mask resolution mismatch");
    validate_box(g.box);
  }
  const double norm = static_cast<double>(std::max<int64_t>(1, n_gt));

  TotalLossResult result;
  Tensor total;
  for (const LayerPrediction& layer : layers) {
    if (layer.boxes.dim(0) != k || layer.class_logits.dim(0) != k ||
        layer.mask_logits.dim(0) != k || layer.class_logits.dim(1) != n_cls ||
        layer.mask_logits.dim(1) != hw)
      throw std::invalid_argument("total_loss: layer/assignment shape mismatch");

    // ---- bipartite matching on plain values
    std::vector<std::pair<int, int>> pairs;
    if (n_gt > 0) {
      const auto& bv = layer.boxes.values();
      const auto& cv = layer.class_logits.values();
      const auto& mv = layer.mask_logits.values();
      std::vector<double> cost(static_cast<size_t>(k) * n_gt);
      for (int64_t i = 0; i < k; ++i) {
        const BBox pb{bv[i * 4], bv[i * 4 + 1], bv[i * 4 + 2], bv[i * 4 + 3]};
        for (int64_t j = 0; j < n_gt; ++j) {
          const double p = sigmoid_value(cv[i * n_cls + gt[j].class_index]);
          const double focal =
              focal_alpha * std::pow(1.0 - p, focal_gamma) * (-std::log(p + kLogEps)) -
              (1.0 - focal_alpha) * std::pow(p, focal_gamma) *
                  (-std::log(1.0 - p + kLogEps));
          double l1 = std::fabs(pb.cx - gt[j].box.cx) + std::fabs(pb.cy - gt[j].box.cy) +
                      std::fabs(pb.w - gt[j].box.w) + std::fabs(pb.h - gt[j].box.h);
          double bce = 0.0, inter = 0.0, psum = 0.0, gsum = 0.0;
          for (int64_t t = 0; t < hw; ++t) {
            const double m = mv[i * hw + t];
            const double gm = gt[j].mask[t];
            const double sp = m > 0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m));
            bce += sp - m * gm;
            const double pm = sigmoid_value(m);
            inter += pm * gm;
            psum += pm;
            gsum += gm;
          }
          bce /= static_cast<double>(hw);
          const double dice = 1.0 - (2.0 * inter + 1.0) / (psum + gsum + 1.0);
          cost[static_cast<size_t>(i) * n_gt + j] =
              weights.cls * focal + weights.l1 * l1 +
              weights.giou * (1.0 - giou(pb, gt[j].box)) + weights.bce * bce +
              weights.dice * dice;
        }
      }
      pairs = hungarian_match(cost, static_cast<int>(k), static_cast<int>(n_gt));
    }
    result.assignments.push_back(pairs);

    // ---- focal classification over every query
    std::vector<double> pos_mask(static_cast<size_t>(k) * n_cls, 0.0);
    for (const auto& [qi, gj] : pairs)
      pos_mask[static_cast<size_t>(qi) * n_cls + gt[gj].class_index] = 1.0;
    auto target = Tensor::from_vector({k, n_cls}, std::move(pos_mask));
    auto inv_target = sub(Tensor::full({k, n_cls}, 1.0), target);
    auto prob = sigmoid(layer.class_logits);
    auto pos_term = mul(target,
                        mul(scale(pow_const(sub(Tensor::full({k, n_cls}, 1.0), prob),
                                            focal_gamma),
                                  focal_alpha),
                            neg(log(add_scalar(prob, kLogEps)))));
    auto neg_term = mul(inv_target,
                        mul(scale(pow_const(prob, focal_gamma), 1.0 - focal_alpha),
                            neg(log(add_scalar(sub(Tensor::full({k, n_cls}, 1.0), prob),
                                               kLogEps)))));
    auto l_cls = scale(sum(add(pos_term, neg_term)), 1.0 / norm);

    LayerTerms terms;
    terms.cls = l_cls.item();
    Tensor layer_loss = scale(l_cls, weights.cls);

    if (n_gt > 0) {
      std::vector<int64_t> q_rows;
      std::vector<double> gt_boxes, gt_masks;
      for (const auto& [qi, gj] : pairs) {
        q_rows.push_back(qi);
        const BBox& b = gt[gj].box;
        gt_boxes.insert(gt_boxes.end(), {b.cx, b.cy, b.w, b.h});
        gt_masks.insert(gt_masks.end(), gt[gj].mask.begin(), gt[gj].mask.end());
      }
      const int64_t m_count = static_cast<int64_t>(q_rows.size());
      auto pred_boxes = gather_rows(layer.boxes, q_rows);
      auto target_boxes = Tensor::from_vector({m_count, 4}, std::move(gt_boxes));
      auto l_l1 = scale(sum(abs(sub(pred_boxes, target_boxes))), 1.0 / norm);
      auto giou_v = giou_vector(pred_boxes, target_boxes);
      auto l_giou = scale(sum(sub(Tensor::full({m_count}, 1.0), giou_v)), 1.0 / norm);

      auto pred_masks = gather_rows(layer.mask_logits, q_rows);
      auto target_masks = Tensor::from_vector({m_count, hw}, std::move(gt_masks));
      auto bce_map = sub(softplus(pred_masks), mul(pred_masks, target_masks));
      auto l_bce = scale(sum(bce_map), 1.0 / (norm * static_cast<double>(hw)));

      auto probs = sigmoid(pred_masks);
      auto inter = sum_last(mul(probs, target_masks));
      auto sums = add(sum_last(probs), sum_last(target_masks));
      auto dice_v = sub(Tensor::full({m_count}, 1.0),
                        div(add_scalar(scale(inter, 2.0), 1.0), add_scalar(sums, 1.0)));
      auto l_dice = scale(sum(dice_v), 1.0 / norm);

      terms.l1 = l_l1.item();
      terms.giou = l_giou.item();
      terms.bce = l_bce.item();
      terms.dice = l_dice.item();
      layer_loss = add(layer_loss,
                       add(add(scale(l_l1, weights.l1), scale(l_giou, weights.giou)),
                           add(scale(l_bce, weights.bce), scale(l_dice, weights.dice))));
    }

    result.layer_terms.push_back(terms);
    result.layer_values.push_back(layer_loss.item());
    total = total.defined() ? add(total, layer_loss) : layer_loss;
  }

  if (cpe_term != nullptr) {
    result.cpe_value = cpe_term->item();
    total = add(total, scale(*cpe_term, weights.cpe));
  }
  result.loss = total;
  return result;
}

std::vector<Detection> predict(const DetectionModel& model,
                               const std::vector<double>& image, int h, int w,
                               const std::vector<ClassPrototype>& prototypes,
                               double score_threshold) {
  if (prototypes.empty())
    throw std::invalid_argument("predict: no prompted classes");
  const ModelConfig& cfg = model.cfg;
  for (const ClassPrototype& p : prototypes)
    if (static_cast<int>(p.vector.size()) != cfg.d)
      throw std::invalid_argument("predict: prototype dimension mismatch");

  NoGradGuard no_grad;
  auto img = Tensor::from_vector({static_cast<int64_t>(h) * w},
                                 std::vector<double>(image));
  auto tokens = model.encoder.encode(img, h, w);

  std::vector<double> proto_data;
  for (const ClassPrototype& p : prototypes)
    proto_data.insert(proto_data.end(), p.vector.begin(), p.vector.end());
  auto protos = Tensor::from_vector(
      {static_cast<int64_t>(prototypes.size()), cfg.d}, std::move(proto_data));

  Tensor q0;
  if (cfg.use_pqs) {
    auto scores = relevance_scores(tokens, protos, cfg.cpe.clamp_epsilon);
    SelectionConfig sel;
    sel.k = cfg.queries;
    sel.temperature = cfg.tau;
    sel.noise_enabled = false;  // inference is deterministic
    sel.mask_multiply = cfg.mask_multiply;
    Rng unused(0);
    auto choice = gumbel_topk(scores.values(), sel, unused);
    q0 = select_queries(tokens, scores, choice, sel);
  } else {
    q0 = model.static_queries.tensor;
  }

  auto decoded = model.decode(q0, protos, tokens);
  const DecodedLayer& last = decoded.back();
  auto y = logits(last.prototypes, last.queries);
  auto boxes = model.box_head.forward(last.queries);
  const int mask_h = h / cfg.mask_stride, mask_w = w / cfg.mask_stride;
  auto mask_logits = model.mask_head.forward(last.queries, tokens, h / cfg.patch,
                                             w / cfg.patch, mask_h, mask_w);

  std::vector<Detection> detections;
  const int64_t k = y.dim(0);
  const int64_t n_cls = y.dim(1);
  for (int64_t i = 0; i < k; ++i) {
    int64_t best = 0;
    for (int64_t c = 1; c < n_cls; ++c)
      if (y.values()[i * n_cls + c] > y.values()[i * n_cls + best]) best = c;
    const double score = sigmoid_value(y.values()[i * n_cls + best]);
    if (score < score_threshold) continue;
    Detection det;
    det.class_index = static_cast<int>(best);
    det.score = score;
    const auto& bv = boxes.values();
    det.box = clamp_unit({bv[i * 4], bv[i * 4 + 1], bv[i * 4 + 2], bv[i * 4 + 3]});
    // Upsample the mask logits to image resolution, binarize at p = 0.5.
    auto row = Tensor::from_vector(
        {static_cast<int64_t>(mask_h) * mask_w, 1},
        std::vector<double>(
            mask_logits.values().begin() + i * mask_h * mask_w,
            mask_logits.values().begin() + (i + 1) * mask_h * mask_w));
    auto up = upsample_bilinear(row, mask_h, mask_w, h, w);
    det.mask.resize(static_cast<size_t>(h) * w);
    for (size_t t = 0; t < det.mask.size(); ++t)
      det.mask[t] = up.values()[t] >= 0.0 ? 1 : 0;
    detections.push_back(std::move(det));
  }
  return detections;
}

}  // namespace spl
