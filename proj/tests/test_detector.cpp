#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "spl/detector.hpp"
#include "spl/gradcheck.hpp"
#include "spl/hungarian.hpp"
#include "spl/rng.hpp"

using namespace spl;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> data(static_cast<size_t>(numel(shape)));
  for (double& x : data) x = rng.uniform(lo, hi);
  return Tensor::from_vector(std::move(shape), std::move(data));
}

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.image_size = 16;
  cfg.patch = 8;
  cfg.d = 8;
  cfg.encoder_blocks = 1;
  cfg.decoder_layers = 2;
  cfg.queries = 2;
  cfg.spectrum_bins = 8;
  cfg.mask_stride = 4;
  return cfg;
}

void zero_all(std::vector<Parameter>& params) {
  for (Parameter& p : params) {
    auto& v = p.tensor.mutable_values();
    std::fill(v.begin(), v.end(), 0.0);
  }
}

double brute_force_assignment(const std::vector<double>& cost, int n, int m) {
  // Enumerates all placements of min(n, m) pairs; n, m <= 7.
  const bool rows_small = n <= m;
  const int small = rows_small ? n : m;
  const int large = rows_small ? m : n;
  std::vector<int> perm(large);
  std::iota(perm.begin(), perm.end(), 0);
  double best = 1e300;
  do {
    double total = 0.0;
    for (int i = 0; i < small; ++i) {
      const int r = rows_small ? i : perm[i];
      const int c = rows_small ? perm[i] : i;
      total += cost[static_cast<size_t>(r) * m + c];
    }
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

TEST_CASE("encode_image: token count and divisibility errors") {
  Rng rng(1);
  auto enc = VisionEncoder::create(8, 8, 1, rng);
  auto img = random_tensor({64 * 64}, rng, 0.0, 1.0);
  auto tokens = enc.encode(img, 64, 64);
  CHECK(tokens.shape() == Shape{64, 8});
  CHECK_THROWS_AS(enc.encode(random_tensor({60 * 64}, rng), 60, 64),
                  std::invalid_argument);
}

TEST_CASE("zero-weight encoder returns the positional encodings exactly") {
  Rng rng(2);
  auto enc = VisionEncoder::create(8, 8, 2, rng);
  std::vector<Parameter> params;
  enc.collect(params);
  zero_all(params);
  // Restore the layer-norm gains; zeroed gains also give zero contributions,
  // but the standard init is gain 1.
  for (Parameter& p : params)
    if (p.name.find("ln") != std::string::npos && p.name.back() == 'g')
      std::fill(p.tensor.mutable_values().begin(),
                p.tensor.mutable_values().end(), 1.0);
  auto img = Tensor::zeros({16 * 16});
  auto tokens = enc.encode(img, 16, 16);
  auto pos = sinusoidal_positions(2, 2, 8);
  CHECK(tokens.values() == pos.values());
}

TEST_CASE("grad_check through encode_image on a 16x16 image") {
  Rng rng(3);
  auto enc = VisionEncoder::create(8, 8, 1, rng);
  auto fn = [&](const std::vector<Tensor>& in) {
    return mean(square(enc.encode(in[0], 16, 16)));
  };
  auto report = grad_check(fn, {random_tensor({256}, rng, 0.0, 1.0)}, 1e-5, 1e-4);
  CHECK(report.passed);
}

TEST_CASE("single-token cross-attention with identity values passes it through") {
  Rng rng(4);
  const int d = 8;
  auto layer = DecoderLayer::create("t", d, rng);
  // Identity value projection and identity output head.
  auto& wv = layer.wv.tensor.mutable_values();
  std::fill(wv.begin(), wv.end(), 0.0);
  for (int i = 0; i < d; ++i) wv[static_cast<size_t>(i) * d + i] = 1.0;
  auto& hw = layer.h_w.tensor.mutable_values();
  std::fill(hw.begin(), hw.end(), 0.0);
  for (int i = 0; i < d; ++i) hw[static_cast<size_t>(i) * d + i] = 1.0;

  auto tokens = random_tensor({1, d}, rng);
  auto keys = matmul(tokens, layer.wk.tensor);
  auto vals = matmul(tokens, layer.wv.tensor);
  for (int trial = 0; trial < 3; ++trial) {
    auto x = random_tensor({3, d}, rng);
    auto out = layer.apply(x, keys, vals);
    for (int64_t r = 0; r < 3; ++r)
      for (int64_t c = 0; c < d; ++c)
        CHECK(out.values()[r * d + c] ==
              doctest::Approx(tokens.values()[c]).epsilon(1e-12));
  }
}

TEST_CASE("identity head makes decode return the attention output") {
  Rng rng(5);
  const int d = 8;
  auto layer = DecoderLayer::create("t", d, rng);
  auto& hw = layer.h_w.tensor.mutable_values();
  std::fill(hw.begin(), hw.end(), 0.0);
  for (int i = 0; i < d; ++i) hw[static_cast<size_t>(i) * d + i] = 1.0;

  auto tokens = random_tensor({5, d}, rng);
  auto keys = matmul(tokens, layer.wk.tensor);
  auto vals = matmul(tokens, layer.wv.tensor);
  auto x = random_tensor({2, d}, rng);
  auto out = layer.apply(x, keys, vals);
  auto attn = softmax(scale(matmul(matmul(x, layer.wq.tensor), transpose(keys)),
                            1.0 / std::sqrt(static_cast<double>(d))));
  auto expect = matmul(attn, vals);
  for (size_t i = 0; i < expect.values().size(); ++i)
    CHECK(out.values()[i] == doctest::Approx(expect.values()[i]).epsilon(1e-12));
}

TEST_CASE("logits: unit identity, orthogonality, loop oracle, bilinearity") {
  auto u = Tensor::from_vector({1, 3}, {1.0, 0.0, 0.0});
  CHECK(logits(u, u).item() == 1.0);
  auto v = Tensor::from_vector({1, 3}, {0.0, 1.0, 0.0});
  CHECK(logits(u, v).item() == 0.0);

  Rng rng(6);
  auto protos = random_tensor({2, 3}, rng);
  auto queries = random_tensor({4, 3}, rng);
  auto y = logits(protos, queries);
  CHECK(y.shape() == Shape{4, 2});
  for (int64_t i = 0; i < 4; ++i)
    for (int64_t c = 0; c < 2; ++c) {
      double dot = 0.0;
      for (int64_t t = 0; t < 3; ++t)
        dot += protos.values()[c * 3 + t] * queries.values()[i * 3 + t];
      CHECK(y.values()[i * 2 + c] == doctest::Approx(dot).epsilon(1e-12));
    }

  // Scaling a query row scales its logit row; argmax is scale-invariant.
  auto scaled = Tensor::from_vector(queries.shape(), queries.values());
  for (int64_t t = 0; t < 3; ++t) scaled.mutable_values()[1 * 3 + t] *= 3.5;
  auto y2 = logits(protos, scaled);
  for (int64_t c = 0; c < 2; ++c)
    CHECK(y2.values()[1 * 2 + c] ==
          doctest::Approx(3.5 * y.values()[1 * 2 + c]).epsilon(1e-12));
}

TEST_CASE("giou: identical, distant, touching, degenerate") {
  const BBox a{0.3, 0.4, 0.2, 0.2};
  CHECK(giou(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  const BBox c1{0.1, 0.1, 0.1, 0.1}, c2{0.9, 0.9, 0.1, 0.1};
  CHECK(giou(c1, c2) < -0.5);

  const BBox t1{0.25, 0.5, 0.5, 0.5}, t2{0.75, 0.5, 0.5, 0.5};
  CHECK(giou(t1, t2) == doctest::Approx(0.0).epsilon(1e-12));

  CHECK_THROWS_AS(giou(BBox{0.5, 0.5, 0.0, 0.1}, a), std::invalid_argument);
}

TEST_CASE("hungarian: 1x1, NaN rejection, brute force up to 7") {
  auto single = hungarian_match({3.0}, 1, 1);
  REQUIRE(single.size() == 1);
  CHECK(single[0] == std::pair<int, int>{0, 0});

  CHECK_THROWS_AS(hungarian_match({0.0, std::nan(""), 1.0, 2.0}, 2, 2),
                  std::invalid_argument);

  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_int(0, 6));
    const int m = 1 + static_cast<int>(rng.uniform_int(0, 6));
    std::vector<double> cost(static_cast<size_t>(n) * m);
    for (double& c : cost) c = rng.uniform(-5.0, 5.0);
    auto pairs = hungarian_match(cost, n, m);
    REQUIRE(static_cast<int>(pairs.size()) == std::min(n, m));
    double total = 0.0;
    for (auto [r, c] : pairs) total += cost[static_cast<size_t>(r) * m + c];
    CHECK(total == doctest::Approx(brute_force_assignment(cost, n, m)).epsilon(1e-9));
  }
}

TEST_CASE("total_loss: perfect predictions sit on the loss floor") {
  const int64_t k = 2, hw = 16;
  const BBox gt_box{0.5, 0.5, 0.25, 0.25};
  std::vector<double> gt_mask(hw, 0.0);
  for (int i = 5; i < 11; ++i) gt_mask[i] = 1.0;

  std::vector<double> boxes = {gt_box.cx, gt_box.cy, gt_box.w, gt_box.h,
                               0.2, 0.2, 0.1, 0.1};
  std::vector<double> cls = {20.0, -20.0};  // query0 -> class 0, query1 background
  std::vector<double> masks(static_cast<size_t>(k) * hw, -20.0);
  for (int i = 0; i < 16; ++i) masks[i] = gt_mask[i] > 0 ? 20.0 : -20.0;

  LayerPrediction layer{Tensor::from_vector({k, 4}, boxes),
                        Tensor::from_vector({k, 1}, cls),
                        Tensor::from_vector({k, hw}, masks)};
  GroundTruthInstance gt{gt_box, 0, gt_mask};
  LossWeights w;
  auto result = total_loss({layer}, {gt}, nullptr, w, 2.0, 0.25);
  REQUIRE(result.assignments[0].size() == 1);
  CHECK(result.assignments[0][0] == std::pair<int, int>{0, 0});
  CHECK(result.layer_terms[0].l1 == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(result.layer_terms[0].giou == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(result.layer_terms[0].dice < 1e-6);
  CHECK(result.layer_terms[0].bce < 1e-3);
}

TEST_CASE("doubling every weight doubles the weighted layer sums exactly") {
  Rng rng(8);
  const int64_t k = 3, hw = 16, C = 2;
  std::vector<LayerPrediction> layers;
  for (int l = 0; l < 2; ++l)
    layers.push_back({sigmoid(random_tensor({k, 4}, rng)),
                      random_tensor({k, C}, rng),
                      random_tensor({k, hw}, rng)});
  std::vector<GroundTruthInstance> gt;
  std::vector<double> m1(hw, 0.0);
  m1[3] = m1[4] = 1.0;
  gt.push_back({BBox{0.4, 0.4, 0.2, 0.3}, 0, m1});
  std::vector<double> m2(hw, 0.0);
  m2[9] = 1.0;
  gt.push_back({BBox{0.7, 0.6, 0.1, 0.2}, 1, m2});

  LossWeights w;
  auto base = total_loss(layers, gt, nullptr, w, 2.0, 0.25);
  LossWeights dbl = w;
  dbl.cls *= 2;
  dbl.l1 *= 2;
  dbl.giou *= 2;
  dbl.bce *= 2;
  dbl.dice *= 2;
  dbl.cpe *= 2;
  auto doubled = total_loss(layers, gt, nullptr, dbl, 2.0, 0.25);
  for (size_t l = 0; l < base.layer_values.size(); ++l)
    CHECK(doubled.layer_values[l] == 2.0 * base.layer_values[l]);
}

TEST_CASE("total_loss is bit-invariant to ground-truth ordering") {
  Rng rng(9);
  const int64_t k = 4, hw = 16, C = 3;
  std::vector<LayerPrediction> layers{{sigmoid(random_tensor({k, 4}, rng)),
                                       random_tensor({k, C}, rng),
                                       random_tensor({k, hw}, rng)}};
  std::vector<GroundTruthInstance> gt;
  for (int j = 0; j < 3; ++j) {
    std::vector<double> m(hw, 0.0);
    m[static_cast<size_t>(j) * 3] = 1.0;
    gt.push_back({BBox{0.2 + 0.25 * j, 0.5, 0.15, 0.2}, j, m});
  }
  LossWeights w;
  const double base = total_loss(layers, gt, nullptr, w, 2.0, 0.25).loss.item();
  std::vector<GroundTruthInstance> permuted{gt[2], gt[0], gt[1]};
  const double got = total_loss(layers, permuted, nullptr, w, 2.0, 0.25).loss.item();
  CHECK(got == base);
}

TEST_CASE("deep supervision: dropping a layer removes exactly its term") {
  Rng rng(10);
  const int64_t k = 3, hw = 16, C = 2;
  std::vector<LayerPrediction> layers;
  for (int l = 0; l < 3; ++l)
    layers.push_back({sigmoid(random_tensor({k, 4}, rng)),
                      random_tensor({k, C}, rng),
                      random_tensor({k, hw}, rng)});
  std::vector<double> m(hw, 0.0);
  m[5] = 1.0;
  std::vector<GroundTruthInstance> gt{{BBox{0.5, 0.5, 0.2, 0.2}, 1, m}};
  LossWeights w;
  auto full = total_loss(layers, gt, nullptr, w, 2.0, 0.25);
  auto without = total_loss({layers[0], layers[2]}, gt, nullptr, w, 2.0, 0.25);
  CHECK(full.loss.item() - without.loss.item() ==
        doctest::Approx(full.layer_values[1]).epsilon(1e-12));
}

TEST_CASE("grad_check on total_loss for a 2-query, 1-GT toy instance") {
  Rng rng(11);
  const int64_t hw = 16;
  std::vector<double> gmask(hw, 0.0);
  gmask[2] = gmask[3] = 1.0;
  std::vector<GroundTruthInstance> gt{{BBox{0.5, 0.5, 0.3, 0.3}, 0, gmask}};
  LossWeights w;
  auto fn = [&](const std::vector<Tensor>& in) {
    std::vector<LayerPrediction> layers{
        {sigmoid(in[0]), in[1], in[2]}};
    return total_loss(layers, gt, nullptr, w, 2.0, 0.25).loss;
  };
  // Query 0 is clearly the match, so the assignment is stable under the
  // finite-difference perturbations.
  auto raw_boxes = Tensor::from_vector({2, 4}, {0.0, 0.0, -0.8, -0.8,
                                                -2.0, -2.0, -2.5, -2.5});
  auto cls = Tensor::from_vector({2, 1}, {1.2, -1.5});
  auto masks = random_tensor({2, hw}, rng, -1.0, 1.0);
  auto report = grad_check(fn, {raw_boxes, cls, masks}, 1e-5, 1e-3);
  CHECK(report.passed);
}

TEST_CASE("total_loss validates inputs") {
  Rng rng(12);
  std::vector<LayerPrediction> layers{{sigmoid(random_tensor({2, 4}, rng)),
                                       random_tensor({2, 2}, rng),
                                       random_tensor({2, 16}, rng)}};
  LossWeights w;
  std::vector<double> m(16, 0.0);
  m[0] = 1.0;
  CHECK_THROWS_AS(
      total_loss(layers, {{BBox{0.5, 0.5, 0.1, 0.1}, 5, m}}, nullptr, w, 2.0, 0.25),
      std::invalid_argument);
  std::vector<double> bad_mask(9, 0.0);
  CHECK_THROWS_AS(
      total_loss(layers, {{BBox{0.5, 0.5, 0.1, 0.1}, 0, bad_mask}}, nullptr, w, 2.0, 0.25),
      std::invalid_argument);
}

TEST_CASE("predict: empty prototypes and an unreachable threshold") {
  auto cfg = tiny_config();
  auto model = DetectionModel::create(cfg, 13);
  std::vector<double> image(16 * 16, 0.5);
  CHECK_THROWS_WITH_AS(predict(model, image, 16, 16, {}, 0.5),
                       doctest::Contains("no prompted classes"),
                       std::invalid_argument);

  Rng rng(14);
  std::vector<ClassPrototype> protos;
  for (int c = 0; c < 2; ++c) {
    ClassPrototype p;
    p.class_id = c;
    p.member_count = 1;
    for (int i = 0; i < cfg.d; ++i) p.vector.push_back(rng.uniform(-1.0, 1.0));
    protos.push_back(p);
  }
  CHECK(predict(model, image, 16, 16, protos, 1.0).empty());

  auto dets = predict(model, image, 16, 16, protos, 0.0);
  CHECK(!dets.empty());
  for (const Detection& det : dets) {
    CHECK(det.mask.size() == image.size());
    CHECK(det.box.w > 0.0);
    CHECK(det.score >= 0.0);
    CHECK(det.class_index >= 0);
    CHECK(det.class_index < 2);
  }
}

TEST_CASE("model parameters have unique names and round-trip state") {
  auto cfg = tiny_config();
  auto model = DetectionModel::create(cfg, 15);
  auto params = model.parameters();
  std::vector<std::string> names;
  for (const auto& p : params) names.push_back(p.name);
  std::sort(names.begin(), names.end());
  CHECK(std::adjacent_find(names.begin(), names.end()) == names.end());
}
