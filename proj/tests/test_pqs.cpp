#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "spl/cpe.hpp"
#include "spl/pqs.hpp"
#include "spl/rng.hpp"

using namespace spl;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> data(static_cast<size_t>(numel(shape)));
  for (double& x : data) x = rng.uniform(lo, hi);
  return Tensor::from_vector(std::move(shape), std::move(data));
}

}  // namespace

TEST_CASE("relevance: single prototype reduces to the cosine vector") {
  Rng rng(1);
  auto tokens = random_tensor({4, 6}, rng);
  auto proto = random_tensor({1, 6}, rng);
  auto s = relevance_scores(tokens, proto);
  const double eps = 1e-7;
  for (int64_t i = 0; i < 4; ++i) {
    std::vector<double> t(tokens.values().begin() + i * 6,
                          tokens.values().begin() + (i + 1) * 6);
    std::vector<double> p(proto.values().begin(), proto.values().end());
    CHECK(s.values()[i] == doctest::Approx(cosine_sim(t, p, eps)).epsilon(1e-12));
  }
}

TEST_CASE("relevance: matches the loop-and-max oracle for two prototypes") {
  Rng rng(2);
  auto tokens = random_tensor({3, 5}, rng);
  auto protos = random_tensor({2, 5}, rng);
  auto s = relevance_scores(tokens, protos);
  const double eps = 1e-7;
  for (int64_t i = 0; i < 3; ++i) {
    std::vector<double> t(tokens.values().begin() + i * 5,
                          tokens.values().begin() + (i + 1) * 5);
    double best = -2.0;
    for (int64_t c = 0; c < 2; ++c) {
      std::vector<double> p(protos.values().begin() + c * 5,
                            protos.values().begin() + (c + 1) * 5);
      best = std::max(best, cosine_sim(t, p, eps));
    }
    CHECK(s.values()[i] == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("a token equal to a prototype scores the clamped maximum") {
  Rng rng(3);
  auto protos = random_tensor({2, 4}, rng);
  std::vector<double> tok(protos.values().begin() + 4, protos.values().begin() + 8);
  std::vector<double> all = tok;
  all.insert(all.end(), {0.3, -0.2, 0.9, 0.1});
  auto tokens = Tensor::from_vector({2, 4}, all);
  auto s = relevance_scores(tokens, protos);
  CHECK(s.values()[0] == doctest::Approx(1.0 - 1e-7).epsilon(1e-12));
  CHECK(s.values()[0] >= s.values()[1]);
}

TEST_CASE("relevance rejects zero-norm tokens and empty prototype sets") {
  Rng rng(4);
  auto protos = random_tensor({1, 4}, rng);
  auto zero_tok = Tensor::from_vector({1, 4}, {0, 0, 0, 0});
  CHECK_THROWS_AS(relevance_scores(zero_tok, protos), std::invalid_argument);
}

TEST_CASE("noiseless gumbel_topk is plain top-k with deterministic repeats") {
  SelectionConfig cfg;
  cfg.k = 2;
  cfg.noise_enabled = false;
  Rng rng(5);
  auto r1 = gumbel_topk({3.0, 1.0, 2.0}, cfg, rng);
  CHECK(r1.selected_indices == std::vector<int64_t>{0, 2});
  CHECK(r1.hard_mask == std::vector<uint8_t>{1, 0, 1});
  auto r2 = gumbel_topk({3.0, 1.0, 2.0}, cfg, rng);
  CHECK(r2.selected_indices == r1.selected_indices);
  CHECK(r2.soft_weights == r1.soft_weights);

  double sum = 0.0;
  for (double w : r1.soft_weights) {
    CHECK(w > 0.0);
    sum += w;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("gumbel_topk validates k and temperature") {
  SelectionConfig cfg;
  cfg.k = 4;
  Rng rng(6);
  CHECK_THROWS_AS(gumbel_topk({1.0, 2.0}, cfg, rng), std::invalid_argument);
  cfg.k = 1;
  cfg.temperature = 0.0;
  CHECK_THROWS_AS(gumbel_topk({1.0, 2.0}, cfg, rng), std::invalid_argument);
}

TEST_CASE("ties break toward the lower index") {
  SelectionConfig cfg;
  cfg.k = 2;
  cfg.noise_enabled = false;
  Rng rng(7);
  auto r = gumbel_topk({1.0, 5.0, 5.0, 5.0}, cfg, rng);
  CHECK(r.selected_indices == std::vector<int64_t>{1, 2});
  auto r2 = gumbel_topk({2.0, 2.0, 2.0, 2.0}, cfg, rng);
  CHECK(r2.selected_indices == std::vector<int64_t>{0, 1});
}

TEST_CASE("near-zero temperature concentrates the soft weights") {
  SelectionConfig cfg;
  cfg.k = 1;
  cfg.noise_enabled = false;
  cfg.temperature = 1e-3;
  Rng rng(8);
  auto r = gumbel_topk({0.1, 0.9, 0.4, 0.2}, cfg, rng);
  CHECK(*std::max_element(r.soft_weights.begin(), r.soft_weights.end()) >=
        1.0 - 1e-6);
  CHECK(r.selected_indices == std::vector<int64_t>{1});
}

TEST_CASE("selection is permutation-equivariant") {
  SelectionConfig cfg;
  cfg.k = 3;
  cfg.noise_enabled = false;
  Rng rng(9);
  std::vector<double> s{0.3, 0.9, -0.2, 0.5, 0.7, 0.1};
  auto base = gumbel_topk(s, cfg, rng);
  // Permute and map back.
  std::vector<int64_t> perm{4, 0, 5, 2, 1, 3};  // new[i] = old[perm[i]]
  std::vector<double> permuted(s.size());
  for (size_t i = 0; i < perm.size(); ++i) permuted[i] = s[perm[i]];
  auto moved = gumbel_topk(permuted, cfg, rng);
  std::vector<int64_t> mapped;
  for (int64_t i : moved.selected_indices) mapped.push_back(perm[i]);
  std::sort(mapped.begin(), mapped.end());
  CHECK(mapped == base.selected_indices);
}

TEST_CASE("k=1 gumbel frequencies match softmax within 3 MC standard errors") {
  SelectionConfig cfg;
  cfg.k = 1;
  cfg.noise_enabled = true;
  Rng rng(42);
  const std::vector<double> s{1.0, 0.5, 0.0};
  // softmax(s) evaluated directly
  double z = std::exp(1.0) + std::exp(0.5) + std::exp(0.0);
  const std::vector<double> p{std::exp(1.0) / z, std::exp(0.5) / z, 1.0 / z};
  const int draws = 100000;
  std::vector<int> hits(3, 0);
  for (int i = 0; i < draws; ++i) {
    auto r = gumbel_topk(s, cfg, rng);
    hits[static_cast<size_t>(r.selected_indices[0])] += 1;
  }
  for (int c = 0; c < 3; ++c) {
    const double freq = static_cast<double>(hits[c]) / draws;
    const double se = std::sqrt(p[c] * (1.0 - p[c]) / draws);
    INFO("class ", c, " freq ", freq, " expect ", p[c], " se ", se);
    CHECK(std::fabs(freq - p[c]) <= 3.0 * se);
  }
}

TEST_CASE("select_queries with k == N returns all tokens in order") {
  Rng rng(10);
  auto tokens = random_tensor({4, 3}, rng);
  auto scores = random_tensor({4}, rng);
  SelectionConfig cfg;
  cfg.k = 4;
  cfg.noise_enabled = false;
  Rng rng2(11);
  auto result = gumbel_topk(scores.values(), cfg, rng2);
  auto q = select_queries(tokens, scores, result, cfg);
  CHECK(q.values() == tokens.values());
}

TEST_CASE("k=1 with a dominant score selects the argmax token") {
  Rng rng(12);
  auto tokens = random_tensor({3, 4}, rng);
  auto scores = Tensor::from_vector({3}, {0.0, 20.0, 1.0});
  SelectionConfig cfg;
  cfg.k = 1;
  cfg.noise_enabled = false;
  Rng rng2(13);
  auto result = gumbel_topk(scores.values(), cfg, rng2);
  auto q = select_queries(tokens, scores, result, cfg);
  for (int64_t c = 0; c < 4; ++c)
    CHECK(q.values()[c] == tokens.values()[1 * 4 + c]);
}

TEST_CASE("straight-through gradient equals FD of the soft-relaxed objective") {
  Rng rng(14);
  const int n = 6, d = 4, k = 3;
  auto tokens = random_tensor({n, d}, rng);
  auto readout = random_tensor({k, d}, rng);
  SelectionConfig cfg;
  cfg.k = k;
  cfg.noise_enabled = false;
  cfg.temperature = 1.0;

  auto scores = Tensor::from_vector({n}, {0.4, -0.1, 0.9, 0.2, 0.6, -0.5}, true);
  Rng rng2(15);
  auto result = gumbel_topk(scores.values(), cfg, rng2);
  auto q = select_queries(tokens, scores, result, cfg);
  auto loss = sum(mul(q, readout));
  loss.backward();
  const auto analytic = scores.grad();

  // Soft-relaxed objective with the hard choice and base weights frozen:
  //   L(S') = sum_j dot(r_j, t_{i_j}) * (w(S')_{i_j} + 1 - w(S0)_{i_j}).
  auto soft_obj = [&](const std::vector<double>& s) {
    std::vector<double> w(s.size());
    double mx = *std::max_element(s.begin(), s.end());
    double sum = 0.0;
    for (size_t i = 0; i < s.size(); ++i) {
      w[i] = std::exp((s[i] - mx) / cfg.temperature);
      sum += w[i];
    }
    for (double& x : w) x /= sum;
    double obj = 0.0;
    for (int j = 0; j < k; ++j) {
      const int64_t i = result.selected_indices[j];
      double dot = 0.0;
      for (int c = 0; c < d; ++c)
        dot += readout.values()[j * d + c] * tokens.values()[i * d + c];
      obj += dot * (w[i] + 1.0 - result.soft_weights[i]);
    }
    return obj;
  };
  const double eps = 1e-6;
  for (int i = 0; i < n; ++i) {
    auto sp = scores.values();
    sp[i] += eps;
    const double fp = soft_obj(sp);
    sp[i] -= 2 * eps;
    const double fm = soft_obj(sp);
    const double fd = (fp - fm) / (2 * eps);
    CHECK(analytic[i] == doctest::Approx(fd).epsilon(1e-4));
  }
}

TEST_CASE("select_queries rejects inconsistent results") {
  Rng rng(16);
  auto tokens = random_tensor({4, 3}, rng);
  auto scores = random_tensor({4}, rng);
  SelectionConfig cfg;
  cfg.k = 2;
  cfg.noise_enabled = false;
  Rng rng2(17);
  auto result = gumbel_topk(scores.values(), cfg, rng2);
  result.selected_indices[1] = 9;
  CHECK_THROWS_AS(select_queries(tokens, scores, result, cfg), std::out_of_range);
}
