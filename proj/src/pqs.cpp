#include "spl/pqs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "spl/cpe.hpp"

namespace spl {

void SelectionConfig::validate(int64_t token_count) const {
  if (k < 1) throw std::invalid_argument("selection: k must be >= 1");
  if (k > token_count)
    throw std::invalid_argument("selection: k = " + std::to_string(k) +
                                " exceeds token count " +
                                std::to_string(token_count));
  if (!(temperature > 0.0))
    throw std::invalid_argument("selection: temperature must be > 0");
}

Tensor relevance_scores(const Tensor& tokens, const Tensor& prototypes,
                        double clamp_epsilon) {
  if (prototypes.dim(0) < 1)
    throw std::invalid_argument("relevance: at least one prototype required");
  if (tokens.dim(0) < 1)
    throw std::invalid_argument("relevance: empty token set");
  return max_last(cosine_matrix(tokens, prototypes, clamp_epsilon));
}

SelectionResult gumbel_topk(const std::vector<double>& scores,
                            const SelectionConfig& cfg, Rng& rng) {
  const int64_t n = static_cast<int64_t>(scores.size());
  cfg.validate(n);

  SelectionResult result;
  result.noise.assign(scores.size(), 0.0);
  if (cfg.noise_enabled)
    for (double& g : result.noise) g = rng.gumbel();

  std::vector<double> perturbed(scores.size());
  for (int64_t i = 0; i < n; ++i) perturbed[i] = scores[i] + result.noise[i];

  // Stable softmax of the perturbed scores at temperature tau.
  result.soft_weights.resize(scores.size());
  const double mx = *std::max_element(perturbed.begin(), perturbed.end());
  double sum = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    result.soft_weights[i] = std::exp((perturbed[i] - mx) / cfg.temperature);
    sum += result.soft_weights[i];
  }
  for (double& w : result.soft_weights) w /= sum;

  // Top-k of the perturbed scores; ties break toward the lower index.
  std::vector<int64_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    if (perturbed[a] != perturbed[b]) return perturbed[a] > perturbed[b];
    return a < b;
  });
  result.selected_indices.assign(order.begin(), order.begin() + cfg.k);
  std::sort(result.selected_indices.begin(), result.selected_indices.end());
  result.hard_mask.assign(scores.size(), 0);
  for (int64_t i : result.selected_indices) result.hard_mask[i] = 1;
  return result;
}

Tensor select_queries(const Tensor& tokens, const Tensor& scores,
                      const SelectionResult& result, const SelectionConfig& cfg) {
  const int64_t n = tokens.dim(0);
  const int64_t d = tokens.dim(1);
  if (static_cast<int64_t>(result.hard_mask.size()) != n ||
      static_cast<int64_t>(result.soft_weights.size()) != n ||
      scores.size() != n)
    throw std::invalid_argument("select_queries: result does not match tokens");
  if (static_cast<int64_t>(result.selected_indices.size()) != cfg.k)
    throw std::invalid_argument("select_queries: expected " +
                                std::to_string(cfg.k) + " selected indices");
  for (int64_t i : result.selected_indices)
    if (i < 0 || i >= n)
      throw std::out_of_range("select_queries: index " + std::to_string(i) +
                              " out of range");

  const auto& tv = tokens.values();
  std::vector<double> out(result.selected_indices.size() * static_cast<size_t>(d));
  for (size_t j = 0; j < result.selected_indices.size(); ++j)
    std::copy(tv.begin() + result.selected_indices[j] * d,
              tv.begin() + (result.selected_indices[j] + 1) * d,
              out.begin() + static_cast<int64_t>(j) * d);

  auto tok_node = tokens.node();
  auto score_node = scores.node();
  auto idx = std::make_shared<std::vector<int64_t>>(result.selected_indices);
  auto weights = std::make_shared<std::vector<double>>(result.soft_weights);
  const double tau = cfg.temperature;
  const bool mask_multiply = cfg.mask_multiply;

  auto bw = [tok_node, score_node, idx, weights, tau, mask_multiply, d](detail::Node& o) {
    // dL/dw_i for selected tokens: the upstream row gradient dotted with the
    // token values; zero elsewhere.
    std::vector<double> dw(weights->size(), 0.0);
    for (size_t j = 0; j < idx->size(); ++j) {
      const int64_t i = (*idx)[j];
      double dot = 0.0;
      for (int64_t c = 0; c < d; ++c)
        dot += o.grad[static_cast<int64_t>(j) * d + c] * tok_node->value[i * d + c];
      dw[i] = dot;
    }
    if (score_node->requires_grad) {
      score_node->ensure_grad();
      double wsum = 0.0;
      for (size_t i = 0; i < dw.size(); ++i) wsum += (*weights)[i] * dw[i];
      for (size_t i = 0; i < dw.size(); ++i)
        score_node->grad[i] += (*weights)[i] * (dw[i] - wsum) / tau;
    }
    if (tok_node->requires_grad) {
      tok_node->ensure_grad();
      for (size_t j = 0; j < idx->size(); ++j) {
        const int64_t i = (*idx)[j];
        const double s = mask_multiply ? 1.0 : (*weights)[i];
        for (int64_t c = 0; c < d; ++c)
          tok_node->grad[i * d + c] += o.grad[static_cast<int64_t>(j) * d + c] * s;
      }
    }
  };

  auto node = std::make_shared<detail::Node>();
  node->shape = {static_cast<int64_t>(result.selected_indices.size()), d};
  node->value = std::move(out);
  node->requires_grad = detail::grad_mode() &&
                        (tokens.requires_grad() || scores.requires_grad());
  if (node->requires_grad) {
    node->parents = {tok_node, score_node};
    node->backward = std::move(bw);
  }
  return Tensor(std::move(node));
}

}  // namespace spl
