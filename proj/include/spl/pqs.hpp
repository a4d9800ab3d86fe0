#pragma once

#include <cstdint>
#include <vector>

#include "spl/rng.hpp"
#include "spl/tensor.hpp"

namespace spl {

struct SelectionConfig {
  int k = 16;                 // queries to select
  double temperature = 1.0;   // tau
  bool noise_enabled = true;  // element-wise Gumbel noise on the scores
  uint64_t seed = 0;          // stream seed; the caller owns the Rng
  bool mask_multiply = false; // straight-through mask-scaling variant

  void validate(int64_t token_count) const;  // k in [1, N_s], tau > 0
};

struct SelectionResult {
  std::vector<uint8_t> hard_mask;         // exactly k true entries
  std::vector<double> soft_weights;       // softmax((S+g)/tau), sums to 1
  std::vector<int64_t> selected_indices;  // ascending, the k largest of S+g
  std::vector<double> noise;              // g (zeros when noise is disabled)
};

// Per-token relevance: max over prototype rows of the clamped cosine
// similarity. Differentiable; gradients route through the max.
Tensor relevance_scores(const Tensor& tokens, const Tensor& prototypes,
                        double clamp_epsilon = 1e-7);

// Gumbel-perturbed soft weights plus a hard top-k choice over the perturbed
// scores. Ties break toward the lower token index. Deterministic and
// idempotent when noise is disabled.
SelectionResult gumbel_topk(const std::vector<double>& scores,
                            const SelectionConfig& cfg, Rng& rng);

// Forward: the token rows at result.selected_indices. Backward follows the
// straight-through contract: each selected token's gradient is scaled by its
// soft weight, and the score tensor receives the gradient of the
// soft-relaxed objective through the softmax Jacobian. The mask_multiply
// variant keeps token gradients unscaled.
Tensor select_queries(const Tensor& tokens, const Tensor& scores,
                      const SelectionResult& result, const SelectionConfig& cfg);

}  // namespace spl
