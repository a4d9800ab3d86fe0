#pragma once

#include <vector>

#include "spl/sspe.hpp"
#include "spl/tensor.hpp"

namespace spl {

struct CpeConfig {
  double alpha = 30.0;          // logit scale
  double margin = 0.5;          // additive angle on the true class, radians
  double clamp_epsilon = 1e-7;  // cosine clamp distance from +-1

  void validate() const;
};

// Mean embedding of one class.
struct ClassPrototype {
  int class_id = -1;
  std::vector<double> vector;
  int member_count = 0;
};

// One prototype per distinct class label, ordered by ascending class id.
// Throws on empty input or inconsistent dimensions.
std::vector<ClassPrototype> class_prototypes(
    const std::vector<PromptEmbedding>& embeddings);

// Differentiable per-class mean of embedding rows. Rows of the result are
// ordered by ascending class id; class_ids_out (if given) receives that
// order. Gradients flow back into the embeddings through the mean.
Tensor prototype_matrix(const Tensor& embeddings, const std::vector<int>& labels,
                        std::vector<int>* class_ids_out = nullptr);

// Plain cosine similarity, clamped to [-1 + eps, 1 - eps]. Throws on a
// zero-norm operand ("degenerate embedding").
double cosine_sim(const std::vector<double>& a, const std::vector<double>& b,
                  double clamp_epsilon);

// Differentiable [n, m] matrix of clamped cosine similarities between the
// rows of a and the rows of b. Throws when any row has near-zero norm.
Tensor cosine_matrix(const Tensor& a, const Tensor& b, double clamp_epsilon);

struct CpeLossOptions {
  bool detach_prototypes = false;  // treat prototypes as constants per step
  bool leave_one_out = false;      // exclude the anchor from its own positive
                                   // prototype (needs >= 2 members; classes
                                   // with a single member fall back)
};

// Angular-margin loss over cosine similarities. label_rows[k] indexes the
// prototype row of instance k's class. cos(theta + m) is computed as
// cos*cos(m) - sin*sin(m) with sin = sqrt(1 - cos^2) after clamping.
Tensor cpe_loss(const Tensor& embeddings, const Tensor& prototypes,
                const std::vector<int>& label_rows, const CpeConfig& cfg,
                const CpeLossOptions& options = {});

}  // namespace spl
