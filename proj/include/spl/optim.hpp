#pragma once

#include <cstdint>
#include <vector>

#include "spl/tensor.hpp"

namespace spl {

struct AdamWConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.05;
  // Linear warm-up: effective lr at step t is learning_rate * min(1, t/warmup),
  // constant afterwards.
  int64_t warmup_steps = 10;
};

// AdamW with decoupled weight decay. Owns first/second moment buffers per
// parameter; step() consumes and clears the accumulated gradients.
class AdamW {
 public:
  AdamW(std::vector<Parameter> params, AdamWConfig cfg);

  void step();       // throws if any parameter is missing its gradient
  void zero_grad();  // drops any accumulated gradients

  int64_t step_count() const { return step_; }
  // lr that the NEXT call to step() will apply.
  double next_effective_lr() const { return effective_lr(step_ + 1); }
  double effective_lr(int64_t step) const;
  const AdamWConfig& config() const { return cfg_; }

 private:
  std::vector<Parameter> params_;
  AdamWConfig cfg_;
  int64_t step_ = 0;
  std::vector<std::vector<double>> first_moment_;
  std::vector<std::vector<double>> second_moment_;
};

}  // namespace spl
