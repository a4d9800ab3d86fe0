#include "spl/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace spl {

AdamW::AdamW(std::vector<Parameter> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  if (cfg_.learning_rate <= 0.0)
    throw std::invalid_argument("adamw: learning_rate must be > 0");
  if (cfg_.beta1 < 0.0 || cfg_.beta1 >= 1.0 || cfg_.beta2 < 0.0 ||
      cfg_.beta2 >= 1.0)
    throw std::invalid_argument("adamw: betas must lie in [0, 1)");
  std::unordered_set<std::string> names;
  for (const Parameter& p : params_) {
    if (!p.tensor.requires_grad())
      throw std::invalid_argument("adamw: parameter '" + p.name +
                                  "' does not require gradients");
    if (!names.insert(p.name).second)
      throw std::invalid_argument("adamw: duplicate parameter name '" + p.name +
                                  "'");
    first_moment_.emplace_back(p.tensor.size(), 0.0);
    second_moment_.emplace_back(p.tensor.size(), 0.0);
  }
}

double AdamW::effective_lr(int64_t step) const {
  if (cfg_.warmup_steps <= 0) return cfg_.learning_rate;
  const double frac =
      std::min(1.0, static_cast<double>(step) / static_cast<double>(cfg_.warmup_steps));
  return cfg_.learning_rate * frac;
}

void AdamW::step() {
  const int64_t t = step_ + 1;
  const double lr = effective_lr(t);
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t));
  for (size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = params_[i];
    if (!p.tensor.has_grad())
      throw std::runtime_error("adamw: missing gradient for parameter '" +
                               p.name + "'");
    const auto& g = p.tensor.grad();
    auto& w = p.tensor.mutable_values();
    auto& m = first_moment_[i];
    auto& v = second_moment_[i];
    for (size_t j = 0; j < w.size(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= lr * (mhat / (std::sqrt(vhat) + cfg_.epsilon) +
                    cfg_.weight_decay * w[j]);
    }
  }
  step_ = t;
  zero_grad();
}

void AdamW::zero_grad() {
  for (Parameter& p : params_) p.tensor.zero_grad();
}

}  // namespace spl
