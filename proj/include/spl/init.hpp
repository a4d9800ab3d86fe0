#pragma once

#include <cmath>
#include <string>

#include "spl/rng.hpp"
#include "spl/tensor.hpp"

namespace spl {

inline Parameter xavier_param(const std::string& name, int in, int out,
                              Rng& rng) {
  const double limit = std::sqrt(6.0 / (in + out));
  std::vector<double> w(static_cast<size_t>(in) * out);
  for (double& x : w) x = rng.uniform(-limit, limit);
  return {name, Tensor::from_vector({in, out}, std::move(w), true)};
}

inline Parameter zeros_param(const std::string& name, Shape shape) {
  return {name, Tensor::zeros(std::move(shape), true)};
}

inline Parameter ones_param(const std::string& name, Shape shape) {
  return {name, Tensor::full(std::move(shape), 1.0, true)};
}

}  // namespace spl
