#include "spl/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace spl {

GradCheckResult grad_check(
    const std::function<Tensor(const std::vector<Tensor>&)>& fn,
    const std::vector<Tensor>& inputs, double epsilon, double tolerance) {
  if (epsilon < 1e-7 || epsilon > 1e-3)
    throw std::invalid_argument("grad_check: epsilon outside [1e-7, 1e-3]");

  // Analytic pass on requires_grad copies of the inputs.
  std::vector<Tensor> leaves;
  leaves.reserve(inputs.size());
  for (const Tensor& t : inputs)
    leaves.push_back(Tensor::from_vector(t.shape(), t.values(), true));
  Tensor root = fn(leaves);
  if (root.size() != 1)
    throw std::invalid_argument("grad_check: fn must return a scalar, got " +
                                shape_str(root.shape()));
  if (!std::isfinite(root.item()))
    throw std::invalid_argument("grad_check: fn returned a non-finite value");
  root.backward();
  std::vector<std::vector<double>> analytic;
  for (Tensor& t : leaves)
    analytic.push_back(t.has_grad() ? t.grad()
                                    : std::vector<double>(t.size(), 0.0));

  // Central differences on plain value tensors.
  auto eval = [&](const std::vector<std::vector<double>>& data) {
    std::vector<Tensor> args;
    args.reserve(inputs.size());
    for (size_t i = 0; i < inputs.size(); ++i)
      args.push_back(Tensor::from_vector(inputs[i].shape(), data[i], false));
    return fn(args).item();
  };
  std::vector<std::vector<double>> data;
  for (const Tensor& t : inputs) data.push_back(t.values());

  GradCheckResult result;
  result.per_input_max.assign(inputs.size(), 0.0);
  for (size_t i = 0; i < inputs.size(); ++i) {
    for (size_t j = 0; j < data[i].size(); ++j) {
      const double saved = data[i][j];
      data[i][j] = saved + epsilon;
      const double fp = eval(data);
      data[i][j] = saved - epsilon;
      const double fm = eval(data);
      data[i][j] = saved;
      const double numeric = (fp - fm) / (2.0 * epsilon);
      const double a = analytic[i][j];
      const double denom = std::max({1.0, std::fabs(a), std::fabs(numeric)});
      const double err = std::fabs(a - numeric) / denom;
      result.per_input_max[i] = std::max(result.per_input_max[i], err);
    }
    result.max_rel_error = std::max(result.max_rel_error, result.per_input_max[i]);
  }
  result.passed = result.max_rel_error <= tolerance;
  return result;
}

}  // namespace spl
