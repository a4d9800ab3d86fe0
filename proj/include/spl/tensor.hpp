#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace spl {

using Shape = std::vector<int64_t>;

int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One node of the per-forward-pass tape. Parents and the backward closure
// are recorded only when a gradient path exists, and are released as soon
// as backward() finishes.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  int64_t size() const { return static_cast<int64_t>(value.size()); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

// Dense row-major tensor of 64-bit floats with reverse-mode differentiation.
// Copies are cheap handles onto a shared node; values are treated as
// immutable once a forward pass has consumed them.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from_vector(Shape shape, std::vector<double> data,
                            bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  int64_t size() const;
  int64_t dim(int axis) const;  // negative axis counts from the back

  const std::vector<double>& values() const;
  std::vector<double>& mutable_values();  // for constructing leaf inputs
  double item() const;                    // requires numel == 1

  bool requires_grad() const;
  bool has_grad() const;
  const std::vector<double>& grad() const;  // throws when absent
  void zero_grad();

  // Reverse-mode pass from a scalar root. Accumulates gradients into every
  // requires_grad leaf reachable from the root, then frees the tape.
  void backward();

  std::shared_ptr<detail::Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Named trainable tensor; names are unique within a model.
struct Parameter {
  std::string name;
  Tensor tensor;
};

bool all_finite(const Tensor& t);

namespace detail {
bool& grad_mode();
}

// Disables tape recording in scope; forward values are unaffected.
struct NoGradGuard {
  NoGradGuard() : prev_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// ---- differentiable operations -------------------------------------------
// Binary elementwise ops broadcast with the standard trailing-axes rule.

Tensor matmul(const Tensor& a, const Tensor& b);  // 2-D x 2-D
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor neg(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);
Tensor pow_const(const Tensor& a, double exponent);  // a >= 0 expected
Tensor clamp(const Tensor& a, double lo, double hi);

Tensor softmax(const Tensor& a);    // over the last axis
Tensor logsumexp(const Tensor& a);  // over the last axis; drops it
Tensor max_last(const Tensor& a);   // max over the last axis; grad to argmax
Tensor sum_last(const Tensor& a);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);
// L2-normalizes each row of the last axis. Rows with norm < zero_eps come
// back as zeros; *degenerate_flag (if given) is set when that happens.
Tensor l2_normalize(const Tensor& x, double zero_eps = 1e-12,
                    bool* degenerate_flag = nullptr);

Tensor reshape(const Tensor& x, Shape new_shape);
Tensor transpose(const Tensor& x);  // 2-D
Tensor gather_rows(const Tensor& x, std::vector<int64_t> rows);
Tensor gather_elements(const Tensor& x, std::vector<int64_t> flat_idx,
                       Shape out_shape);
// fill_mask has either numel(x) entries or dim(-1) entries (broadcast over
// leading axes); nonzero mask entries are overwritten with value.
Tensor masked_fill(const Tensor& x, const std::vector<uint8_t>& fill_mask,
                   double value);
Tensor concat_rows(const std::vector<Tensor>& parts);  // 2-D, equal cols
Tensor sum(const Tensor& x);   // scalar
Tensor mean(const Tensor& x);  // scalar
Tensor detach(const Tensor& x);
// x is a [in_h*in_w, C] grid of C-dim cells; bilinear resample to
// [out_h*out_w, C] (half-pixel centers).
Tensor upsample_bilinear(const Tensor& x, int in_h, int in_w, int out_h,
                         int out_w);

}  // namespace spl
