#include "spl/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace spl {

int64_t numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t e : shape) {
    if (e < 0) throw std::invalid_argument("shape: negative extent");
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  auto n = std::make_shared<detail::Node>();
  n->value.assign(static_cast<size_t>(numel(shape)), v);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::from_vector(Shape shape, std::vector<double> data,
                           bool requires_grad) {
  if (numel(shape) != static_cast<int64_t>(data.size()))
    throw std::invalid_argument("from_vector: " + shape_str(shape) +
                                " does not hold " + std::to_string(data.size()) +
                                " elements");
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from_vector({}, {v}, requires_grad);
}

const Shape& Tensor::shape() const {
  if (!node_) throw std::logic_error("tensor: undefined");
  return node_->shape;
}

int64_t Tensor::size() const { return static_cast<int64_t>(values().size()); }

int64_t Tensor::dim(int axis) const {
  const Shape& s = shape();
  const int r = static_cast<int>(s.size());
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r)
    throw std::invalid_argument("tensor: axis out of range for " + shape_str(s));
  return s[axis];
}

const std::vector<double>& Tensor::values() const {
  if (!node_) throw std::logic_error("tensor: undefined");
  return node_->value;
}

std::vector<double>& Tensor::mutable_values() {
  if (!node_) throw std::logic_error("tensor: undefined");
  return node_->value;
}

double Tensor::item() const {
  if (size() != 1)
    throw std::invalid_argument("item: tensor " + shape_str(shape()) +
                                " is not a scalar");
  return values()[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::has_grad() const {
  return node_ && node_->grad.size() == node_->value.size();
}

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw std::logic_error("tensor: no gradient present");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

void Tensor::backward() {
  if (size() != 1)
    throw std::invalid_argument("backward: root must be a scalar, got " +
                                shape_str(shape()));
  if (!node_->requires_grad) return;  // constant graph: nothing to do

  // Iterative post-order topological sort over the tape.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  struct Frame {
    detail::Node* n;
    size_t next_parent;
  };
  std::vector<Frame> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.n->parents.size()) {
      detail::Node* p = f.n->parents[f.next_parent++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  node_->grad.assign(1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward) {
      n->ensure_grad();
      n->backward(*n);
    }
  }
  // The tape is single-use: release parents and closures so intermediate
  // nodes free as their handles go out of scope.
  for (detail::Node* n : order) {
    n->parents.clear();
    n->backward = nullptr;
  }
}

bool all_finite(const Tensor& t) {
  for (double v : t.values())
    if (!std::isfinite(v)) return false;
  return true;
}

namespace detail {
bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

}  // namespace spl
