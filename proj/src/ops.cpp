#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "spl/kernels.hpp"
#include "spl/tensor.hpp"

namespace spl {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

Tensor make_op(Shape shape, std::vector<double> value,
               std::vector<NodePtr> parents, std::function<void(Node&)> bw) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  if (detail::grad_mode())
    for (const auto& p : parents)
      if (p->requires_grad) {
        n->requires_grad = true;
        break;
      }
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backward = std::move(bw);
  }
  return Tensor(std::move(n));
}


struct BcastPlan {
  Shape out_shape;
  bool identical = false;
  std::vector<int64_t> oa, ob;  // source offsets per output element
};

BcastPlan make_bcast(const Shape& a, const Shape& b, const char* op) {
  BcastPlan plan;
  if (a == b) {
    plan.out_shape = a;
    plan.identical = true;
    return plan;
  }
  const int ra = static_cast<int>(a.size());
  const int rb = static_cast<int>(b.size());
  const int r = std::max(ra, rb);
  Shape pa(r, 1), pb(r, 1), out(r, 1);
  std::copy(a.begin(), a.end(), pa.begin() + (r - ra));
  std::copy(b.begin(), b.end(), pb.begin() + (r - rb));
  for (int i = 0; i < r; ++i) {
    if (pa[i] == pb[i])
      out[i] = pa[i];
    else if (pa[i] == 1)
      out[i] = pb[i];
    else if (pb[i] == 1)
      out[i] = pa[i];
    else
      throw std::invalid_argument(std::string(op) + ": shapes " + shape_str(a) +
                                  " and " + shape_str(b) +
                                  " are not broadcast-compatible");
  }
  plan.out_shape = out;
  // Row-major strides with 0 on broadcast axes.
  std::vector<int64_t> sa(r, 0), sb(r, 0);
  int64_t acc = 1;
  for (int i = r - 1; i >= 0; --i) {
    sa[i] = (pa[i] == 1) ? 0 : acc;
    acc *= pa[i];
  }
  acc = 1;
  for (int i = r - 1; i >= 0; --i) {
    sb[i] = (pb[i] == 1) ? 0 : acc;
    acc *= pb[i];
  }
  const int64_t n = numel(out);
  plan.oa.resize(n);
  plan.ob.resize(n);
  std::vector<int64_t> coord(r, 0);
  int64_t offa = 0, offb = 0;
  for (int64_t i = 0; i < n; ++i) {
    plan.oa[i] = offa;
    plan.ob[i] = offb;
    for (int ax = r - 1; ax >= 0; --ax) {
      if (++coord[ax] < out[ax]) {
        offa += sa[ax];
        offb += sb[ax];
        break;
      }
      offa -= sa[ax] * (out[ax] - 1);
      offb -= sb[ax] * (out[ax] - 1);
      coord[ax] = 0;
    }
  }
  return plan;
}

// f(av, bv) -> value; dfa/dfb(av, bv) -> partials.
template <class F, class DA, class DB>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, F f,
                 DA dfa, DB dfb) {
  BcastPlan plan = make_bcast(a.shape(), b.shape(), name);
  const auto& av = a.values();
  const auto& bv = b.values();
  const int64_t n = numel(plan.out_shape);
  std::vector<double> out(static_cast<size_t>(n));
  if (plan.identical) {
    for (int64_t i = 0; i < n; ++i) out[i] = f(av[i], bv[i]);
  } else {
    for (int64_t i = 0; i < n; ++i) out[i] = f(av[plan.oa[i]], bv[plan.ob[i]]);
  }
  NodePtr pa = a.node(), pb = b.node();
  Shape out_shape = plan.out_shape;
  auto shared_plan = std::make_shared<BcastPlan>(std::move(plan));
  auto bw = [pa, pb, shared_plan, dfa, dfb](Node& o) {
    const int64_t n = o.size();
    const bool ga = pa->requires_grad, gb = pb->requires_grad;
    if (ga) pa->ensure_grad();
    if (gb) pb->ensure_grad();
    for (int64_t i = 0; i < n; ++i) {
      const int64_t ia = shared_plan->identical ? i : shared_plan->oa[i];
      const int64_t ib = shared_plan->identical ? i : shared_plan->ob[i];
      const double g = o.grad[i];
      if (ga) pa->grad[ia] += g * dfa(pa->value[ia], pb->value[ib]);
      if (gb) pb->grad[ib] += g * dfb(pa->value[ia], pb->value[ib]);
    }
  };
  return make_op(std::move(out_shape), std::move(out), {pa, pb}, std::move(bw));
}

// f(x) -> value, df(x, y) -> dy/dx.
template <class F, class DF>
Tensor unary_op(const Tensor& a, F f, DF df) {
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  NodePtr pa = a.node();
  auto bw = [pa, df](Node& o) {
    pa->ensure_grad();
    for (size_t i = 0; i < o.value.size(); ++i)
      pa->grad[i] += o.grad[i] * df(pa->value[i], o.value[i]);
  };
  return make_op(a.shape(), std::move(out), {pa}, std::move(bw));
}

void check_last_axis(const Tensor& a, const char* op) {
  if (a.rank() == 0)
    throw std::invalid_argument(std::string(op) + ": rank-0 tensor has no axis");
  if (a.dim(-1) == 0)
    throw std::invalid_argument(std::string(op) + ": empty last axis in " +
                                shape_str(a.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "minimum", [](double x, double y) { return x <= y ? x : y; },
      [](double x, double y) { return x <= y ? 1.0 : 0.0; },
      [](double x, double y) { return x <= y ? 0.0 : 1.0; });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "maximum", [](double x, double y) { return x >= y ? x : y; },
      [](double x, double y) { return x >= y ? 1.0 : 0.0; },
      [](double x, double y) { return x >= y ? 0.0 : 1.0; });
}

Tensor scale(const Tensor& a, double c) {
  return unary_op(
      a, [c](double x) { return x * c; }, [c](double, double) { return c; });
}

Tensor add_scalar(const Tensor& a, double c) {
  return unary_op(
      a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor abs(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor relu(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return unary_op(
      a,
      [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x, double) {
        return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) +
               x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
      });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& a) {
  return unary_op(
      a,
      [](double x) {
        return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
      },
      [](double x, double) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      });
}

Tensor exp(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

Tensor square(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Tensor pow_const(const Tensor& a, double exponent) {
  return unary_op(
      a, [exponent](double x) { return std::pow(x, exponent); },
      [exponent](double x, double y) {
        return x > 0.0 ? exponent * y / x
                       : (exponent == 1.0 ? 1.0 : 0.0);  // subgradient at 0
      });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (lo > hi) throw std::invalid_argument("clamp: lo > hi");
  return unary_op(
      a, [lo, hi](double x) { return std::min(hi, std::max(lo, x)); },
      [lo, hi](double x, double) { return (x < lo || x > hi) ? 0.0 : 1.0; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw std::invalid_argument("matmul: expects 2-D operands, got " +
                                shape_str(a.shape()) + " and " +
                                shape_str(b.shape()));
  const int64_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2)
    throw std::invalid_argument("matmul: inner extents differ, " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  std::vector<double> out(static_cast<size_t>(m * n));
  kernels::matmul(a.values().data(), b.values().data(), out.data(), m, k, n);
  NodePtr pa = a.node(), pb = b.node();
  auto bw = [pa, pb, m, k, n](Node& o) {
    if (pa->requires_grad) {
      // dA = dC * B^T
      std::vector<double> bt(static_cast<size_t>(n * k));
      for (int64_t r = 0; r < k; ++r)
        for (int64_t c = 0; c < n; ++c) bt[c * k + r] = pb->value[r * n + c];
      std::vector<double> da(static_cast<size_t>(m * k));
      kernels::matmul(o.grad.data(), bt.data(), da.data(), m, n, k);
      pa->ensure_grad();
      for (size_t i = 0; i < da.size(); ++i) pa->grad[i] += da[i];
    }
    if (pb->requires_grad) {
      // dB = A^T * dC
      std::vector<double> at(static_cast<size_t>(k * m));
      for (int64_t r = 0; r < m; ++r)
        for (int64_t c = 0; c < k; ++c) at[c * m + r] = pa->value[r * k + c];
      std::vector<double> db(static_cast<size_t>(k * n));
      kernels::matmul(at.data(), o.grad.data(), db.data(), k, m, n);
      pb->ensure_grad();
      for (size_t i = 0; i < db.size(); ++i) pb->grad[i] += db[i];
    }
  };
  return make_op({m, n}, std::move(out), {pa, pb}, std::move(bw));
}

Tensor softmax(const Tensor& a) {
  check_last_axis(a, "softmax");
  const int64_t cols = a.dim(-1);
  const int64_t rows = a.size() / cols;
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (int64_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * cols;
    double* y = out.data() + r * cols;
    double mx = x[0];
    for (int64_t c = 1; c < cols; ++c) mx = std::max(mx, x[c]);
    double s = 0.0;
    for (int64_t c = 0; c < cols; ++c) {
      y[c] = std::exp(x[c] - mx);
      s += y[c];
    }
    for (int64_t c = 0; c < cols; ++c) y[c] /= s;
  }
  NodePtr pa = a.node();
  auto bw = [pa, rows, cols](Node& o) {
    pa->ensure_grad();
    for (int64_t r = 0; r < rows; ++r) {
      const double* y = o.value.data() + r * cols;
      const double* g = o.grad.data() + r * cols;
      double dot = 0.0;
      for (int64_t c = 0; c < cols; ++c) dot += g[c] * y[c];
      for (int64_t c = 0; c < cols; ++c)
        pa->grad[r * cols + c] += y[c] * (g[c] - dot);
    }
  };
  return make_op(a.shape(), std::move(out), {pa}, std::move(bw));
}

Tensor logsumexp(const Tensor& a) {
  check_last_axis(a, "logsumexp");
  const int64_t cols = a.dim(-1);
  const int64_t rows = a.size() / cols;
  const auto& av = a.values();
  std::vector<double> out(static_cast<size_t>(rows));
  for (int64_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * cols;
    double mx = x[0];
    for (int64_t c = 1; c < cols; ++c) mx = std::max(mx, x[c]);
    double s = 0.0;
    for (int64_t c = 0; c < cols; ++c) s += std::exp(x[c] - mx);
    out[r] = mx + std::log(s);
  }
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  NodePtr pa = a.node();
  auto bw = [pa, rows, cols](Node& o) {
    pa->ensure_grad();
    for (int64_t r = 0; r < rows; ++r) {
      const double lse = o.value[r];
      const double g = o.grad[r];
      for (int64_t c = 0; c < cols; ++c)
        pa->grad[r * cols + c] += g * std::exp(pa->value[r * cols + c] - lse);
    }
  };
  return make_op(std::move(out_shape), std::move(out), {pa}, std::move(bw));
}

Tensor max_last(const Tensor& a) {
  check_last_axis(a, "max_last");
  const int64_t cols = a.dim(-1);
  const int64_t rows = a.size() / cols;
  const auto& av = a.values();
  std::vector<double> out(static_cast<size_t>(rows));
  auto argmax = std::make_shared<std::vector<int64_t>>(rows);
  for (int64_t r = 0; r < rows; ++r) {
    int64_t best = 0;
    for (int64_t c = 1; c < cols; ++c)
      if (av[r * cols + c] > av[r * cols + best]) best = c;
    (*argmax)[r] = best;
    out[r] = av[r * cols + best];
  }
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  NodePtr pa = a.node();
  auto bw = [pa, argmax, cols](Node& o) {
    pa->ensure_grad();
    for (size_t r = 0; r < o.value.size(); ++r)
      pa->grad[static_cast<int64_t>(r) * cols + (*argmax)[r]] += o.grad[r];
  };
  return make_op(std::move(out_shape), std::move(out), {pa}, std::move(bw));
}

Tensor sum_last(const Tensor& a) {
  check_last_axis(a, "sum_last");
  const int64_t cols = a.dim(-1);
  const int64_t rows = a.size() / cols;
  const auto& av = a.values();
  std::vector<double> out(static_cast<size_t>(rows), 0.0);
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) out[r] += av[r * cols + c];
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  NodePtr pa = a.node();
  auto bw = [pa, rows, cols](Node& o) {
    pa->ensure_grad();
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < cols; ++c) pa->grad[r * cols + c] += o.grad[r];
  };
  return make_op(std::move(out_shape), std::move(out), {pa}, std::move(bw));
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  check_last_axis(x, "layer_norm");
  const int64_t cols = x.dim(-1);
  if (gamma.size() != cols || beta.size() != cols)
    throw std::invalid_argument("layer_norm: gamma/beta must have " +
                                std::to_string(cols) + " elements");
  const int64_t rows = x.size() / cols;
  const auto& xv = x.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  std::vector<double> out(xv.size());
  auto stats = std::make_shared<std::vector<double>>(2 * rows);  // mu, inv
  for (int64_t r = 0; r < rows; ++r) {
    const double* xp = xv.data() + r * cols;
    double mu = 0.0;
    for (int64_t c = 0; c < cols; ++c) mu += xp[c];
    mu /= cols;
    double var = 0.0;
    for (int64_t c = 0; c < cols; ++c) var += (xp[c] - mu) * (xp[c] - mu);
    var /= cols;
    const double inv = 1.0 / std::sqrt(var + eps);
    (*stats)[2 * r] = mu;
    (*stats)[2 * r + 1] = inv;
    for (int64_t c = 0; c < cols; ++c)
      out[r * cols + c] = gv[c] * (xp[c] - mu) * inv + bv[c];
  }
  NodePtr px = x.node(), pg = gamma.node(), pb = beta.node();
  auto bw = [px, pg, pb, stats, rows, cols](Node& o) {
    const bool need_x = px->requires_grad;
    const bool need_g = pg->requires_grad;
    const bool need_b = pb->requires_grad;
    if (need_x) px->ensure_grad();
    if (need_g) pg->ensure_grad();
    if (need_b) pb->ensure_grad();
    for (int64_t r = 0; r < rows; ++r) {
      const double mu = (*stats)[2 * r];
      const double inv = (*stats)[2 * r + 1];
      const double* xp = px->value.data() + r * cols;
      const double* g = o.grad.data() + r * cols;
      if (need_g || need_b) {
        for (int64_t c = 0; c < cols; ++c) {
          if (need_g) pg->grad[c] += g[c] * (xp[c] - mu) * inv;
          if (need_b) pb->grad[c] += g[c];
        }
      }
      if (!need_x) continue;
      double sum_dxhat = 0.0, sum_dxhat_xc = 0.0;
      for (int64_t c = 0; c < cols; ++c) {
        const double dxhat = g[c] * pg->value[c];
        sum_dxhat += dxhat;
        sum_dxhat_xc += dxhat * (xp[c] - mu);
      }
      for (int64_t c = 0; c < cols; ++c) {
        const double dxhat = g[c] * pg->value[c];
        px->grad[r * cols + c] +=
            inv * (dxhat - sum_dxhat / cols -
                   (xp[c] - mu) * inv * inv * sum_dxhat_xc / cols);
      }
    }
  };
  return make_op(x.shape(), std::move(out), {px, pg, pb}, std::move(bw));
}

Tensor l2_normalize(const Tensor& x, double zero_eps, bool* degenerate_flag) {
  check_last_axis(x, "l2_normalize");
  const int64_t cols = x.dim(-1);
  const int64_t rows = x.size() / cols;
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  auto norms = std::make_shared<std::vector<double>>(rows);
  for (int64_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (int64_t c = 0; c < cols; ++c) s += xv[r * cols + c] * xv[r * cols + c];
    const double norm = std::sqrt(s);
    (*norms)[r] = norm;
    if (norm < zero_eps) {
      if (degenerate_flag) *degenerate_flag = true;
      for (int64_t c = 0; c < cols; ++c) out[r * cols + c] = 0.0;
    } else {
      for (int64_t c = 0; c < cols; ++c) out[r * cols + c] = xv[r * cols + c] / norm;
    }
  }
  NodePtr px = x.node();
  auto bw = [px, norms, rows, cols, zero_eps](Node& o) {
    px->ensure_grad();
    for (int64_t r = 0; r < rows; ++r) {
      const double norm = (*norms)[r];
      if (norm < zero_eps) continue;  // degenerate rows block the gradient
      const double* y = o.value.data() + r * cols;
      const double* g = o.grad.data() + r * cols;
      double dot = 0.0;
      for (int64_t c = 0; c < cols; ++c) dot += g[c] * y[c];
      for (int64_t c = 0; c < cols; ++c)
        px->grad[r * cols + c] += (g[c] - dot * y[c]) / norm;
    }
  };
  return make_op(x.shape(), std::move(out), {px}, std::move(bw));
}

Tensor reshape(const Tensor& x, Shape new_shape) {
  if (numel(new_shape) != x.size())
    throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) +
                                " as " + shape_str(new_shape));
  NodePtr px = x.node();
  auto bw = [px](Node& o) {
    px->ensure_grad();
    for (size_t i = 0; i < o.grad.size(); ++i) px->grad[i] += o.grad[i];
  };
  return make_op(std::move(new_shape), x.values(), {px}, std::move(bw));
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2)
    throw std::invalid_argument("transpose: expects a 2-D tensor, got " +
                                shape_str(x.shape()));
  const int64_t r = x.dim(0), c = x.dim(1);
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
  NodePtr px = x.node();
  auto bw = [px, r, c](Node& o) {
    px->ensure_grad();
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < c; ++j) px->grad[i * c + j] += o.grad[j * r + i];
  };
  return make_op({c, r}, std::move(out), {px}, std::move(bw));
}

Tensor gather_rows(const Tensor& x, std::vector<int64_t> rows) {
  if (x.rank() != 2)
    throw std::invalid_argument("gather_rows: expects a 2-D tensor");
  const int64_t nrows = x.dim(0), cols = x.dim(1);
  for (int64_t r : rows)
    if (r < 0 || r >= nrows)
      throw std::out_of_range("gather_rows: row index " + std::to_string(r) +
                              " outside [0," + std::to_string(nrows) + ")");
  const auto& xv = x.values();
  std::vector<double> out(rows.size() * static_cast<size_t>(cols));
  for (size_t i = 0; i < rows.size(); ++i)
    std::copy(xv.begin() + rows[i] * cols, xv.begin() + (rows[i] + 1) * cols,
              out.begin() + static_cast<int64_t>(i) * cols);
  NodePtr px = x.node();
  auto idx = std::make_shared<std::vector<int64_t>>(std::move(rows));
  auto bw = [px, idx, cols](Node& o) {
    px->ensure_grad();
    for (size_t i = 0; i < idx->size(); ++i)
      for (int64_t c = 0; c < cols; ++c)
        px->grad[(*idx)[i] * cols + c] += o.grad[static_cast<int64_t>(i) * cols + c];
  };
  return make_op({static_cast<int64_t>(idx->size()), cols}, std::move(out),
                 {px}, std::move(bw));
}

Tensor gather_elements(const Tensor& x, std::vector<int64_t> flat_idx,
                       Shape out_shape) {
  if (numel(out_shape) != static_cast<int64_t>(flat_idx.size()))
    throw std::invalid_argument("gather_elements: index count does not match " +
                                shape_str(out_shape));
  const auto& xv = x.values();
  for (int64_t i : flat_idx)
    if (i < 0 || i >= static_cast<int64_t>(xv.size()))
      throw std::out_of_range("gather_elements: flat index out of range");
  std::vector<double> out(flat_idx.size());
  for (size_t i = 0; i < flat_idx.size(); ++i) out[i] = xv[flat_idx[i]];
  NodePtr px = x.node();
  auto idx = std::make_shared<std::vector<int64_t>>(std::move(flat_idx));
  auto bw = [px, idx](Node& o) {
    px->ensure_grad();
    for (size_t i = 0; i < idx->size(); ++i) px->grad[(*idx)[i]] += o.grad[i];
  };
  return make_op(std::move(out_shape), std::move(out), {px}, std::move(bw));
}

Tensor masked_fill(const Tensor& x, const std::vector<uint8_t>& fill_mask,
                   double value) {
  const int64_t n = x.size();
  const int64_t last = x.rank() > 0 ? x.dim(-1) : 1;
  const bool per_last = static_cast<int64_t>(fill_mask.size()) == last && last != n;
  if (!per_last && static_cast<int64_t>(fill_mask.size()) != n)
    throw std::invalid_argument(
        "masked_fill: mask must cover all elements or the last axis");
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  auto mask = std::make_shared<std::vector<uint8_t>>(fill_mask);
  for (int64_t i = 0; i < n; ++i) {
    const bool fill = (*mask)[per_last ? i % last : i] != 0;
    out[i] = fill ? value : xv[i];
  }
  NodePtr px = x.node();
  auto bw = [px, mask, per_last, last](Node& o) {
    px->ensure_grad();
    for (size_t i = 0; i < o.grad.size(); ++i) {
      const bool fill = (*mask)[per_last ? i % last : i] != 0;
      if (!fill) px->grad[i] += o.grad[i];
    }
  };
  return make_op(x.shape(), std::move(out), {px}, std::move(bw));
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty input");
  const int64_t cols = parts[0].dim(1);
  int64_t rows = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != 2 || p.dim(1) != cols)
      throw std::invalid_argument("concat_rows: column extents differ");
    rows += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(static_cast<size_t>(rows * cols));
  std::vector<NodePtr> parents;
  for (const Tensor& p : parts) {
    out.insert(out.end(), p.values().begin(), p.values().end());
    parents.push_back(p.node());
  }
  auto bw = [parents](Node& o) {
    size_t off = 0;
    for (const NodePtr& p : parents) {
      if (p->requires_grad) {
        p->ensure_grad();
        for (size_t i = 0; i < p->value.size(); ++i) p->grad[i] += o.grad[off + i];
      }
      off += p->value.size();
    }
  };
  return make_op({rows, cols}, std::move(out), parents, std::move(bw));
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  NodePtr px = x.node();
  auto bw = [px](Node& o) {
    px->ensure_grad();
    for (double& g : px->grad) g += o.grad[0];
  };
  return make_op({}, {s}, {px}, std::move(bw));
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw std::invalid_argument("mean: empty tensor");
  const double inv = 1.0 / static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x.values()) s += v;
  NodePtr px = x.node();
  auto bw = [px, inv](Node& o) {
    px->ensure_grad();
    for (double& g : px->grad) g += o.grad[0] * inv;
  };
  return make_op({}, {s * inv}, {px}, std::move(bw));
}

Tensor detach(const Tensor& x) {
  return Tensor::from_vector(x.shape(), x.values(), false);
}

Tensor upsample_bilinear(const Tensor& x, int in_h, int in_w, int out_h,
                         int out_w) {
  if (x.rank() != 2 || x.dim(0) != static_cast<int64_t>(in_h) * in_w)
    throw std::invalid_argument("upsample_bilinear: grid shape mismatch");
  const int64_t ch = x.dim(1);
  struct Tap {
    int64_t src[4];
    double w[4];
  };
  auto taps = std::make_shared<std::vector<Tap>>(static_cast<size_t>(out_h) *
                                                 out_w);
  for (int oy = 0; oy < out_h; ++oy) {
    double sy = (oy + 0.5) * in_h / out_h - 0.5;
    sy = std::min(std::max(sy, 0.0), static_cast<double>(in_h - 1));
    const int y0 = static_cast<int>(sy);
    const int y1 = std::min(y0 + 1, in_h - 1);
    const double fy = sy - y0;
    for (int ox = 0; ox < out_w; ++ox) {
      double sx = (ox + 0.5) * in_w / out_w - 0.5;
      sx = std::min(std::max(sx, 0.0), static_cast<double>(in_w - 1));
      const int x0 = static_cast<int>(sx);
      const int x1 = std::min(x0 + 1, in_w - 1);
      const double fx = sx - x0;
      Tap& t = (*taps)[static_cast<size_t>(oy) * out_w + ox];
      t.src[0] = static_cast<int64_t>(y0) * in_w + x0;
      t.src[1] = static_cast<int64_t>(y0) * in_w + x1;
      t.src[2] = static_cast<int64_t>(y1) * in_w + x0;
      t.src[3] = static_cast<int64_t>(y1) * in_w + x1;
      t.w[0] = (1 - fy) * (1 - fx);
      t.w[1] = (1 - fy) * fx;
      t.w[2] = fy * (1 - fx);
      t.w[3] = fy * fx;
    }
  }
  const auto& xv = x.values();
  std::vector<double> out(taps->size() * static_cast<size_t>(ch));
  for (size_t o = 0; o < taps->size(); ++o) {
    const Tap& t = (*taps)[o];
    for (int64_t c = 0; c < ch; ++c) {
      double acc = 0.0;
      for (int i = 0; i < 4; ++i) acc += t.w[i] * xv[t.src[i] * ch + c];
      out[o * ch + c] = acc;
    }
  }
  NodePtr px = x.node();
  auto bw = [px, taps, ch](Node& o) {
    px->ensure_grad();
    for (size_t p = 0; p < taps->size(); ++p) {
      const Tap& t = (*taps)[p];
      for (int64_t c = 0; c < ch; ++c) {
        const double g = o.grad[p * ch + c];
        for (int i = 0; i < 4; ++i) px->grad[t.src[i] * ch + c] += g * t.w[i];
      }
    }
  };
  return make_op({static_cast<int64_t>(taps->size()), ch}, std::move(out), {px},
                 std::move(bw));
}

}  // namespace spl
