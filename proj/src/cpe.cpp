#include "spl/cpe.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace spl {

namespace {
constexpr double kHalfPi = 1.57079632679489661923;
constexpr double kNormFloor = 1e-12;

void check_row_norms(const Tensor& t, const char* what) {
  const int64_t rows = t.dim(0), cols = t.dim(1);
  const auto& v = t.values();
  for (int64_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (int64_t c = 0; c < cols; ++c) s += v[r * cols + c] * v[r * cols + c];
    if (std::sqrt(s) < kNormFloor)
      throw std::invalid_argument(std::string("cosine: degenerate embedding (") +
                                  what + " row " + std::to_string(r) +
                                  " has near-zero norm)");
  }
}
}  // namespace

void CpeConfig::validate() const {
  if (!(alpha > 0.0)) throw std::invalid_argument("cpe: alpha must be > 0");
  if (!(margin >= 0.0 && margin < kHalfPi))
    throw std::invalid_argument("cpe: margin must lie in [0, pi/2)");
  if (!(clamp_epsilon > 0.0 && clamp_epsilon < 1e-3))
    throw std::invalid_argument("cpe: clamp_epsilon must lie in (0, 1e-3)");
}

std::vector<ClassPrototype> class_prototypes(
    const std::vector<PromptEmbedding>& embeddings) {
  if (embeddings.empty())
    throw std::invalid_argument("class_prototypes: empty embedding set");
  const size_t d = embeddings.front().vector.size();
  std::map<int, ClassPrototype> by_class;
  for (const PromptEmbedding& e : embeddings) {
    if (e.vector.size() != d)
      throw std::invalid_argument("class_prototypes: inconsistent dimensions");
    ClassPrototype& proto = by_class[e.class_label];
    if (proto.member_count == 0) {
      proto.class_id = e.class_label;
      proto.vector.assign(d, 0.0);
    }
    for (size_t i = 0; i < d; ++i) proto.vector[i] += e.vector[i];
    proto.member_count += 1;
  }
  std::vector<ClassPrototype> out;
  out.reserve(by_class.size());
  for (auto& [id, proto] : by_class) {
    for (double& x : proto.vector) x /= proto.member_count;
    out.push_back(std::move(proto));
  }
  return out;
}

Tensor prototype_matrix(const Tensor& embeddings, const std::vector<int>& labels,
                        std::vector<int>* class_ids_out) {
  const int64_t n = embeddings.dim(0);
  if (static_cast<int64_t>(labels.size()) != n)
    throw std::invalid_argument("prototype_matrix: one label per embedding row");
  std::map<int, std::vector<int64_t>> members;
  for (int64_t r = 0; r < n; ++r) members[labels[r]].push_back(r);
  if (class_ids_out) {
    class_ids_out->clear();
    for (const auto& [id, rows] : members) class_ids_out->push_back(id);
  }
  std::vector<Tensor> rows;
  rows.reserve(members.size());
  for (const auto& [id, member_rows] : members) {
    auto gathered = gather_rows(embeddings, member_rows);
    // Mean via a constant averaging row keeps the op differentiable.
    auto avg = Tensor::full({1, static_cast<int64_t>(member_rows.size())},
                            1.0 / static_cast<double>(member_rows.size()));
    rows.push_back(matmul(avg, gathered));
  }
  return concat_rows(rows);
}

double cosine_sim(const std::vector<double>& a, const std::vector<double>& b,
                  double clamp_epsilon) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("cosine_sim: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na < kNormFloor || nb < kNormFloor)
    throw std::invalid_argument("cosine_sim: degenerate embedding (zero norm)");
  const double c = dot / (na * nb);
  return std::clamp(c, -1.0 + clamp_epsilon, 1.0 - clamp_epsilon);
}

Tensor cosine_matrix(const Tensor& a, const Tensor& b, double clamp_epsilon) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
    throw std::invalid_argument("cosine_matrix: rows of equal dimension required");
  check_row_norms(a, "left");
  check_row_norms(b, "right");
  auto an = l2_normalize(a);
  auto bn = l2_normalize(b);
  return clamp(matmul(an, transpose(bn)), -1.0 + clamp_epsilon,
               1.0 - clamp_epsilon);
}

Tensor cpe_loss(const Tensor& embeddings, const Tensor& prototypes,
                const std::vector<int>& label_rows, const CpeConfig& cfg,
                const CpeLossOptions& options) {
  cfg.validate();
  const int64_t n = embeddings.dim(0);
  const int64_t c = prototypes.dim(0);
  if (n < 1) throw std::invalid_argument("cpe_loss: empty batch");
  if (static_cast<int64_t>(label_rows.size()) != n)
    throw std::invalid_argument("cpe_loss: one label per instance");
  for (int y : label_rows)
    if (y < 0 || y >= c)
      throw std::invalid_argument("cpe_loss: label " + std::to_string(y) +
                                  " has no matching prototype");

  Tensor protos = options.detach_prototypes ? detach(prototypes) : prototypes;
  auto cos = cosine_matrix(embeddings, protos, cfg.clamp_epsilon);  // [n, c]

  Tensor cos_y;
  if (!options.leave_one_out) {
    std::vector<int64_t> idx(n);
    for (int64_t r = 0; r < n; ++r) idx[r] = r * c + label_rows[r];
    cos_y = gather_elements(cos, std::move(idx), {n});
  } else {
    // Positive prototype excludes the anchor: (p_c * m_c - e_k) / (m_c - 1).
    std::vector<int64_t> proto_rows(label_rows.begin(), label_rows.end());
    std::vector<double> member_count(n), loo(n);
    std::vector<int64_t> counts(c, 0);
    for (int y : label_rows) counts[y] += 1;
    for (int64_t r = 0; r < n; ++r) {
      member_count[r] = static_cast<double>(counts[label_rows[r]]);
      loo[r] = counts[label_rows[r]] >= 2 ? 1.0 : 0.0;
    }
    auto p_y = gather_rows(protos, proto_rows);  // [n, d]
    auto m_col = Tensor::from_vector({n, 1}, member_count);
    auto loo_col = Tensor::from_vector({n, 1}, loo);
    auto denom = maximum(add_scalar(m_col, -1.0), Tensor::full({n, 1}, 1.0));
    auto p_loo = div(sub(mul(p_y, m_col), embeddings), denom);
    auto p_pos = add(mul(loo_col, p_loo),
                     mul(sub(Tensor::full({n, 1}, 1.0), loo_col), p_y));
    check_row_norms(p_pos, "positive prototype");
    auto en = l2_normalize(embeddings);
    auto pn = l2_normalize(p_pos);
    cos_y = clamp(sum_last(mul(en, pn)), -1.0 + cfg.clamp_epsilon,
                  1.0 - cfg.clamp_epsilon);
  }

  const double cos_m = std::cos(cfg.margin);
  const double sin_m = std::sin(cfg.margin);
  auto sin_y = sqrt(sub(Tensor::full({n}, 1.0), square(cos_y)));
  auto a_y = scale(sub(scale(cos_y, cos_m), scale(sin_y, sin_m)), cfg.alpha);

  // Replace each row's true-class logit with the margin logit.
  std::vector<double> onehot(static_cast<size_t>(n) * c, 0.0);
  for (int64_t r = 0; r < n; ++r)
    onehot[static_cast<size_t>(r) * c + label_rows[r]] = 1.0;
  auto mask = Tensor::from_vector({n, c}, std::move(onehot));
  auto inv_mask = sub(Tensor::full({n, c}, 1.0), mask);
  auto logits = add(mul(scale(cos, cfg.alpha), inv_mask),
                    mul(reshape(a_y, {n, 1}), mask));

  return mean(sub(logsumexp(logits), a_y));
}

}  // namespace spl
