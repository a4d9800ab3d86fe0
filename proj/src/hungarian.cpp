#include "spl/hungarian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace spl {

namespace {

// Potentials-based shortest augmenting path, O(n^2 m); expects n <= m.
// cost(i, j) is 0-indexed; returns col index per row.
std::vector<int> solve(const std::vector<double>& cost, int n, int m) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<size_t>(n) + 1, 0.0);
  std::vector<double> v(static_cast<size_t>(m) + 1, 0.0);
  std::vector<int> p(static_cast<size_t>(m) + 1, 0);
  std::vector<int> way(static_cast<size_t>(m) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<size_t>(m) + 1, kInf);
    std::vector<char> used(static_cast<size_t>(m) + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = kInf;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur =
            cost[static_cast<size_t>(i0 - 1) * m + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> row_to_col(static_cast<size_t>(n), -1);
  for (int j = 1; j <= m; ++j)
    if (p[j] != 0) row_to_col[static_cast<size_t>(p[j]) - 1] = j - 1;
  return row_to_col;
}

}  // namespace

std::vector<std::pair<int, int>> hungarian_match(const std::vector<double>& cost,
                                                 int n_rows, int n_cols) {
  if (n_rows <= 0 || n_cols <= 0) return {};
  if (cost.size() != static_cast<size_t>(n_rows) * n_cols)
    throw std::invalid_argument("hungarian: cost matrix size mismatch");
  for (double c : cost)
    if (std::isnan(c)) throw std::invalid_argument("hungarian: NaN cost");

  std::vector<std::pair<int, int>> pairs;
  if (n_rows <= n_cols) {
    const auto row_to_col = solve(cost, n_rows, n_cols);
    for (int i = 0; i < n_rows; ++i) pairs.emplace_back(i, row_to_col[i]);
  } else {
    std::vector<double> t(cost.size());
    for (int i = 0; i < n_rows; ++i)
      for (int j = 0; j < n_cols; ++j)
        t[static_cast<size_t>(j) * n_rows + i] = cost[static_cast<size_t>(i) * n_cols + j];
    const auto col_to_row = solve(t, n_cols, n_rows);
    for (int j = 0; j < n_cols; ++j) pairs.emplace_back(col_to_row[j], j);
    std::sort(pairs.begin(), pairs.end());
  }
  return pairs;
}

}  // namespace spl
