#pragma once

#include <utility>
#include <vector>

namespace spl {

// Minimum-total-cost one-to-one assignment over a dense n_rows x n_cols cost
// matrix (row-major). Covers min(n_rows, n_cols) pairs; result is sorted by
// row index. Throws on NaN costs.
std::vector<std::pair<int, int>> hungarian_match(const std::vector<double>& cost,
                                                 int n_rows, int n_cols);

}  // namespace spl
