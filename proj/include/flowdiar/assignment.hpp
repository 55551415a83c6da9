// Copyright (c) 2026 FlowDiar Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FLOWDIAR_ASSIGNMENT_HPP_
#define FLOWDIAR_ASSIGNMENT_HPP_

#include <limits>
#include <vector>

namespace flowdiar {

// Kuhn-Munkres shortest-augmenting-path solver, O(n^3), square cost matrix.
// Returns row_to_col and the minimal total cost.
inline double min_cost_assignment(const std::vector<std::vector<double>>& cost,
                                  std::vector<int>* row_to_col) {
  int n = static_cast<int>(cost.size());
  row_to_col->assign(static_cast<std::size_t>(n), -1);
  if (n == 0) return 0.0;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(n) + 1, 0);
  std::vector<int> way(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n) + 1, inf);
    std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      int i0 = p[static_cast<std::size_t>(j0)];
      int j1 = 0;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        double cur = cost[static_cast<std::size_t>(i0 - 1)]
                         [static_cast<std::size_t>(j - 1)] -
                     u[static_cast<std::size_t>(i0)] -
                     v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0);
  }
  double total = 0.0;
  for (int j = 1; j <= n; ++j) {
    int i = p[static_cast<std::size_t>(j)];
    if (i > 0) {
      (*row_to_col)[static_cast<std::size_t>(i - 1)] = j - 1;
      total += cost[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(j - 1)];
    }
  }
  return total;
}

// Maximum-weight matching over a (possibly rectangular) nonnegative score
// matrix. Entries equal to zero never produce a match; row_to_col is -1 for
// unmatched rows.
inline void max_score_assignment(const std::vector<std::vector<double>>& score,
                                 std::vector<int>* row_to_col) {
  std::size_t rows = score.size();
  std::size_t cols = rows ? score[0].size() : 0;
  std::size_t n = std::max(rows, cols);
  row_to_col->assign(rows, -1);
  if (n == 0) return;
  std::vector<std::vector<double>> cost(n, std::vector<double>(n, 0.0));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) cost[r][c] = -score[r][c];
  std::vector<int> sol;
  min_cost_assignment(cost, &sol);
  for (std::size_t r = 0; r < rows; ++r) {
    int c = sol[r];
    if (c >= 0 && static_cast<std::size_t>(c) < cols && score[r][static_cast<std::size_t>(c)] > 0.0) {
      (*row_to_col)[r] = c;
    }
  }
}

}  // namespace flowdiar

#endif  // FLOWDIAR_ASSIGNMENT_HPP_
