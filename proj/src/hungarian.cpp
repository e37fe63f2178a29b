#include "cyclecap/hungarian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cyclecap/error.hpp"

namespace cyclecap {

namespace {

using Index = std::vector<std::size_t>;

// Shortest-augmenting-path Kuhn-Munkres on the sub-matrix cost[rows][cols],
// requiring rows.size() <= cols.size(). Returns, per row position, the
// column position it is assigned to.
std::vector<std::size_t> solve_rows_le_cols(const Matrix& cost, const Index& rows, const Index& cols,
                                            bool transposed) {
  const std::size_t n = rows.size(), m = cols.size();
  auto at = [&](std::size_t r, std::size_t c) {
    return transposed ? cost(cols[c], rows[r]) : cost(rows[r], cols[c]);
  };
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
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
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> assign(n, 0);
  for (std::size_t j = 1; j <= m; ++j)
    if (p[j] != 0) assign[p[j] - 1] = j - 1;
  return assign;
}

// Optimal assignment restricted to the given rows/cols as (row, col) pairs.
std::vector<std::pair<std::size_t, std::size_t>> solve(const Matrix& cost, const Index& rows, const Index& cols) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  if (rows.empty() || cols.empty()) return out;
  if (rows.size() <= cols.size()) {
    const auto a = solve_rows_le_cols(cost, rows, cols, false);
    for (std::size_t r = 0; r < rows.size(); ++r) out.emplace_back(rows[r], cols[a[r]]);
  } else {
    const auto a = solve_rows_le_cols(cost, cols, rows, true);
    for (std::size_t c = 0; c < cols.size(); ++c) out.emplace_back(rows[a[c]], cols[c]);
  }
  return out;
}

double optimum(const Matrix& cost, const Index& rows, const Index& cols) {
  double s = 0.0;
  for (const auto& [i, j] : solve(cost, rows, cols)) s += cost(i, j);
  return s;
}

Index without(const Index& v, std::size_t x) {
  Index out;
  out.reserve(v.size());
  for (auto e : v)
    if (e != x) out.push_back(e);
  return out;
}

}  // namespace

Matching hungarian(const Matrix& cost) {
  require(cost.all_finite(), "hungarian: non-finite cost entry");
  Matching result;
  const std::size_t n = cost.rows(), m = cost.cols();
  if (n == 0 || m == 0) return result;

  Index rows(n), cols(m);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  for (std::size_t j = 0; j < m; ++j) cols[j] = j;

  const auto base = solve(cost, rows, cols);
  double best = 0.0;
  for (const auto& [i, j] : base) best += cost(i, j);
  double scale = 1.0;
  for (double v : cost.values()) scale = std::max(scale, std::abs(v));
  const double tol = 1e-12 * scale * static_cast<double>(std::min(n, m));
  auto is_opt = [&](double total) { return std::abs(total - best) <= tol; };

  // Column by column, commit the smallest row that still admits an optimal
  // completion; leave the column unmatched only when that is optimal and
  // the pair count allows it.
  double fixed = 0.0;
  Index free_rows = rows, free_cols = cols;
  for (std::size_t j = 0; j < m; ++j) {
    const Index rest_cols = without(free_cols, j);
    bool placed = false;
    for (std::size_t i : free_rows) {
      const Index rest_rows = without(free_rows, i);
      if (is_opt(fixed + cost(i, j) + optimum(cost, rest_rows, rest_cols))) {
        result.pairs.emplace_back(i, j);
        fixed += cost(i, j);
        free_rows = rest_rows;
        placed = true;
        break;
      }
    }
    if (!placed && free_rows.size() > rest_cols.size()) {
      // Rounding defeated the tie search; fall back to the base solution.
      result.pairs.clear();
      for (const auto& pr : base) result.pairs.push_back(pr);
      std::sort(result.pairs.begin(), result.pairs.end(),
                [](const auto& a, const auto& b) { return a.second < b.second; });
      return result;
    }
    free_cols = rest_cols;
    if (free_rows.empty()) break;
  }
  return result;
}

double matching_cost(const Matrix& cost, const Matching& m) {
  double s = 0.0;
  for (const auto& [i, j] : m.pairs) s += cost(i, j);
  return s;
}

}  // namespace cyclecap
