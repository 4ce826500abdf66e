#include "blt/align.hpp"

#include "blt/predict.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace blt::align {

namespace {

// Shortest augmenting path Hungarian algorithm with row/column potentials,
// O(n^3). Returns row -> column.
std::vector<int> solve_square(const Matrix& cost) {
  const auto n = static_cast<int>(cost.rows());
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
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
    } while (j0 != 0);
  }
  std::vector<int> assignment(n, -1);
  for (int j = 1; j <= n; ++j) {
    if (p[j] > 0) assignment[p[j] - 1] = j - 1;
  }
  return assignment;
}

double assignment_cost(const Matrix& cost, const std::vector<int>& assignment) {
  double total = 0.0;
  for (std::size_t i = 0; i < assignment.size(); ++i) total += cost(static_cast<Eigen::Index>(i), assignment[i]);
  return total;
}

double optimal_cost(const Matrix& cost) {
  if (cost.rows() == 0) return 0.0;
  return assignment_cost(cost, solve_square(cost));
}

}  // namespace

HungarianResult hungarian(const Matrix& cost, std::optional<double> pad_cost) {
  if (!cost.allFinite()) throw Error("align", "cost matrix has non-finite entries");
  const auto rows = cost.rows();
  const auto cols = cost.cols();
  const auto n = std::max(rows, cols);
  HungarianResult result;
  if (n == 0) return result;

  const double largest = cost.size() > 0 ? cost.cwiseAbs().maxCoeff() : 0.0;
  const double pad = pad_cost.value_or(largest + 1.0);
  Matrix square = Matrix::Constant(n, n, pad);
  square.topLeftCorner(rows, cols) = cost;

  const double optimum = optimal_cost(square);
  const double tol = 1e-12 * static_cast<double>(n) * std::max(1.0, std::max(largest, std::abs(pad)));

  // Lexicographic refinement: fix rows in order to the smallest column that
  // still admits an optimal completion.
  std::vector<int> assignment(static_cast<std::size_t>(n), -1);
  std::vector<char> column_used(static_cast<std::size_t>(n), 0);
  double fixed = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto rest = n - i - 1;
    bool placed = false;
    for (Eigen::Index j = 0; j < n && !placed; ++j) {
      if (column_used[static_cast<std::size_t>(j)]) continue;
      double completion = 0.0;
      if (rest > 0) {
        Matrix sub(rest, rest);
        Eigen::Index c = 0;
        for (Eigen::Index col = 0; col < n; ++col) {
          if (column_used[static_cast<std::size_t>(col)] || col == j) continue;
          sub.col(c++) = square.col(col).tail(rest);
        }
        completion = optimal_cost(sub);
      }
      if (fixed + square(i, j) + completion <= optimum + tol) {
        assignment[static_cast<std::size_t>(i)] = static_cast<int>(j);
        column_used[static_cast<std::size_t>(j)] = 1;
        fixed += square(i, j);
        placed = true;
      }
    }
    if (!placed) throw Error("align", "hungarian refinement failed to place a row");
  }

  result.assignment.assign(static_cast<std::size_t>(rows), -1);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const int j = assignment[static_cast<std::size_t>(i)];
    if (j < cols) {
      result.assignment[static_cast<std::size_t>(i)] = j;
      result.total_cost += cost(i, j);
    }
  }
  return result;
}

Matrix cross_correlation(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw Error("align", "score matrices have different numbers of users");
  Matrix r(a.cols(), b.cols());
  for (Eigen::Index i = 0; i < a.cols(); ++i) {
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      r(i, j) = predict::pearson_r(a.col(i), b.col(j)).value_or(std::numeric_limits<double>::quiet_NaN());
    }
  }
  return r;
}

Assignment align_columns(const Matrix& a, const Matrix& b) {
  const Matrix r = cross_correlation(a, b);
  Matrix cost(r.rows(), r.cols());
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    for (Eigen::Index j = 0; j < r.cols(); ++j) cost(i, j) = std::isnan(r(i, j)) ? 1.0 : 1.0 - std::abs(r(i, j));
  }
  const auto matched = hungarian(cost, 2.0);
  Assignment out;
  out.permutation = matched.assignment;
  std::size_t pairs = 0;
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    const int j = out.permutation[static_cast<std::size_t>(i)];
    if (j < 0) {
      out.signs.push_back(0);
      out.per_pair_r.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    const double rij = std::isnan(r(i, j)) ? 0.0 : r(i, j);
    out.signs.push_back(rij < 0.0 ? -1 : 1);
    out.per_pair_r.push_back(rij);
    out.objective += std::abs(rij);
    ++pairs;
  }
  out.mean_abs_r = pairs > 0 ? out.objective / static_cast<double>(pairs) : 0.0;
  return out;
}

Assignment align_scores(const factors::FactorScores& a, const factors::FactorScores& b) {
  if (a.user_ids != b.user_ids) throw Error("align", "score sets cover different users");
  return align_columns(a.scores, b.scores);
}

}  // namespace blt::align
