#pragma once

// Optimal one-to-one matching of factors across independently fitted models.

#include "blt/common.hpp"
#include "blt/factors.hpp"

#include <optional>
#include <vector>

namespace blt::align {

struct HungarianResult {
  std::vector<int> assignment;  // row -> column, -1 when matched to padding
  double total_cost = 0.0;      // sum over real pairs, accumulated in row order
};

/// Minimum-cost perfect matching. Rectangular inputs are padded to square
/// with `pad_cost` (default: one more than the largest |entry|). Among all
/// optimal matchings the lexicographically smallest row->column sequence is
/// returned. Throws on non-finite entries.
HungarianResult hungarian(const Matrix& cost, std::optional<double> pad_cost = std::nullopt);

struct Assignment {
  std::vector<int> permutation;  // column i of A -> column of B (-1 if unmatched)
  std::vector<int> signs;        // sign of the matched correlation
  std::vector<double> per_pair_r;
  double objective = 0.0;  // sum of |per_pair_r|
  double mean_abs_r = 0.0;
};

/// Matches columns of `a` to columns of `b` (same rows) by cost
/// 1 - |pearson r|; padding costs 2.
Assignment align_columns(const Matrix& a, const Matrix& b);

/// Same as align_columns after checking the two score sets cover the same
/// users in the same order.
Assignment align_scores(const factors::FactorScores& a, const factors::FactorScores& b);

/// Full Pearson correlation matrix between the columns of `a` and `b`.
Matrix cross_correlation(const Matrix& a, const Matrix& b);

}  // namespace blt::align
