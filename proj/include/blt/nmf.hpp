#pragma once

// Non-negative factorization of a binary user x like matrix into broad
// like categories.

#include "blt/common.hpp"

#include <Eigen/SparseCore>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace blt::nmf {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor, std::int64_t>;

struct LikesMatrix {
  std::vector<std::string> user_ids;  // sorted
  std::vector<std::string> like_ids;  // by popularity, ties lexicographic
  SparseMatrix values;                // 1 where the user liked the item

  std::size_t users() const noexcept { return user_ids.size(); }
  std::size_t likes() const noexcept { return like_ids.size(); }
};

/// CSV with header user_id,like_id, one row per like event. Only the
/// `top_n` items with most distinct users are kept; repeated events count
/// once.
LikesMatrix load_likes(const std::filesystem::path& path, std::size_t top_n = 10000);
LikesMatrix parse_likes(std::string_view contents, std::size_t top_n = 10000);
LikesMatrix likes_from_dense(const Matrix& values);

/// Keeps the listed users in the given order; unknown users get empty rows.
LikesMatrix restrict_users(const LikesMatrix& m, const std::vector<std::string>& user_ids);

struct NmfModel {
  std::vector<std::string> user_ids;
  std::vector<std::string> like_ids;
  Matrix w;  // users x rank
  Matrix h;  // rank x likes
  int rank = 0;
  int iterations = 0;  // updates applied; fewer than requested after an early stop
  std::uint64_t seed = 0;
  std::vector<double> objective;  // squared Frobenius error; [0] at initialization
};

inline constexpr double kEpsilon = 1e-12;

/// Multiplicative updates for min ||M - WH||_F^2 from a seeded uniform
/// initialization. Stops early, keeping the previous factors, once an update
/// fails to lower the evaluated objective.
NmfModel fit_nmf(const LikesMatrix& m, int rank, int iterations = 500, std::uint64_t seed = 1);

/// Squared Frobenius reconstruction error, accumulated row by row.
double reconstruction_error(const SparseMatrix& m, const Matrix& w, const Matrix& h);

inline constexpr int kUnassigned = -1;

/// Argmax of each W row (ties: lower index); all-zero rows are unassigned.
std::vector<int> cluster_assign(const NmfModel& model);
int argmax_row(const Eigen::Ref<const Eigen::RowVectorXd>& row);

/// Top-n like ids of a cluster by H weight, descending; ties lexicographic.
std::vector<std::string> top_items(const NmfModel& model, int cluster, std::size_t n);

}  // namespace blt::nmf
