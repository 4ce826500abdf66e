#pragma once

// Sparse user-term matrices of relative frequencies, column standardization
// and demographic residualization.

#include "blt/common.hpp"
#include "blt/corpus.hpp"

#include <Eigen/SparseCore>

#include <filesystem>
#include <string>
#include <vector>

namespace blt::utm {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor, std::int64_t>;

struct VocabularyConfig {
  std::size_t max_terms = 10000;
  double min_user_fraction = 0.01;
};

/// Tokens used by at least `min_user_fraction` of users, ranked by number of
/// distinct users (descending, ties lexicographic), truncated to `max_terms`.
std::vector<std::string> select_vocabulary(const corpus::UserCorpus& corpus, std::size_t max_terms,
                                           double min_user_fraction);

inline std::vector<std::string> select_vocabulary(const corpus::UserCorpus& corpus, const VocabularyConfig& cfg) {
  return select_vocabulary(corpus, cfg.max_terms, cfg.min_user_fraction);
}

/// Rows are users, columns vocabulary terms. values(u, t) = count(u, t) /
/// total_tokens(u), where the denominator counts every token of the user,
/// in vocabulary or not.
struct UserTermMatrix {
  std::vector<std::string> user_ids;
  std::vector<std::string> vocabulary;
  SparseMatrix values;
  SparseMatrix raw_counts;
  Vector total_tokens;
  std::vector<std::string> dropped_users;  // no in-vocabulary tokens

  std::size_t users() const noexcept { return user_ids.size(); }
  std::size_t terms() const noexcept { return vocabulary.size(); }
  Matrix dense() const { return Matrix(values); }

  /// Row subset in the given order.
  UserTermMatrix rows(const std::vector<std::size_t>& indices) const;
};

UserTermMatrix build_matrix(const corpus::UserCorpus& corpus, const std::vector<std::string>& vocabulary);

struct ColumnStats {
  std::vector<std::string> vocabulary;
  Vector mean;
  Vector std;  // population standard deviation

  bool zero_variance(Eigen::Index column) const { return !(std(column) > 0.0); }
  std::size_t zero_variance_count() const;
};

ColumnStats column_stats(const UserTermMatrix& matrix);

struct Standardized {
  Matrix z;
  ColumnStats stats;
};

/// Z-scores every column. With `stats` the supplied (training) statistics are
/// used and must match the matrix vocabulary; otherwise fresh statistics are
/// computed. Zero-variance columns become all-zero columns.
Standardized standardize(const UserTermMatrix& matrix, const ColumnStats* stats = nullptr);
Matrix standardize_dense(const Matrix& values, const ColumnStats& stats);

/// Covariates for residualization; rows align with `user_ids`.
struct Demographics {
  std::vector<std::string> user_ids;
  Vector age;     // years, centered
  Vector gender;  // 1 = female, 0 = otherwise

  std::size_t size() const noexcept { return user_ids.size(); }
};

/// Builds covariates for the listed users. Users lacking age or a known
/// gender are reported through `missing` and get no row.
Demographics demographics_for(const corpus::UserCorpus& corpus, const std::vector<std::string>& user_ids,
                              std::vector<std::string>* missing = nullptr);

struct Residualized {
  Matrix values;
  std::vector<std::string> dropped_regressors;  // collinear covariates removed from the design
};

/// Replaces every column by its OLS residual on [intercept, age, gender].
Residualized residualize(const Matrix& values, const Demographics& demo);

/// Persists a matrix as a directory holding vocabulary.txt, users.txt,
/// matrix.csr and stats.json.
void save_matrix(const std::filesystem::path& dir, const UserTermMatrix& matrix, const ColumnStats& stats);
UserTermMatrix load_matrix(const std::filesystem::path& dir);

/// matrix.csr layout (little-endian): u64 rows, u64 cols, (rows + 1) u64 row
/// pointers, nnz u64 column indices, nnz f64 values.
std::string encode_csr(const SparseMatrix& m);
SparseMatrix decode_csr(std::string_view bytes);

void save_stats(const std::filesystem::path& path, const ColumnStats& stats);
ColumnStats load_stats(const std::filesystem::path& path, std::vector<std::string> vocabulary);

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines);
std::vector<std::string> read_lines(const std::filesystem::path& path);

}  // namespace blt::utm
