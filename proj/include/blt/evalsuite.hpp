#pragma once

// Evaluation protocols for fitted factor models: differential language
// analysis, convergent correlation matrices, test-retest stability and
// dropout reliability.

#include "blt/align.hpp"
#include "blt/common.hpp"
#include "blt/corpus.hpp"
#include "blt/factors.hpp"
#include "blt/utm.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace blt::evalsuite {

struct DlaEntry {
  std::string token;
  double r = 0.0;
  double mean_frequency = 0.0;
  int tier = 0;  // 1 (rare) .. 3 (frequent): vocabulary terciles of mean frequency
};

struct DlaFactor {
  int factor = 0;
  std::vector<DlaEntry> positive;  // r descending
  std::vector<DlaEntry> negative;  // r ascending
};

struct DlaReport {
  std::size_t users = 0;
  int top_n = 0;
  std::vector<std::string> controls;  // empty, or {"age", "gender"}
  std::vector<std::string> skipped_terms;  // constant after residualization
  std::vector<DlaFactor> factors;
};

/// Correlates every term's relative-frequency column with every score
/// column. With controls both sides are residualized on intercept, age and
/// gender first. Rows of `matrix`, `scores` and `controls` must list the
/// same users in the same order.
DlaReport dla(const utm::UserTermMatrix& matrix, const factors::FactorScores& scores, int top_n,
              const utm::Demographics* controls = nullptr);

/// Pearson r per term (columns) for one score vector, partialling out an
/// intercept plus the columns of `controls` (may have zero columns). Empty
/// entries for terms that are constant after projection.
std::vector<std::optional<double>> term_correlations(const utm::SparseMatrix& values, const Vector& score,
                                                     const Matrix& controls);

struct ConvergentReport {
  std::vector<std::string> a_names;
  std::vector<std::string> b_names;  // rearranged order
  std::vector<int> b_order;          // original B column for each displayed column
  Matrix r;                          // a x b in displayed order
  align::Assignment assignment;
};

/// Full correlation matrix of A's columns against B's, with B's columns
/// reordered so matched columns sit on the diagonal. Unmatched B columns
/// follow in their original order.
ConvergentReport convergent_matrix(const Matrix& a, const Matrix& b, std::vector<std::string> a_names,
                                   std::vector<std::string> b_names);

struct RetestOptions {
  double train_fraction = 0.75;
  int period_months = 6;
  std::size_t min_period_tokens = 50;
  std::size_t min_common_users = 10;
  int max_periods = 0;  // 0: every period holding test messages
  std::uint64_t seed = 1;
  utm::VocabularyConfig vocabulary;
  factors::FactorSpec spec;
};

inline constexpr double kDaysPerMonth = 30.44;

struct RetestPeriod {
  std::int64_t start = 0;  // unix seconds, inclusive
  std::int64_t end = 0;    // exclusive
  std::size_t users = 0;   // users scored in this period
  std::size_t common_with_first = 0;
  bool missing = false;  // fewer common users with period 0 than required
  std::vector<std::optional<double>> r_vs_first;    // per factor
  std::vector<std::optional<double>> r_vs_previous;  // per factor, empty for period 0
  std::size_t common_with_previous = 0;
};

struct RetestReport {
  std::size_t train_messages = 0;
  std::size_t test_messages = 0;
  std::size_t train_users = 0;
  std::size_t vocabulary = 0;
  int k = 0;
  std::string model_hash;
  factors::FactorModel model;  // fitted on the training portion
  std::vector<RetestPeriod> periods;

  /// Mean of r_vs_first over periods after the first, per factor.
  std::vector<std::optional<double>> cross_period_mean() const;
};

/// Splits messages (not users) at random into train and test portions, fits
/// on the train aggregate, buckets test messages into fixed windows from the
/// earliest test timestamp, and correlates per-period scores.
RetestReport test_retest(const corpus::UserCorpus& corpus, const RetestOptions& options);

struct DropoutOptions {
  double drop_fraction = 0.2;
  int runs = 100;
  std::uint64_t seed_base = 1;
  int threads = 1;
  factors::FactorSpec spec;
};

struct DropoutPair {
  int a = 0;
  int b = 0;
  double mean_abs_r = 0.0;
};

struct DropoutReport {
  int runs = 0;
  double drop_fraction = 0.0;
  std::size_t training_users = 0;
  std::size_t holdout_users = 0;
  std::vector<std::string> run_model_hashes;
  std::vector<DropoutPair> pairs;
  std::optional<double> grand_mean;  // empty when fewer than two runs
  bool insufficient_runs = false;
};

/// Refits the factor pipeline `runs` times, each time without a seeded
/// random `drop_fraction` of training users, scores the fixed holdout
/// matrix, and averages aligned |r| over every pair of runs.
DropoutReport dropout_reliability(const utm::UserTermMatrix& training, const utm::UserTermMatrix& holdout,
                                  const DropoutOptions& options);

/// Users kept in dropout run `run`, ascending row indices.
std::vector<std::size_t> dropout_keep(std::size_t users, double drop_fraction, std::uint64_t seed_base, int run);

}  // namespace blt::evalsuite
