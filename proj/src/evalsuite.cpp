#include "blt/evalsuite.hpp"

#include "blt/predict.hpp"
#include "blt/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>
#include <unordered_map>

namespace blt::evalsuite {

namespace {

// Orthonormal basis of [1, controls].
Matrix control_basis(const Matrix& controls) {
  const Eigen::Index n = controls.rows();
  if (controls.cols() == 0) return Matrix::Constant(n, 1, 1.0 / std::sqrt(static_cast<double>(n)));
  Matrix design(n, controls.cols() + 1);
  design << Vector::Ones(n), controls;
  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  qr.setThreshold(1e-10);
  const auto rank = qr.rank();
  Matrix q = qr.householderQ() * Matrix::Identity(n, rank);
  return q;
}

std::vector<std::optional<double>> correlate(const utm::SparseMatrix& values, const Vector& score, const Matrix& basis,
                                             const Vector& column_sq, const Matrix& qtx) {
  const auto p = values.cols();
  const Vector xts = values.transpose() * score;
  Vector qts = basis.transpose() * score;
  const double score_var = score.squaredNorm() - qts.squaredNorm();
  std::vector<std::optional<double>> out(static_cast<std::size_t>(p));
  if (!(score_var > 1e-12 * score.squaredNorm())) return out;
  for (Eigen::Index j = 0; j < p; ++j) {
    const double var = column_sq(j) - qtx.col(j).squaredNorm();
    if (!(column_sq(j) > 0.0) || !(var > 1e-12 * column_sq(j))) continue;
    const double num = xts(j) - qtx.col(j).dot(qts);
    out[static_cast<std::size_t>(j)] = std::clamp(num / std::sqrt(var * score_var), -1.0, 1.0);
  }
  return out;
}

Vector column_squares(const utm::SparseMatrix& values) {
  Vector sq = Vector::Zero(values.cols());
  for (Eigen::Index i = 0; i < values.outerSize(); ++i) {
    for (utm::SparseMatrix::InnerIterator e(values, i); e; ++e) sq(e.col()) += e.value() * e.value();
  }
  return sq;
}

}  // namespace

std::vector<std::optional<double>> term_correlations(const utm::SparseMatrix& values, const Vector& score,
                                                     const Matrix& controls) {
  if (controls.rows() != values.rows()) throw Error("evalsuite", "controls do not match the matrix rows");
  const Matrix basis = control_basis(controls);
  const Matrix qtx = (values.transpose() * basis).transpose();
  return correlate(values, score, basis, column_squares(values), qtx);
}

DlaReport dla(const utm::UserTermMatrix& matrix, const factors::FactorScores& scores, int top_n,
              const utm::Demographics* controls) {
  if (top_n < 0) throw Error("evalsuite", "top_n must be non-negative");
  if (matrix.user_ids != scores.user_ids) throw Error("evalsuite", "DLA matrix and scores cover different users");
  if (controls != nullptr && controls->user_ids != matrix.user_ids) {
    throw Error("evalsuite", "DLA controls cover different users");
  }
  DlaReport report;
  report.users = matrix.users();
  report.top_n = top_n;
  if (controls != nullptr) report.controls = {"age", "gender"};
  if (top_n == 0 || matrix.users() < 3) return report;

  const auto n = static_cast<Eigen::Index>(matrix.users());
  const auto p = static_cast<Eigen::Index>(matrix.terms());
  Matrix control_columns(n, controls != nullptr ? 2 : 0);
  if (controls != nullptr) control_columns << controls->age, controls->gender;
  const Matrix basis = control_basis(control_columns);
  const Matrix qtx = (matrix.values.transpose() * basis).transpose();
  const Vector column_sq = column_squares(matrix.values);

  Vector mean_freq = Vector::Zero(p);
  for (Eigen::Index i = 0; i < matrix.values.outerSize(); ++i) {
    for (utm::SparseMatrix::InnerIterator e(matrix.values, i); e; ++e) mean_freq(e.col()) += e.value();
  }
  mean_freq /= static_cast<double>(n);
  std::vector<std::size_t> by_freq(static_cast<std::size_t>(p));
  std::iota(by_freq.begin(), by_freq.end(), std::size_t{0});
  std::stable_sort(by_freq.begin(), by_freq.end(), [&](std::size_t a, std::size_t b) {
    return mean_freq(static_cast<Eigen::Index>(a)) < mean_freq(static_cast<Eigen::Index>(b));
  });
  std::vector<int> tier(static_cast<std::size_t>(p));
  for (std::size_t rank = 0; rank < by_freq.size(); ++rank) {
    tier[by_freq[rank]] = 1 + static_cast<int>(3 * rank / by_freq.size());
  }

  std::vector<char> skipped(static_cast<std::size_t>(p), 0);
  for (Eigen::Index f = 0; f < scores.scores.cols(); ++f) {
    const Vector score = scores.scores.col(f);
    const auto r = correlate(matrix.values, score, basis, column_sq, qtx);
    std::vector<DlaEntry> entries;
    bool score_constant = true;
    for (Eigen::Index j = 0; j < p; ++j) {
      const auto& rj = r[static_cast<std::size_t>(j)];
      if (!rj) continue;
      score_constant = false;
      entries.push_back({matrix.vocabulary[static_cast<std::size_t>(j)], *rj, mean_freq(j), tier[static_cast<std::size_t>(j)]});
    }
    if (!score_constant) {
      for (Eigen::Index j = 0; j < p; ++j) {
        if (!r[static_cast<std::size_t>(j)]) skipped[static_cast<std::size_t>(j)] = 1;
      }
    }
    DlaFactor factor;
    factor.factor = static_cast<int>(f);
    auto positive = entries;
    std::sort(positive.begin(), positive.end(), [](const DlaEntry& a, const DlaEntry& b) {
      return a.r != b.r ? a.r > b.r : a.token < b.token;
    });
    auto negative = std::move(entries);
    std::sort(negative.begin(), negative.end(), [](const DlaEntry& a, const DlaEntry& b) {
      return a.r != b.r ? a.r < b.r : a.token < b.token;
    });
    const auto keep = static_cast<std::size_t>(top_n);
    if (positive.size() > keep) positive.resize(keep);
    if (negative.size() > keep) negative.resize(keep);
    factor.positive = std::move(positive);
    factor.negative = std::move(negative);
    report.factors.push_back(std::move(factor));
  }
  for (Eigen::Index j = 0; j < p; ++j) {
    if (skipped[static_cast<std::size_t>(j)]) report.skipped_terms.push_back(matrix.vocabulary[static_cast<std::size_t>(j)]);
  }
  return report;
}

ConvergentReport convergent_matrix(const Matrix& a, const Matrix& b, std::vector<std::string> a_names,
                                   std::vector<std::string> b_names) {
  if (a.rows() != b.rows()) throw Error("evalsuite", "convergent matrix inputs cover different numbers of users");
  if (a_names.empty()) {
    for (Eigen::Index i = 0; i < a.cols(); ++i) a_names.push_back("A" + std::to_string(i + 1));
  }
  if (b_names.empty()) {
    for (Eigen::Index i = 0; i < b.cols(); ++i) b_names.push_back("B" + std::to_string(i + 1));
  }
  if (static_cast<Eigen::Index>(a_names.size()) != a.cols() || static_cast<Eigen::Index>(b_names.size()) != b.cols()) {
    throw Error("evalsuite", "convergent matrix names do not match the column counts");
  }
  ConvergentReport report;
  report.assignment = align::align_columns(a, b);
  std::vector<char> used(static_cast<std::size_t>(b.cols()), 0);
  for (int j : report.assignment.permutation) {
    if (j >= 0) {
      report.b_order.push_back(j);
      used[static_cast<std::size_t>(j)] = 1;
    }
  }
  for (Eigen::Index j = 0; j < b.cols(); ++j) {
    if (!used[static_cast<std::size_t>(j)]) report.b_order.push_back(static_cast<int>(j));
  }
  const Matrix full = align::cross_correlation(a, b);
  report.r.resize(a.cols(), b.cols());
  for (std::size_t c = 0; c < report.b_order.size(); ++c) {
    report.r.col(static_cast<Eigen::Index>(c)) = full.col(report.b_order[c]);
    report.b_names.push_back(b_names[static_cast<std::size_t>(report.b_order[c])]);
  }
  report.a_names = std::move(a_names);
  return report;
}

std::vector<std::optional<double>> RetestReport::cross_period_mean() const {
  std::vector<std::optional<double>> out(static_cast<std::size_t>(k));
  for (std::size_t f = 0; f < out.size(); ++f) {
    double total = 0.0;
    int count = 0;
    for (std::size_t t = 1; t < periods.size(); ++t) {
      if (periods[t].missing || f >= periods[t].r_vs_first.size()) continue;
      if (const auto& r = periods[t].r_vs_first[f]) {
        total += *r;
        ++count;
      }
    }
    if (count > 0) out[f] = total / count;
  }
  return out;
}

namespace {

struct ScoredPeriod {
  std::unordered_map<std::string, Eigen::Index> row_of;
  factors::FactorScores scores;
};

void correlate_periods(const ScoredPeriod& a, const ScoredPeriod& b, int k, std::size_t min_common,
                       std::size_t& common, std::vector<std::optional<double>>& r, bool& missing) {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> rows;
  for (std::size_t i = 0; i < a.scores.user_ids.size(); ++i) {
    auto it = b.row_of.find(a.scores.user_ids[i]);
    if (it != b.row_of.end()) rows.emplace_back(static_cast<Eigen::Index>(i), it->second);
  }
  common = rows.size();
  r.assign(static_cast<std::size_t>(k), std::nullopt);
  missing = common < min_common;
  if (missing) return;
  Vector x(static_cast<Eigen::Index>(rows.size())), y(static_cast<Eigen::Index>(rows.size()));
  for (int f = 0; f < k; ++f) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      x(static_cast<Eigen::Index>(i)) = a.scores.scores(rows[i].first, f);
      y(static_cast<Eigen::Index>(i)) = b.scores.scores(rows[i].second, f);
    }
    r[static_cast<std::size_t>(f)] = predict::pearson_r(x, y);
  }
}

}  // namespace

RetestReport test_retest(const corpus::UserCorpus& corpus, const RetestOptions& options) {
  if (!(options.train_fraction > 0.0 && options.train_fraction < 1.0)) {
    throw Error("evalsuite", "train_fraction must lie in (0, 1)");
  }
  if (options.period_months < 1) throw Error("evalsuite", "period_months must be at least 1");
  if (!corpus.all_timestamped) throw Error("evalsuite", "test-retest needs a timestamp on every message");

  // Message-level split, drawn in user order then message order.
  Rng rng(options.seed);
  std::vector<std::vector<char>> is_train(corpus.users.size());
  RetestReport report;
  std::optional<std::int64_t> anchor;
  for (std::size_t u = 0; u < corpus.users.size(); ++u) {
    const auto& msgs = corpus.users[u].messages;
    is_train[u].resize(msgs.size());
    for (std::size_t m = 0; m < msgs.size(); ++m) {
      is_train[u][m] = rng.uniform() < options.train_fraction ? 1 : 0;
      if (is_train[u][m]) {
        ++report.train_messages;
      } else {
        ++report.test_messages;
        const auto ts = *msgs[m].timestamp;
        if (!anchor || ts < *anchor) anchor = ts;
      }
    }
  }
  if (!anchor) throw Error("evalsuite", "test-retest split left no test messages");

  const auto train = corpus::subset_messages(corpus, [&](std::size_t u, std::size_t m) { return is_train[u][m] != 0; });
  const auto vocabulary = utm::select_vocabulary(train, options.vocabulary);
  if (vocabulary.empty()) throw Error("evalsuite", "test-retest training portion selected an empty vocabulary");
  const auto train_matrix = utm::build_matrix(train, vocabulary);
  const auto fitted = factors::fit_factors(train_matrix, options.spec);
  report.train_users = train_matrix.users();
  report.vocabulary = vocabulary.size();
  report.k = fitted.model.k;
  report.model_hash = fitted.scores.model_hash;
  report.model = fitted.model;

  const auto window = static_cast<std::int64_t>(std::llround(options.period_months * kDaysPerMonth * 86400.0));
  auto period_of = [&](std::int64_t ts) { return static_cast<int>((ts - *anchor) / window); };
  int periods = 0;
  for (std::size_t u = 0; u < corpus.users.size(); ++u) {
    const auto& msgs = corpus.users[u].messages;
    for (std::size_t m = 0; m < msgs.size(); ++m) {
      if (!is_train[u][m]) periods = std::max(periods, period_of(*msgs[m].timestamp) + 1);
    }
  }
  if (options.max_periods > 0) periods = std::min(periods, options.max_periods);

  std::vector<ScoredPeriod> scored(static_cast<std::size_t>(periods));
  for (int t = 0; t < periods; ++t) {
    auto part = corpus::subset_messages(corpus, [&](std::size_t u, std::size_t m) {
      const auto& msg = corpus.users[u].messages[m];
      return !is_train[u][m] && period_of(*msg.timestamp) == t;
    });
    std::erase_if(part.users, [&](const corpus::UserRecord& user) {
      return user.total_token_count < options.min_period_tokens;
    });
    RetestPeriod period;
    period.start = *anchor + t * window;
    period.end = period.start + window;
    auto& sp = scored[static_cast<std::size_t>(t)];
    if (!part.users.empty()) {
      const auto matrix = utm::build_matrix(part, vocabulary);
      sp.scores = factors::score_matrix(fitted.model, matrix);
      for (std::size_t i = 0; i < sp.scores.user_ids.size(); ++i) {
        sp.row_of.emplace(sp.scores.user_ids[i], static_cast<Eigen::Index>(i));
      }
    }
    period.users = sp.scores.user_ids.size();
    report.periods.push_back(std::move(period));
  }

  for (int t = 0; t < periods; ++t) {
    auto& period = report.periods[static_cast<std::size_t>(t)];
    correlate_periods(scored[0], scored[static_cast<std::size_t>(t)], report.k, options.min_common_users,
                      period.common_with_first, period.r_vs_first, period.missing);
    if (t > 0) {
      bool adjacent_missing = false;
      correlate_periods(scored[static_cast<std::size_t>(t - 1)], scored[static_cast<std::size_t>(t)], report.k,
                        options.min_common_users, period.common_with_previous, period.r_vs_previous, adjacent_missing);
    }
  }
  return report;
}

std::vector<std::size_t> dropout_keep(std::size_t users, double drop_fraction, std::uint64_t seed_base, int run) {
  std::vector<std::size_t> order(users);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(seed_base, static_cast<std::uint64_t>(run)));
  rng.shuffle(order.begin(), order.end());
  const auto drop = static_cast<std::size_t>(std::llround(drop_fraction * static_cast<double>(users)));
  std::vector<std::size_t> keep(order.begin() + static_cast<std::ptrdiff_t>(std::min(drop, users)), order.end());
  std::sort(keep.begin(), keep.end());
  return keep;
}

DropoutReport dropout_reliability(const utm::UserTermMatrix& training, const utm::UserTermMatrix& holdout,
                                  const DropoutOptions& options) {
  if (!(options.drop_fraction >= 0.0 && options.drop_fraction < 1.0)) {
    throw Error("evalsuite", "drop_fraction must lie in [0, 1)");
  }
  if (options.runs < 1) throw Error("evalsuite", "dropout needs at least one run");
  if (training.vocabulary != holdout.vocabulary) {
    throw Error("evalsuite", "dropout training and holdout matrices use different vocabularies");
  }
  DropoutReport report;
  report.runs = options.runs;
  report.drop_fraction = options.drop_fraction;
  report.training_users = training.users();
  report.holdout_users = holdout.users();

  const auto runs = static_cast<std::size_t>(options.runs);
  std::vector<factors::FactorScores> scores(runs);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t run = next++; run < runs; run = next++) {
      try {
        const auto keep = dropout_keep(training.users(), options.drop_fraction, options.seed_base, static_cast<int>(run));
        const auto fitted = factors::fit_factors(training.rows(keep), options.spec);
        scores[run] = factors::score_matrix(fitted.model, holdout);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const auto thread_count = static_cast<std::size_t>(std::clamp(options.threads, 1, options.runs));
  if (thread_count == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < thread_count; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  for (const auto& s : scores) report.run_model_hashes.push_back(s.model_hash);
  if (runs < 2) {
    report.insufficient_runs = true;
    return report;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < runs; ++i) {
    for (std::size_t j = i + 1; j < runs; ++j) {
      const auto assignment = align::align_scores(scores[i], scores[j]);
      report.pairs.push_back({static_cast<int>(i), static_cast<int>(j), assignment.mean_abs_r});
      total += assignment.mean_abs_r;
    }
  }
  report.grand_mean = total / static_cast<double>(report.pairs.size());
  return report;
}

}  // namespace blt::evalsuite
