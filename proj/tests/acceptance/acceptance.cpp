// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include "blt/align.hpp"
#include "blt/cli.hpp"
#include "blt/evalsuite.hpp"
#include "blt/factors.hpp"
#include "blt/fixture.hpp"
#include "blt/io.hpp"
#include "blt/nmf.hpp"
#include "blt/predict.hpp"
#include "blt/serialize.hpp"
#include "blt/topics.hpp"
#include "support.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

using namespace blt;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

int worker_threads() { return static_cast<int>(std::max(1u, std::min(8u, std::thread::hardware_concurrency()))); }

corpus::UserCorpus corpus_of(const fixture::Fixture& fx) {
  return corpus::build_corpus(fx.messages, fx.demographics, corpus::FilterConfig::none());
}

// Rows of the planted factor matrix for the given users.
Matrix truth_rows(const fixture::Fixture& fx, const std::vector<std::string>& users) {
  std::unordered_map<std::string, Eigen::Index> row;
  for (std::size_t i = 0; i < fx.user_ids.size(); ++i) row.emplace(fx.user_ids[i], static_cast<Eigen::Index>(i));
  Matrix out(static_cast<Eigen::Index>(users.size()), fx.factors.cols());
  for (std::size_t i = 0; i < users.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = fx.factors.row(row.at(users[i]));
  return out;
}

Outcome planted_recovery() {
  const auto start = std::chrono::steady_clock::now();
  testsupport::TempDir tmp;
  fixture::FixtureConfig cfg;  // 500 users, k = 5, 2000 terms, noise 0.5
  const auto fx = fixture::generate(cfg);
  fixture::write(tmp.path(), fx);
  std::ostringstream log;
  const auto config = cli::load_config(tmp.path() / "config.json");
  cli::cmd_fit(config, log);
  const auto scores = serialize::read_scores(config.out_dir / "scores.csv");
  const auto a = align::align_columns(scores.scores, truth_rows(fx, scores.user_ids));
  double worst = 1.0;
  for (double r : a.per_pair_r) worst = std::min(worst, std::abs(r));
  const double elapsed = seconds_since(start);
  return {worst >= 0.9 && elapsed < 60.0 && a.per_pair_r.size() == 5,
          fmt("min |r| over 5 factors = %.4f, %.1f s (limits >= 0.9, < 60 s)", worst, elapsed)};
}

Outcome hungarian_oracle() {
  const auto start = std::chrono::steady_clock::now();
  int mismatches = 0, total = 0;
  for (int n = 2; n <= 6; ++n) {
    for (int trial = 0; trial < 200; ++trial) {
      const Matrix cost = testsupport::random_uniform(n, n, mix_seed(static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(trial)));
      const auto r = align::hungarian(cost);
      if (r.total_cost != testsupport::brute_force_min_cost(cost)) ++mismatches;
      ++total;
    }
  }
  const double elapsed = seconds_since(start);
  return {mismatches == 0 && elapsed < 5.0,
          fmt("%.0f of %.0f matrices differ from brute force, %.2f s (limit < 5 s)", mismatches, total, elapsed)};
}

Outcome lda_identity() {
  fixture::FixtureConfig cfg;
  cfg.users = 100;
  cfg.terms = 300;
  cfg.tokens_per_period = 800;
  const auto c = corpus_of(fixture::generate(cfg));
  topics::LdaOptions o;
  o.k = 5;
  o.iterations = 100;
  const auto model = topics::fit_lda(c, o);
  // Independent covariance computation.
  const Matrix centered = model.proportions.rowwise() - model.proportions.colwise().mean();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(model.proportions.rows() - 1);
  const double variances = cov.trace();
  const double off = cov.sum() - variances;
  const auto check = topics::composition_covariance(model.proportions);
  const double gap = std::max(std::abs(off + variances), std::abs(check.off_diagonal_sum + check.variance_sum));
  return {gap <= 1e-9, fmt("|off-diagonal sum + variance sum| = %.2e (limit 1e-9), variance sum %.4f", gap, variances)};
}

Outcome rotation_correctness() {
  double worst_drop = 0.0, worst_communality = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Matrix l = testsupport::random_normal(50, 2 + static_cast<int>(seed % 5), seed) * 0.4;
    for (auto kind : {factors::RotationKind::varimax, factors::RotationKind::equamax}) {
      const auto r = factors::rotate_orthogonal(l, kind);
      for (std::size_t i = 1; i < r.criterion.size(); ++i) worst_drop = std::max(worst_drop, r.criterion[i - 1] - r.criterion[i]);
      worst_communality =
          std::max(worst_communality, (r.loadings.rowwise().squaredNorm() - l.rowwise().squaredNorm()).cwiseAbs().maxCoeff());
    }
  }
  Matrix simple(4, 2);
  simple << 0.9, 0, 0, 0.9, 0.8, 0, 0, 0.8;
  Matrix mix(2, 2);
  const double t = std::numbers::pi / 4;
  mix << std::cos(t), -std::sin(t), std::sin(t), std::cos(t);
  const Matrix mixed = simple * mix;
  const auto r = factors::rotate_orthogonal(mixed, factors::RotationKind::varimax);
  const double gap = testsupport::diff_up_to_perm_sign(testsupport::grid_search_rotation(mixed, 1.0), r.loadings);
  // Non-decreasing up to floating-point rounding of the criterion itself.
  const bool monotone = worst_drop <= 1e-12;
  return {monotone && worst_communality <= 1e-8 && gap <= 1e-3,
          fmt("largest criterion drop %.1e, communality change %.1e (limit 1e-8), 45-degree gap to grid oracle %.1e "
              "(limit 1e-3)",
              worst_drop, worst_communality, gap)};
}

Outcome ridge_closed_form() {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    Rng rng(seed);
    const auto n = static_cast<Eigen::Index>(10 + rng.below(30));
    const auto p = static_cast<Eigen::Index>(1 + rng.below(6));
    const Matrix x = testsupport::random_normal(n, p, seed * 3) * (1.0 + 4.0 * rng.uniform());
    const Vector y = testsupport::random_normal(n, 1, seed * 3 + 1).col(0).array() + 2.0;
    const double lambda = std::pow(10.0, -2.0 + 4.0 * rng.uniform());
    const auto model = predict::fit_ridge(x, y, lambda);
    // Normal equations on population z-scores, mapped back to the raw scale.
    const Matrix xs = testsupport::zscore(x);
    const Vector yc = y.array() - y.mean();
    const Vector ws = (xs.transpose() * xs + lambda * Matrix::Identity(p, p)).fullPivLu().solve(xs.transpose() * yc);
    Vector w(p);
    for (Eigen::Index j = 0; j < p; ++j) {
      const double mean = x.col(j).mean();
      const double sd = std::sqrt((x.col(j).array() - mean).square().sum() / static_cast<double>(n));
      w(j) = ws(j) / sd;
    }
    const double b = y.mean() - (x.colwise().mean() * w)(0);
    worst = std::max(worst, (model.weights - w).norm() / w.norm());
    worst = std::max(worst, std::abs(model.intercept - b) / std::max(1.0, std::abs(b)));
  }
  const Matrix x = testsupport::random_normal(40, 3, 99);
  const Vector y = x.col(0) * 2.0 + testsupport::random_normal(40, 1, 98).col(0);
  const auto heavy = predict::fit_ridge(x, y, 1e12);
  const double sd = std::sqrt((y.array() - y.mean()).square().mean());
  const double collapse = (heavy.predict(x).array() - y.mean()).abs().maxCoeff() / sd;
  return {worst <= 1e-8 && collapse <= 1e-3,
          fmt("max relative deviation from normal equations %.1e (limit 1e-8); lambda=1e12 max |pred - mean| = %.1e std "
              "(limit 1e-3)",
              worst, collapse)};
}

Outcome auc_oracle() {
  Rng rng(2024);
  int mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(49);
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(rng.below(2));
    y[rng.below(n)] = 1;
    std::size_t zero = rng.below(n);
    while (y[zero] == 1 && n > 1) {
      zero = rng.below(n);
      if (std::count(y.begin(), y.end(), 1) == static_cast<long>(n)) y[zero] = 0;
    }
    y[zero] = 0;
    if (std::count(y.begin(), y.end(), 1) == 0) y[(zero + 1) % n] = 1;
    Vector s(static_cast<Eigen::Index>(n));
    const bool tied = trial % 2 == 0;
    for (auto& v : s) v = tied ? static_cast<double>(rng.below(5)) : rng.normal();
    if (predict::auc(y, s) != testsupport::pair_count_auc(y, s)) ++mismatches;
  }
  return {mismatches == 0, fmt("%.0f of 200 label/score sets differ from pair counting (half of them heavily tied)", mismatches)};
}

struct DropoutSetup {
  utm::UserTermMatrix training, holdout;
};

DropoutSetup dropout_setup() {
  fixture::FixtureConfig cfg;
  cfg.users = 1000;
  cfg.k = 3;
  cfg.terms = 300;
  const auto c = corpus_of(fixture::generate(cfg));
  const auto matrix = utm::build_matrix(c, utm::select_vocabulary(c, 10000, 0.01));
  std::vector<std::size_t> order(matrix.users());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(77);
  rng.shuffle(order.begin(), order.end());
  const auto cut = order.begin() + static_cast<std::ptrdiff_t>(order.size() / 5);
  std::vector<std::size_t> hold(order.begin(), cut), train(cut, order.end());
  std::sort(hold.begin(), hold.end());
  std::sort(train.begin(), train.end());
  return {matrix.rows(train), matrix.rows(hold)};
}

Outcome dropout_property() {
  const auto start = std::chrono::steady_clock::now();
  const auto setup = dropout_setup();
  evalsuite::DropoutOptions o;
  o.spec.k = 3;
  o.runs = 10;
  o.drop_fraction = 0.2;
  o.threads = worker_threads();
  const auto r = evalsuite::dropout_reliability(setup.training, setup.holdout, o);
  o.drop_fraction = 0.0;
  const auto same = evalsuite::dropout_reliability(setup.training, setup.holdout, o);
  const double elapsed = seconds_since(start);
  const double mean = r.grand_mean.value_or(0.0);
  const double identical = same.grand_mean.value_or(0.0);
  return {mean >= 0.9 && std::abs(identical - 1.0) <= 1e-9 && elapsed < 300.0 && r.pairs.size() == 45,
          fmt("drop 0.2: grand mean %.4f (limit >= 0.9); drop 0: |mean - 1| = %.1e (limit 1e-9); %.1f s (limit < 300 s)",
              mean, std::abs(identical - 1.0), elapsed)};
}

// Model factor whose loadings concentrate on the terms of planted factor `planted`.
std::vector<int> factor_to_planted(const factors::FactorModel& model, const fixture::Fixture& fx) {
  std::unordered_map<std::string, int> term_factor;
  for (std::size_t t = 0; t < fx.vocabulary.size(); ++t) term_factor.emplace(fx.vocabulary[t], fx.term_factor[t]);
  const int k = fx.config.k;
  Matrix cost = Matrix::Zero(model.k, k);
  Vector counts = Vector::Zero(k);
  for (std::size_t t = 0; t < model.vocabulary.size(); ++t) {
    auto it = term_factor.find(model.vocabulary[t]);
    if (it == term_factor.end()) continue;
    counts(it->second) += 1.0;
    for (int f = 0; f < model.k; ++f) cost(f, it->second) -= std::abs(model.loadings(static_cast<Eigen::Index>(t), f));
  }
  for (int p = 0; p < k; ++p) cost.col(p) /= std::max(1.0, counts(p));
  return align::hungarian(cost).assignment;
}

Outcome retest_property() {
  const auto start = std::chrono::steady_clock::now();
  fixture::FixtureConfig cfg;
  cfg.users = 400;
  cfg.k = 3;
  cfg.terms = 150;
  cfg.periods = 4;
  cfg.tokens_per_period = 2000;
  evalsuite::RetestOptions o;
  o.spec.k = 3;
  const auto stationary = evalsuite::test_retest(corpus_of(fixture::generate(cfg)), o);
  double worst_adjacent = 1.0;
  bool complete = stationary.periods.size() == 4;
  for (std::size_t t = 1; t < stationary.periods.size(); ++t) {
    if (stationary.periods[t].missing) complete = false;
    for (const auto& r : stationary.periods[t].r_vs_previous) worst_adjacent = std::min(worst_adjacent, r.value_or(-1.0));
  }

  cfg.transient = 1;
  const auto fx = fixture::generate(cfg);
  const auto transient = evalsuite::test_retest(corpus_of(fx), o);
  const auto mapping = factor_to_planted(transient.model, fx);
  const auto cross = transient.cross_period_mean();
  int lowest = 0;
  for (int f = 1; f < static_cast<int>(cross.size()); ++f) {
    if (cross[static_cast<std::size_t>(f)].value_or(-2.0) < cross[static_cast<std::size_t>(lowest)].value_or(-2.0)) lowest = f;
  }
  const bool transient_lowest = mapping[static_cast<std::size_t>(lowest)] == cfg.k - 1;
  double transient_r = cross[static_cast<std::size_t>(lowest)].value_or(0.0), next_lowest = 1.0;
  for (int f = 0; f < static_cast<int>(cross.size()); ++f) {
    if (f != lowest) next_lowest = std::min(next_lowest, cross[static_cast<std::size_t>(f)].value_or(0.0));
  }
  const double elapsed = seconds_since(start);
  return {complete && worst_adjacent >= 0.9 && transient_lowest && elapsed < 120.0,
          fmt("stationary min adjacent r %.4f (limit >= 0.9); transient factor cross-period r %.3f vs next lowest %.3f",
              worst_adjacent, transient_r, next_lowest) +
              (transient_lowest ? ", transient ranks lowest" : ", transient does NOT rank lowest") +
              fmt("; %.1f s (limit < 120 s)", elapsed)};
}

Outcome svd_eckart_young() {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Matrix z = testsupport::random_normal(20, 10, seed + 500);
    Eigen::JacobiSVD<Matrix> oracle(z);
    const Vector sv = oracle.singularValues();
    for (int k = 1; k <= 10; ++k) {
      const auto model = factors::fit_svd(z, k);
      const double err = (z - factors::svd_reconstruct(z, model)).norm();
      const double expected = std::sqrt(sv.tail(10 - k).squaredNorm());
      worst = std::max(worst, std::abs(err - expected));
    }
  }
  return {worst <= 1e-8, fmt("max |error - sqrt(discarded sigma^2)| = %.1e over 10 matrices x k=1..10 (limit 1e-8)", worst)};
}

Outcome logistic_gradient() {
  Rng rng(31);
  double worst = 0.0;
  for (int point = 0; point < 20; ++point) {
    const Eigen::Index n = 30 + static_cast<Eigen::Index>(rng.below(40));
    const Eigen::Index p = 1 + static_cast<Eigen::Index>(rng.below(5));
    const Matrix x = testsupport::random_normal(n, p, 1000 + static_cast<std::uint64_t>(point));
    std::vector<int> y(static_cast<std::size_t>(n));
    for (auto& v : y) v = static_cast<int>(rng.below(2));
    const Vector w = testsupport::random_normal(p, 1, 2000 + static_cast<std::uint64_t>(point)).col(0);
    const double b = rng.normal();
    const double c = std::pow(10.0, -2.0 + 4.0 * rng.uniform());
    const auto obj = predict::logistic_objective(x, y, w, b, c);
    const double h = 1e-5;
    Vector analytic(p + 1), numeric(p + 1);
    analytic << obj.grad_w, obj.grad_b;
    for (Eigen::Index j = 0; j <= p; ++j) {
      Vector wu = w, wd = w;
      double bu = b, bd = b;
      if (j < p) {
        wu(j) += h;
        wd(j) -= h;
      } else {
        bu += h;
        bd -= h;
      }
      numeric(j) = (predict::logistic_objective(x, y, wu, bu, c).value - predict::logistic_objective(x, y, wd, bd, c).value) /
                   (2.0 * h);
    }
    worst = std::max(worst, (numeric - analytic).norm() / analytic.norm());
  }
  return {worst <= 1e-4, fmt("max relative gradient error %.1e at 20 random points (limit 1e-4)", worst)};
}

Outcome end_to_end_determinism() {
  testsupport::TempDir tmp;
  fixture::FixtureConfig cfg;
  cfg.users = 200;
  cfg.terms = 600;
  cfg.tokens_per_period = 1500;
  cfg.likes_clusters = 5;
  fixture::write(tmp.path(), fixture::generate(cfg));
  std::vector<std::string> hashes, evals, eval_csvs;
  for (const char* out : {"run_a", "run_b"}) {
    const auto config = cli::load_config(tmp.path() / "config.json", {{"out_dir", out}});
    std::ostringstream log;
    cli::cmd_fit(config, log);
    cli::cmd_eval(config, config.out_dir, log);
    hashes.push_back(nlohmann::json::parse(io::read_file(config.out_dir / "model.json")).at("hash").get<std::string>());
    evals.push_back(io::read_file(config.out_dir / "eval.json"));
    eval_csvs.push_back(io::read_file(config.out_dir / "eval.csv"));
  }
  const bool same = hashes[0] == hashes[1] && evals[0] == evals[1] && eval_csvs[0] == eval_csvs[1];
  return {same, std::string(same ? "model hash and EvalReport files byte-identical across two runs (model " : "runs differ (model ") +
                    hashes[0].substr(0, 12) + ")"};
}

Outcome nmf_property() {
  int increases = 0, steps = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Matrix x = testsupport::random_uniform(15 + static_cast<Eigen::Index>(seed), 10, seed + 300);
    const auto m = nmf::fit_nmf(nmf::likes_from_dense(x), 1 + static_cast<int>(seed % 4), 200, seed);
    if (m.objective.size() != static_cast<std::size_t>(m.iterations) + 1) ++increases;
    for (std::size_t i = 1; i < m.objective.size(); ++i) increases += m.objective[i] > m.objective[i - 1] ? 1 : 0;
    steps += m.iterations;
  }
  Matrix blocks = Matrix::Zero(30, 15);
  for (int u = 0; u < 30; ++u)
    for (int j = 0; j < 5; ++j) blocks(u, (u / 10) * 5 + j) = 1.0;
  const auto model = nmf::fit_nmf(nmf::likes_from_dense(blocks), 3, 500, 1);
  const auto clusters = nmf::cluster_assign(model);
  int wrong = 0;
  std::set<int> distinct;
  for (int b = 0; b < 3; ++b) {
    const int c = clusters[static_cast<std::size_t>(b * 10)];
    distinct.insert(c);
    for (int u = 0; u < 10; ++u) wrong += clusters[static_cast<std::size_t>(b * 10 + u)] != c ? 1 : 0;
    if (c == nmf::kUnassigned) wrong += 10;
  }
  const bool exact = wrong == 0 && distinct.size() == 3;
  return {increases == 0 && exact,
          fmt("%.0f objective increases over 20 matrices (%.0f updates); planted blocks: %.0f misassigned users", increases,
              steps, wrong) +
              (exact ? ", exact recovery" : "")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"planted-factor recovery", planted_recovery},
      {"hungarian equals brute force", hungarian_oracle},
      {"lda compositional identity", lda_identity},
      {"rotation correctness", rotation_correctness},
      {"ridge closed form", ridge_closed_form},
      {"auc equals pair counting", auc_oracle},
      {"dropout reliability", dropout_property},
      {"test-retest stability", retest_property},
      {"svd eckart-young", svd_eckart_young},
      {"logistic gradient check", logistic_gradient},
      {"end-to-end determinism", end_to_end_determinism},
      {"nmf monotonicity and block recovery", nmf_property},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("%s [%zu] %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
  return failed == 0 ? 0 : 1;
}
