#include "blt/predict.hpp"

#include "blt/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace blt::predict {

std::optional<double> pearson_r(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y) {
  if (x.size() != y.size() || x.size() < 2) return std::nullopt;
  const double mx = x.mean();
  const double my = y.mean();
  const Eigen::ArrayXd dx = x.array() - mx;
  const Eigen::ArrayXd dy = y.array() - my;
  const double sxx = (dx * dx).sum();
  const double syy = (dy * dy).sum();
  if (!(sxx > 0.0) || !(syy > 0.0)) return std::nullopt;
  const double r = (dx * dy).sum() / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

double auc(std::span<const int> labels, const Eigen::Ref<const Vector>& scores) {
  const auto n = labels.size();
  if (static_cast<Eigen::Index>(n) != scores.size()) throw Error("predict", "auc: labels and scores differ in length");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores(static_cast<Eigen::Index>(a)) < scores(static_cast<Eigen::Index>(b));
  });
  // Doubled midranks keep everything integral.
  std::vector<double> rank2(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && scores(static_cast<Eigen::Index>(order[j])) == scores(static_cast<Eigen::Index>(order[i]))) ++j;
    const double shared = static_cast<double>(i + 1 + j);  // 2 * mean of ranks i+1..j
    for (std::size_t t = i; t < j; ++t) rank2[order[t]] = shared;
    i = j;
  }
  double positives = 0.0;
  double rank_sum2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != 0) {
      positives += 1.0;
      rank_sum2 += rank2[i];
    }
  }
  const double negatives = static_cast<double>(n) - positives;
  if (positives == 0.0 || negatives == 0.0) throw Error("predict", "auc needs both classes");
  const double u2 = rank_sum2 - positives * (positives + 1.0);
  return u2 / (2.0 * positives * negatives);
}

FeatureScaling FeatureScaling::fit(const Matrix& x) {
  FeatureScaling s;
  const auto n = static_cast<double>(x.rows());
  s.mean = x.colwise().mean().transpose();
  s.std = ((x.rowwise() - s.mean.transpose()).colwise().squaredNorm().transpose() / n).cwiseSqrt();
  return s;
}

Matrix FeatureScaling::apply(const Matrix& x) const {
  Matrix out = x.rowwise() - mean.transpose();
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    if (std(c) > 0.0) {
      out.col(c) /= std(c);
    } else {
      out.col(c).setZero();
    }
  }
  return out;
}

Vector RidgeModel::predict(const Matrix& x) const {
  return (x * weights).array() + intercept;
}

RidgeModel fit_ridge(const Matrix& x, const Eigen::Ref<const Vector>& y, double lambda, bool standardize) {
  if (!(lambda >= 0.0)) throw Error("predict", "ridge lambda must be non-negative");
  if (x.rows() != y.size()) throw Error("predict", "ridge: rows of X and y differ");
  if (x.rows() == 0) throw Error("predict", "ridge: no rows");
  RidgeModel model;
  model.lambda = lambda;
  model.scaling = FeatureScaling::fit(x);
  if (!standardize) {
    for (Eigen::Index c = 0; c < model.scaling.std.size(); ++c) {
      model.scaling.std(c) = model.scaling.std(c) > 0.0 ? 1.0 : 0.0;
    }
  }
  const Matrix xs = model.scaling.apply(x);
  const double ymean = y.mean();
  const Vector yc = y.array() - ymean;
  const auto p = xs.cols();

  Matrix gram = xs.transpose() * xs;
  gram.diagonal().array() += lambda;
  const Vector rhs = xs.transpose() * yc;
  if (lambda > 0.0) {
    Eigen::LLT<Matrix> llt(gram);
    if (llt.info() == Eigen::Success) {
      model.standardized_weights = llt.solve(rhs);
    } else {
      model.standardized_weights = gram.completeOrthogonalDecomposition().solve(rhs);
    }
  } else {
    // Minimum-norm least squares on the standardized design.
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(xs);
    model.standardized_weights = cod.solve(yc);
    model.singular = cod.rank() < p;
  }

  model.weights = Vector::Zero(p);
  for (Eigen::Index c = 0; c < p; ++c) {
    if (model.scaling.std(c) > 0.0) model.weights(c) = model.standardized_weights(c) / model.scaling.std(c);
  }
  model.intercept = ymean - model.weights.dot(model.scaling.mean);
  return model;
}

namespace {

double log1pexp(double t) { return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace

LogisticObjective logistic_objective(const Matrix& x, std::span<const int> y, const Eigen::Ref<const Vector>& w,
                                     double b, double c) {
  const Vector eta = (x * w).array() + b;
  LogisticObjective out;
  Vector residual(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double yi = y[static_cast<std::size_t>(i)] != 0 ? 1.0 : 0.0;
    out.value += log1pexp(eta(i)) - yi * eta(i);
    residual(i) = sigmoid(eta(i)) - yi;
  }
  out.value += w.squaredNorm() / (2.0 * c);
  out.grad_w = x.transpose() * residual + w / c;
  out.grad_b = residual.sum();
  return out;
}

Vector LogisticModel::decision(const Matrix& x) const { return (scaling.apply(x) * weights).array() + intercept; }

Vector LogisticModel::probability(const Matrix& x) const {
  Vector d = decision(x);
  for (Eigen::Index i = 0; i < d.size(); ++i) d(i) = sigmoid(d(i));
  return d;
}

LogisticModel fit_logistic(const Matrix& x, std::span<const int> y, double c, int max_iter, double tol) {
  if (!(c > 0.0)) throw Error("predict", "logistic c must be positive");
  if (static_cast<Eigen::Index>(y.size()) != x.rows()) throw Error("predict", "logistic: rows of X and y differ");
  const auto positives = std::count_if(y.begin(), y.end(), [](int v) { return v != 0; });
  if (positives == 0 || positives == static_cast<std::ptrdiff_t>(y.size())) {
    throw Error("predict", "logistic regression needs both classes");
  }
  LogisticModel model;
  model.c = c;
  model.scaling = FeatureScaling::fit(x);
  const Matrix xs = model.scaling.apply(x);
  const auto p = xs.cols();
  const auto n = xs.rows();

  Vector w = Vector::Zero(p);
  const double rate = static_cast<double>(positives) / static_cast<double>(n);
  double b = std::log(rate / (1.0 - rate));
  auto current = logistic_objective(xs, y, w, b, c);
  model.objective_trace.push_back(current.value);

  for (int iter = 1; iter <= max_iter; ++iter) {
    const double gnorm = std::sqrt(current.grad_w.squaredNorm() + current.grad_b * current.grad_b);
    if (gnorm < tol * std::max(1.0, std::abs(current.value))) {
      model.converged = true;
      break;
    }
    // Newton system over [w; b].
    const Vector eta = (xs * w).array() + b;
    Vector s(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double pi = sigmoid(eta(i));
      s(i) = pi * (1.0 - pi);
    }
    Matrix h(p + 1, p + 1);
    h.topLeftCorner(p, p) = xs.transpose() * s.asDiagonal() * xs;
    h.topLeftCorner(p, p).diagonal().array() += 1.0 / c;
    h.topRightCorner(p, 1) = xs.transpose() * s;
    h.bottomLeftCorner(1, p) = h.topRightCorner(p, 1).transpose();
    h(p, p) = s.sum() + 1e-12;
    Vector g(p + 1);
    g << current.grad_w, current.grad_b;
    Vector step = h.ldlt().solve(g);
    if (!step.allFinite()) step = g;

    double t = 1.0;
    bool improved = false;
    for (int ls = 0; ls < 60; ++ls) {
      const Vector w_try = w - t * step.head(p);
      const double b_try = b - t * step(p);
      auto trial = logistic_objective(xs, y, w_try, b_try, c);
      if (trial.value < current.value) {
        w = w_try;
        b = b_try;
        current = std::move(trial);
        improved = true;
        break;
      }
      t *= 0.5;
    }
    model.iterations = iter;
    model.objective_trace.push_back(current.value);
    if (!improved) break;
  }
  if (!model.converged) {
    // No strictly decreasing step left: stationary up to rounding.
    const double gnorm = std::sqrt(current.grad_w.squaredNorm() + current.grad_b * current.grad_b);
    model.converged = gnorm < 1e-5 * std::max(1.0, std::abs(current.value));
  }
  model.weights = w;
  model.intercept = b;
  return model;
}

std::string_view to_string(Task t) { return t == Task::regression ? "regression" : "classification"; }

Task parse_task(std::string_view text) {
  if (text == "regression") return Task::regression;
  if (text == "classification") return Task::classification;
  throw Error("predict", "unknown task '" + std::string(text) + "'");
}

std::string_view metric_name(Task t) { return t == Task::regression ? "pearson_r" : "auc"; }

const std::vector<double>& default_ridge_grid() {
  static const std::vector<double> grid = {0.01, 0.1, 1, 10, 100, 1000, 10000};
  return grid;
}

const std::vector<double>& default_logistic_grid() {
  static const std::vector<double> grid = {0.001, 0.01, 0.1, 1, 10};
  return grid;
}

std::vector<double> order_by_strength(std::vector<double> grid, Task task) {
  if (task == Task::regression) {
    std::stable_sort(grid.begin(), grid.end(), std::greater<>());
  } else {
    std::stable_sort(grid.begin(), grid.end());
  }
  return grid;
}

namespace {

std::vector<int> binary_labels(const Eigen::Ref<const Vector>& y) {
  std::vector<int> labels(static_cast<std::size_t>(y.size()));
  for (Eigen::Index i = 0; i < y.size(); ++i) labels[static_cast<std::size_t>(i)] = y(i) != 0.0 ? 1 : 0;
  return labels;
}

Matrix take_rows(const Matrix& x, const std::vector<std::size_t>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

Vector take(const Eigen::Ref<const Vector>& v, const std::vector<std::size_t>& idx) {
  Vector out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Eigen::Index>(i)) = v(static_cast<Eigen::Index>(idx[i]));
  return out;
}


// Fold id per row. Classification folds deal each class round-robin after a
// shuffle so every fold receives both classes.
std::vector<int> assign_folds(const Eigen::Ref<const Vector>& y, Task task, int folds, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(y.size());
  Rng rng(seed);
  std::vector<int> fold(n, 0);
  if (task == Task::regression) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order.begin(), order.end());
    for (std::size_t i = 0; i < n; ++i) fold[order[i]] = static_cast<int>(i % static_cast<std::size_t>(folds));
    return fold;
  }
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < n; ++i) (y(static_cast<Eigen::Index>(i)) != 0.0 ? pos : neg).push_back(i);
  rng.shuffle(pos.begin(), pos.end());
  rng.shuffle(neg.begin(), neg.end());
  std::size_t slot = 0;
  for (auto i : pos) fold[i] = static_cast<int>(slot++ % static_cast<std::size_t>(folds));
  for (auto i : neg) fold[i] = static_cast<int>(slot++ % static_cast<std::size_t>(folds));
  return fold;
}

double fit_and_score(const Matrix& x_train, const Vector& y_train, const Matrix& x_test, const Vector& y_test, Task task,
                     double hyper) {
  if (task == Task::regression) {
    const auto model = fit_ridge(x_train, y_train, hyper);
    return pearson_r(model.predict(x_test), y_test).value_or(0.0);
  }
  const auto labels_train = binary_labels(y_train);
  const auto labels_test = binary_labels(y_test);
  const auto model = fit_logistic(x_train, labels_train, hyper);
  return auc(labels_test, model.decision(x_test));
}

}  // namespace

GridSearchResult grid_search_cv(const Matrix& x, const Eigen::Ref<const Vector>& y, Task task,
                                const std::vector<double>& grid, int folds, std::uint64_t seed) {
  if (grid.empty()) throw Error("predict", "grid search needs a non-empty grid");
  if (folds < 2) throw Error("predict", "grid search needs at least 2 folds");
  if (x.rows() != y.size()) throw Error("predict", "grid search: rows of X and y differ");

  GridSearchResult result;
  result.grid = order_by_strength(grid, task);
  int usable = folds;
  if (task == Task::classification) {
    const auto positives = static_cast<int>((y.array() != 0.0).count());
    const auto negatives = static_cast<int>(y.size()) - positives;
    usable = std::min({folds, positives, negatives});
    if (usable < 2) throw Error("predict", "grid search: each class needs at least 2 rows");
  } else {
    usable = std::min<int>(folds, static_cast<int>(y.size()));
    if (usable < 2) throw Error("predict", "grid search: too few rows");
  }
  result.folds_used = usable;
  const auto fold = assign_folds(y, task, usable, seed);

  std::vector<std::vector<std::size_t>> train_idx(static_cast<std::size_t>(usable)), test_idx(static_cast<std::size_t>(usable));
  for (std::size_t i = 0; i < fold.size(); ++i) {
    for (int f = 0; f < usable; ++f) (fold[i] == f ? test_idx : train_idx)[static_cast<std::size_t>(f)].push_back(i);
  }

  double best_metric = -std::numeric_limits<double>::infinity();
  bool have_best = false;
  for (double hyper : result.grid) {
    double total = 0.0;
    for (int f = 0; f < usable; ++f) {
      const auto& tr = train_idx[static_cast<std::size_t>(f)];
      const auto& te = test_idx[static_cast<std::size_t>(f)];
      total += fit_and_score(take_rows(x, tr), take(y, tr), take_rows(x, te), take(y, te), task, hyper);
    }
    const double mean = total / usable;
    result.mean_metric.push_back(mean);
    if (!have_best || mean > best_metric) {
      best_metric = mean;
      result.best = hyper;
      have_best = true;
    }
  }
  return result;
}

EvalReport eval_outcome(const Matrix& features, const Eigen::Ref<const Vector>& outcome, Task task,
                        const EvalOptions& options) {
  if (features.rows() != outcome.size()) throw Error("predict", "eval: features and outcome differ in rows");
  if (options.n_splits < 1) throw Error("predict", "eval needs at least one split");
  if (!(options.test_fraction > 0.0 && options.test_fraction < 1.0)) throw Error("predict", "test_fraction must lie in (0, 1)");
  const auto& grid = options.grid.empty()
                         ? (task == Task::regression ? default_ridge_grid() : default_logistic_grid())
                         : options.grid;

  EvalReport report;
  report.task = task;
  report.metric = std::string(metric_name(task));
  report.rows = static_cast<std::size_t>(features.rows());
  const auto n = static_cast<std::size_t>(features.rows());

  for (int s = 0; s < options.n_splits; ++s) {
    const std::uint64_t seed = options.seed_base + static_cast<std::uint64_t>(s);
    Rng rng(seed);
    std::vector<char> is_test(n, 0);
    auto pick_test = [&](std::vector<std::size_t> idx) {
      rng.shuffle(idx.begin(), idx.end());
      auto count = static_cast<std::size_t>(std::llround(options.test_fraction * static_cast<double>(idx.size())));
      count = std::clamp<std::size_t>(count, 1, idx.size() > 1 ? idx.size() - 1 : 1);
      for (std::size_t i = 0; i < count && i < idx.size(); ++i) is_test[idx[i]] = 1;
    };
    if (task == Task::classification) {
      std::vector<std::size_t> pos, neg;
      for (std::size_t i = 0; i < n; ++i) (outcome(static_cast<Eigen::Index>(i)) != 0.0 ? pos : neg).push_back(i);
      if (pos.size() < 3 || neg.size() < 3) throw Error("predict", "classification outcome needs at least 3 rows per class");
      pick_test(pos);
      pick_test(neg);
    } else {
      std::vector<std::size_t> all(n);
      std::iota(all.begin(), all.end(), std::size_t{0});
      pick_test(all);
    }
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < n; ++i) (is_test[i] ? test : train).push_back(i);

    const Matrix x_train = take_rows(features, train);
    const Vector y_train = take(outcome, train);
    const auto search = grid_search_cv(x_train, y_train, task, grid, options.folds, mix_seed(seed, 1));
    const double value = fit_and_score(x_train, y_train, take_rows(features, test), take(outcome, test), task, search.best);
    report.values.push_back(value);
    report.hyperparameters.push_back(search.best);
    report.seeds.push_back(seed);
  }

  const auto count = static_cast<double>(report.values.size());
  report.mean = std::accumulate(report.values.begin(), report.values.end(), 0.0) / count;
  double ss = 0.0;
  for (double v : report.values) ss += (v - report.mean) * (v - report.mean);
  report.std = report.values.size() > 1 ? std::sqrt(ss / (count - 1.0)) : 0.0;
  return report;
}

double mean_of_means(const std::vector<EvalReport>& reports) {
  if (reports.empty()) return 0.0;
  double total = 0.0;
  for (const auto& r : reports) total += r.mean;
  return total / static_cast<double>(reports.size());
}

}  // namespace blt::predict
