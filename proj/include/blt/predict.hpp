#pragma once

// Linear predictive models and metrics used to measure how well factor
// scores generalize to external outcomes.

#include "blt/common.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace blt::predict {

/// Product-moment correlation. Empty when either input is constant or the
/// lengths differ / are below 2.
std::optional<double> pearson_r(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y);

/// Area under the ROC curve via midranks (Mann-Whitney U / (n1 n0)); tied
/// scores count one half. Throws unless both classes are present.
double auc(std::span<const int> labels, const Eigen::Ref<const Vector>& scores);

/// Column means and population standard deviations of a feature matrix.
struct FeatureScaling {
  Vector mean;
  Vector std;

  static FeatureScaling fit(const Matrix& x);
  Matrix apply(const Matrix& x) const;  // zero-variance features map to 0
};

struct RidgeModel {
  Vector weights;  // raw feature scale
  double intercept = 0.0;
  double lambda = 0.0;
  FeatureScaling scaling;
  Vector standardized_weights;
  bool singular = false;  // lambda = 0 and rank deficient: minimum-norm solution

  Vector predict(const Matrix& x) const;
};

/// Ridge regression on internally standardized features and centered
/// target: w = (Xs'Xs + lambda I)^-1 Xs'yc. With `standardize` false the
/// features are only centered.
RidgeModel fit_ridge(const Matrix& x, const Eigen::Ref<const Vector>& y, double lambda, bool standardize = true);

struct LogisticObjective {
  double value = 0.0;  // negative log-likelihood + ||w||^2 / (2c)
  Vector grad_w;
  double grad_b = 0.0;
};

/// Penalized objective (to be minimized) and its gradient; intercept
/// unpenalized.
LogisticObjective logistic_objective(const Matrix& x, std::span<const int> y, const Eigen::Ref<const Vector>& w,
                                     double b, double c);

struct LogisticModel {
  Vector weights;  // on standardized features
  double intercept = 0.0;
  double c = 1.0;
  FeatureScaling scaling;
  bool converged = false;
  int iterations = 0;
  std::vector<double> objective_trace;  // penalized objective per iteration (non-increasing)

  Vector decision(const Matrix& x) const;     // linear predictor
  Vector probability(const Matrix& x) const;  // sigmoid of the linear predictor
};

/// L2-penalized logistic regression by damped Newton steps with
/// backtracking. Converged when the gradient norm drops below `tol`.
LogisticModel fit_logistic(const Matrix& x, std::span<const int> y, double c, int max_iter = 100, double tol = 1e-8);

enum class Task { regression, classification };

std::string_view to_string(Task t);
Task parse_task(std::string_view text);
std::string_view metric_name(Task t);

const std::vector<double>& default_ridge_grid();
const std::vector<double>& default_logistic_grid();

/// Orders a grid from strongest to weakest regularization (ridge: lambda
/// descending; logistic: c ascending). Stable for duplicates.
std::vector<double> order_by_strength(std::vector<double> grid, Task task);

struct GridSearchResult {
  double best = 0.0;
  std::vector<double> grid;          // in evaluation order
  std::vector<double> mean_metric;  // per grid point
  int folds_used = 0;
};

/// k-fold cross-validation per grid point; highest mean fold metric wins,
/// ties go to the stronger regularization. Classification folds are
/// stratified. An undefined fold correlation counts as 0.
GridSearchResult grid_search_cv(const Matrix& x, const Eigen::Ref<const Vector>& y, Task task,
                                const std::vector<double>& grid, int folds, std::uint64_t seed);

struct EvalReport {
  std::string outcome;
  std::string feature_set;
  Task task = Task::regression;
  std::string metric;
  std::vector<double> values;           // per split
  std::vector<double> hyperparameters;  // chosen per split
  std::vector<std::uint64_t> seeds;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation over splits
  std::size_t rows = 0;
};

struct EvalOptions {
  int n_splits = 10;
  double test_fraction = 0.2;
  int folds = 5;
  std::vector<double> grid;  // empty: default grid for the task
  std::uint64_t seed_base = 0;
};

/// Repeated random train/test evaluation: for each split seed a (stratified
/// for classification) split, grid search on the training part, refit, and
/// the metric on the test part.
EvalReport eval_outcome(const Matrix& features, const Eigen::Ref<const Vector>& outcome, Task task,
                        const EvalOptions& options);

/// Mean over reports of their split means.
double mean_of_means(const std::vector<EvalReport>& reports);

}  // namespace blt::predict
