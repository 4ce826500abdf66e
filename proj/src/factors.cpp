#include "blt/factors.hpp"

#include "blt/io.hpp"
#include "blt/serialize.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace blt::factors {

std::string_view to_string(Method m) { return m == Method::fa ? "fa" : "svd"; }

std::string_view to_string(RotationKind r) {
  switch (r) {
    case RotationKind::varimax: return "varimax";
    case RotationKind::equamax: return "equamax";
    case RotationKind::promax: return "promax";
    default: return "none";
  }
}

Method parse_method(std::string_view text) {
  if (text == "fa") return Method::fa;
  if (text == "svd") return Method::svd;
  throw Error("factors", "unknown method '" + std::string(text) + "'");
}

RotationKind parse_rotation(std::string_view text) {
  if (text == "none") return RotationKind::none;
  if (text == "varimax") return RotationKind::varimax;
  if (text == "equamax") return RotationKind::equamax;
  if (text == "promax") return RotationKind::promax;
  throw Error("factors", "unknown rotation '" + std::string(text) + "'");
}

namespace {

void check_dimensions(const Matrix& z, int k) {
  if (k < 1) throw Error("factors", "k must be at least 1");
  if (k >= std::min(z.rows(), z.cols())) {
    throw Error("factors", "k = " + std::to_string(k) + " must be below min(users, terms) = " +
                               std::to_string(std::min(z.rows(), z.cols())));
  }
}

// Squared multiple correlations 1 - 1/diag(R^-1) over active columns, or
// nothing when R is singular.
std::optional<Vector> squared_multiple_correlations(const Matrix& z, const std::vector<Eigen::Index>& active) {
  const auto n = static_cast<double>(z.rows());
  const auto m = static_cast<Eigen::Index>(active.size());
  if (m >= z.rows()) return std::nullopt;
  Matrix za(z.rows(), m);
  for (Eigen::Index c = 0; c < m; ++c) za.col(c) = z.col(active[static_cast<std::size_t>(c)]);
  Matrix r = za.transpose() * za / n;
  Eigen::LLT<Matrix> llt(r);
  if (llt.info() != Eigen::Success) return std::nullopt;
  Matrix inv = llt.solve(Matrix::Identity(m, m));
  Vector smc(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double d = inv(i, i);
    if (!std::isfinite(d) || d < 1.0 - 1e-9 || d > 1e12) return std::nullopt;
    smc(i) = std::clamp(1.0 - 1.0 / d, 0.0, 1.0);
  }
  return smc;
}

// max_j |r_ij| over j != i, computed in column blocks.
Vector max_abs_correlation(const Matrix& z) {
  const auto n = static_cast<double>(z.rows());
  const auto p = z.cols();
  Vector best = Vector::Zero(p);
  constexpr Eigen::Index kBlock = 256;
  for (Eigen::Index start = 0; start < p; start += kBlock) {
    const auto width = std::min(kBlock, p - start);
    Matrix r = z.transpose() * z.middleCols(start, width) / n;
    for (Eigen::Index c = 0; c < width; ++c) {
      r(start + c, c) = 0.0;
      best(start + c) = r.col(c).cwiseAbs().maxCoeff();
    }
  }
  return best.cwiseMin(1.0);
}

}  // namespace

FactorModel fit_fa(const Matrix& z, int k, const PafOptions& options) {
  check_dimensions(z, k);
  const auto n = static_cast<double>(z.rows());
  const auto p = z.cols();

  std::vector<Eigen::Index> active;
  Vector is_active = Vector::Zero(p);
  for (Eigen::Index c = 0; c < p; ++c) {
    if (z.col(c).squaredNorm() > 0.0) {
      active.push_back(c);
      is_active(c) = 1.0;
    }
  }

  FactorModel model;
  model.method = Method::fa;
  model.k = k;
  model.training_users = static_cast<std::size_t>(z.rows());

  Vector h = Vector::Zero(p);
  if (auto smc = squared_multiple_correlations(z, active)) {
    for (std::size_t i = 0; i < active.size(); ++i) h(active[i]) = (*smc)(static_cast<Eigen::Index>(i));
    model.diagnostics.initial_communalities = "smc";
  } else {
    h = max_abs_correlation(z).cwiseProduct(is_active);
    model.diagnostics.initial_communalities = "max_abs_r";
  }

  const bool dense = options.route == EigenRoute::dense ||
                     (options.route == EigenRoute::automatic && static_cast<std::size_t>(p) <= options.dense_limit);
  Matrix r;
  if (dense) r = z.transpose() * z / n;

  Matrix vectors;
  Vector values;
  Matrix warm;
  auto solve = [&](const Vector& communality) {
    if (dense) {
      Matrix reduced = r;
      reduced.diagonal() = communality;
      Eigen::SelfAdjointEigenSolver<Matrix> eig(reduced);
      values = eig.eigenvalues().tail(k).reverse();
      vectors = eig.eigenvectors().rightCols(k).rowwise().reverse();
      return;
    }
    // Reduced correlation R - diag(1 - h) applied through z; inactive
    // columns of z are zero, so their rows contribute nothing.
    const Vector shift = (Vector::Ones(p) - communality).cwiseProduct(is_active);
    BlockOperator op = [&](const Matrix& x) -> Matrix {
      Matrix y = z.transpose() * (z * x) / n;
      y -= shift.asDiagonal() * x;
      return y;
    };
    auto pairs = top_eigenpairs(op, p, k, warm.size() > 0 ? &warm : nullptr, options.seed, 1e-9);
    values = pairs.values;
    vectors = pairs.vectors;
    warm = vectors;
  };

  Matrix loadings;
  model.diagnostics.converged = false;
  for (int iter = 1; iter <= std::max(1, options.max_iter); ++iter) {
    solve(h);
    const Vector clipped = values.cwiseMax(0.0);
    loadings = vectors * clipped.cwiseSqrt().asDiagonal();
    Vector next = loadings.rowwise().squaredNorm();
    const double change = (next - h).cwiseAbs().maxCoeff();
    h = next.cwiseMin(1.0 - 1e-6);
    model.diagnostics.iterations = iter;
    model.diagnostics.max_change = change;
    if (change < options.tol) {
      model.diagnostics.converged = true;
      break;
    }
  }

  // Heywood rows: scale the loading row back inside the unit ball.
  for (Eigen::Index i = 0; i < p; ++i) {
    const double hi = loadings.row(i).squaredNorm();
    if (hi > 1.0) {
      model.diagnostics.heywood = true;
      ++model.diagnostics.heywood_terms;
      loadings.row(i) *= std::sqrt((1.0 - 1e-6) / hi);
    }
  }

  model.eigenvalues = values;
  model.unrotated = loadings;
  model.loadings = loadings;
  model.phi = Matrix::Identity(k, k);
  model.communalities = loadings.rowwise().squaredNorm();
  model.rotation.matrix = Matrix::Identity(k, k);
  return model;
}

FactorModel fit_svd(const Matrix& z, int k) {
  if (k < 1) throw Error("factors", "k must be at least 1");
  if (k > std::min(z.rows(), z.cols())) {
    throw Error("factors", "k = " + std::to_string(k) + " exceeds min(users, terms) = " +
                               std::to_string(std::min(z.rows(), z.cols())));
  }
  Eigen::BDCSVD<Matrix> svd(z, Eigen::ComputeThinV);
  const Vector sigma = svd.singularValues().head(k);
  FactorModel model;
  model.method = Method::svd;
  model.k = k;
  model.training_users = static_cast<std::size_t>(z.rows());
  model.eigenvalues = sigma;
  model.unrotated = svd.matrixV().leftCols(k) * (sigma / std::sqrt(static_cast<double>(z.rows()))).asDiagonal();
  model.loadings = model.unrotated;
  model.phi = Matrix::Identity(k, k);
  model.communalities = model.unrotated.rowwise().squaredNorm();
  model.rotation.matrix = Matrix::Identity(k, k);
  model.diagnostics.initial_communalities = "none";
  model.diagnostics.iterations = 1;
  return model;
}

Matrix svd_reconstruct(const Matrix& z, const FactorModel& model) {
  Eigen::HouseholderQR<Matrix> qr(model.unrotated);
  const Matrix q = qr.householderQ() * Matrix::Identity(model.unrotated.rows(), model.unrotated.cols());
  return (z * q) * q.transpose();
}

FactorModel apply_sign_convention(FactorModel model) {
  for (Eigen::Index j = 0; j < model.loadings.cols(); ++j) {
    const double largest = model.loadings.col(j).cwiseAbs().maxCoeff();
    Eigen::Index pick = -1;
    for (Eigen::Index i = 0; i < model.loadings.rows(); ++i) {
      if (std::abs(model.loadings(i, j)) != largest) continue;
      if (pick < 0) {
        pick = i;
      } else if (!model.vocabulary.empty() &&
                 model.vocabulary[static_cast<std::size_t>(i)] < model.vocabulary[static_cast<std::size_t>(pick)]) {
        pick = i;
      }
    }
    if (pick < 0 || model.loadings(pick, j) >= 0.0) continue;
    model.loadings.col(j) *= -1.0;
    if (model.rotation.matrix.cols() == model.loadings.cols()) model.rotation.matrix.col(j) *= -1.0;
    model.phi.row(j) *= -1.0;
    model.phi.col(j) *= -1.0;
    if (model.score_weights.cols() == model.loadings.cols()) model.score_weights.col(j) *= -1.0;
  }
  model.sign_convention_applied = true;
  return model;
}

Matrix regression_weights_primal(const Matrix& z, const Matrix& structure, double ridge) {
  const auto n = static_cast<double>(z.rows());
  Matrix r = z.transpose() * z / n;
  r.diagonal().array() += ridge;
  Eigen::LDLT<Matrix> ldlt(r);
  if (ldlt.info() != Eigen::Success) throw Error("factors", "regression weights: correlation matrix is not factorizable");
  return ldlt.solve(structure);
}

Matrix regression_weights_dual(const Matrix& z, const Matrix& structure, double ridge) {
  if (!(ridge > 0.0)) throw Error("factors", "regression weights: dual solve needs a positive ridge");
  const auto n = static_cast<double>(z.rows());
  Matrix gram = z * z.transpose();
  gram.diagonal().array() += n * ridge;
  Eigen::LLT<Matrix> llt(gram);
  if (llt.info() != Eigen::Success) throw Error("factors", "regression weights: dual system is not positive definite");
  return (structure - z.transpose() * llt.solve(z * structure)) / ridge;
}

Matrix regression_weights(const Matrix& z, const Matrix& structure, double ridge) {
  if (z.cols() <= z.rows() || !(ridge > 0.0)) return regression_weights_primal(z, structure, ridge);
  return regression_weights_dual(z, structure, ridge);
}

FactorScores score_users(const FactorModel& model, const Matrix& z, std::vector<std::string> user_ids) {
  if (static_cast<std::size_t>(z.cols()) != model.vocabulary.size()) {
    throw Error("factors", "vocabulary mismatch: matrix has " + std::to_string(z.cols()) + " terms, model has " +
                               std::to_string(model.vocabulary.size()));
  }
  if (model.score_weights.rows() != z.cols() || model.score_weights.cols() != model.k) {
    throw Error("factors", "model has no score weights");
  }
  if (static_cast<std::size_t>(z.rows()) != user_ids.size()) throw Error("factors", "user ids do not match matrix rows");
  FactorScores scores;
  scores.user_ids = std::move(user_ids);
  scores.scores = z * model.score_weights;
  scores.model_hash = serialize::model_hash(model);
  return scores;
}

FittedFactors fit_factors(const utm::UserTermMatrix& matrix, const FactorSpec& spec,
                          const utm::Demographics* term_controls) {
  auto standardized = utm::standardize(matrix);
  Matrix z = std::move(standardized.z);
  if (term_controls) {
    if (term_controls->user_ids != matrix.user_ids) throw Error("factors", "term controls do not align with matrix users");
    z = utm::residualize(z, *term_controls).values;
  }

  FactorModel model = spec.method == Method::fa ? fit_fa(z, spec.k, spec.paf) : fit_svd(z, spec.k);
  model.vocabulary = matrix.vocabulary;
  model.stats = std::move(standardized.stats);
  model = rotate(std::move(model), spec.rotation, spec.kappa);
  if (spec.sign_convention) model = apply_sign_convention(std::move(model));
  model.score_ridge = spec.score_ridge;
  model.score_weights = regression_weights(z, model.structure(), spec.score_ridge);

  FittedFactors fitted;
  fitted.scores = score_users(model, z, matrix.user_ids);
  fitted.scores.matrix_hash = serialize::matrix_hash(matrix);
  fitted.model = std::move(model);
  fitted.z = std::move(z);
  return fitted;
}

FactorScores score_matrix(const FactorModel& model, const utm::UserTermMatrix& matrix) {
  if (matrix.vocabulary != model.vocabulary) throw Error("factors", "vocabulary mismatch between matrix and model");
  const Matrix z = utm::standardize_dense(matrix.dense(), model.stats);
  auto scores = score_users(model, z, matrix.user_ids);
  scores.matrix_hash = serialize::matrix_hash(matrix);
  return scores;
}

}  // namespace blt::factors
