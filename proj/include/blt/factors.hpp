#pragma once

// Latent factor models of a standardized user-term matrix: principal-axis
// factor analysis, truncated SVD, orthomax / promax rotation and regression
// factor scores.

#include "blt/common.hpp"
#include "blt/utm.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace blt::factors {

enum class Method { fa, svd };
enum class RotationKind { none, varimax, equamax, promax };

std::string_view to_string(Method m);
std::string_view to_string(RotationKind r);
Method parse_method(std::string_view text);
RotationKind parse_rotation(std::string_view text);

struct RotationRecord {
  RotationKind kind = RotationKind::none;
  int kappa = 0;
  Matrix matrix;  // k x k; loadings = unrotated * matrix
  std::vector<double> criterion_trace;
  bool converged = true;
  bool oblique_fallback = false;  // promax step was singular, orthogonal result kept
};

struct FitDiagnostics {
  int iterations = 0;
  bool converged = true;
  bool heywood = false;
  std::size_t heywood_terms = 0;
  std::string initial_communalities;  // "smc", "max_abs_r" or "none"
  double max_change = 0.0;
};

struct FactorModel {
  Method method = Method::fa;
  int k = 0;
  std::size_t training_users = 0;
  std::vector<std::string> vocabulary;
  Matrix unrotated;  // terms x k
  Matrix loadings;   // terms x k, pattern matrix when oblique
  Matrix phi;        // k x k factor correlations
  Vector communalities;
  Vector eigenvalues;  // reduced-correlation eigenvalues (fa) or singular values (svd)
  RotationRecord rotation;
  bool sign_convention_applied = false;
  utm::ColumnStats stats;
  Matrix score_weights;  // terms x k, empty until computed
  double score_ridge = 1e-6;
  FitDiagnostics diagnostics;

  /// Structure matrix: loadings * phi.
  Matrix structure() const { return loadings * phi; }
  /// Per-factor sum of squared loadings.
  Vector explained() const { return loadings.colwise().squaredNorm().transpose(); }
};

enum class EigenRoute { automatic, dense, iterative };

struct PafOptions {
  int max_iter = 100;
  double tol = 1e-4;
  EigenRoute route = EigenRoute::automatic;
  std::size_t dense_limit = 400;  // terms at or below this use a dense eigensolver
  std::uint64_t seed = 0x5eed;    // start block of the iterative eigensolver
};

/// Principal-axis factoring of the term correlation matrix of `z`, which must
/// be column standardized (zero mean, unit population variance or all-zero).
FactorModel fit_fa(const Matrix& z, int k, const PafOptions& options = {});

/// Rank-k truncated SVD. Loadings are right singular vectors scaled by
/// singular value / sqrt(users).
FactorModel fit_svd(const Matrix& z, int k);

/// Reconstruction of `z` from the span of an SVD model's loading columns.
Matrix svd_reconstruct(const Matrix& z, const FactorModel& model);

/// Orthomax criterion sum_j [sum_i l_ij^4 - gamma/p (sum_i l_ij^2)^2].
double orthomax_criterion(const Matrix& loadings, double gamma);

struct OrthogonalRotation {
  Matrix loadings;
  Matrix rotation;  // loadings = input * rotation
  std::vector<double> criterion;  // on Kaiser-normalized loadings, one entry per sweep (first = start)
  bool converged = true;
  int sweeps = 0;
};

/// Varimax (gamma = 1) or equamax (gamma = k / 2) by pairwise planar
/// rotations with Kaiser row normalization.
OrthogonalRotation rotate_orthogonal(const Matrix& loadings, RotationKind criterion, int max_iter = 1000,
                                     double tol = 1e-12);

struct PromaxRotation {
  Matrix pattern;
  Matrix phi;
  Matrix rotation;  // pattern = input * rotation
  OrthogonalRotation pre_rotation;
  bool fell_back = false;
};

/// Equamax pre-rotation followed by a Procrustes fit to the sign-preserving
/// kappa-th power of the pre-rotated loadings.
PromaxRotation rotate_promax(const Matrix& loadings, int kappa = 4);

/// Rotates a fitted model and reorders its columns by descending explained
/// sum of squares.
FactorModel rotate(FactorModel model, RotationKind kind, int kappa = 4);

/// Flips each loading column so its largest-magnitude entry is positive.
/// Ties go to the lexicographically smallest term.
FactorModel apply_sign_convention(FactorModel model);

/// Thurstone regression weights (R + ridge * I)^-1 * structure, R = z'z / n.
/// Solved in the terms x terms space when terms <= users, otherwise in the
/// users x users space via the Woodbury identity.
Matrix regression_weights(const Matrix& z, const Matrix& structure, double ridge = 1e-6);
Matrix regression_weights_primal(const Matrix& z, const Matrix& structure, double ridge);
Matrix regression_weights_dual(const Matrix& z, const Matrix& structure, double ridge);

struct FactorScores {
  std::vector<std::string> user_ids;
  Matrix scores;  // users x k
  std::string model_hash;
  std::string matrix_hash;
};

/// Scores users whose matrix was standardized with the model's training
/// statistics.
FactorScores score_users(const FactorModel& model, const Matrix& z, std::vector<std::string> user_ids);

struct FactorSpec {
  Method method = Method::fa;
  int k = 5;
  RotationKind rotation = RotationKind::promax;
  int kappa = 4;
  PafOptions paf;
  double score_ridge = 1e-6;
  bool sign_convention = true;
};

struct FittedFactors {
  FactorModel model;
  Matrix z;
  FactorScores scores;
};

/// standardize -> fit -> rotate -> sign convention -> score weights -> scores.
/// `term_controls`, when given, residualizes the standardized training
/// matrix before fitting.
FittedFactors fit_factors(const utm::UserTermMatrix& matrix, const FactorSpec& spec,
                          const utm::Demographics* term_controls = nullptr);

/// Scores a matrix over the model vocabulary using the model's statistics.
FactorScores score_matrix(const FactorModel& model, const utm::UserTermMatrix& matrix);

/// Top-k eigenpairs (largest algebraic) of a symmetric operator given only
/// through block products. Randomized block Krylov with Rayleigh-Ritz and
/// restarts.
struct EigenPairs {
  Vector values;   // descending
  Matrix vectors;  // columns
  int restarts = 0;
  bool converged = true;
};
using BlockOperator = std::function<Matrix(const Matrix&)>;
EigenPairs top_eigenpairs(const BlockOperator& op, Eigen::Index dim, int k, const Matrix* warm_start,
                          std::uint64_t seed, double tol = 1e-10, int max_restarts = 200);

}  // namespace blt::factors
