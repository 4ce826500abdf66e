#include "blt/factors.hpp"
#include "blt/rng.hpp"

#include <algorithm>
#include <cmath>

namespace blt::factors {

namespace {

Vector random_direction(Eigen::Index dim, Rng& rng) {
  Vector v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v(i) = rng.normal();
  return v;
}

// Orthonormalizes the columns of `block` against `basis` (already
// orthonormal) and against each other. Columns that vanish are replaced by
// fresh random directions so the block keeps full rank.
void orthonormalize(Matrix& block, const Matrix& basis, Rng& rng) {
  for (Eigen::Index c = 0; c < block.cols(); ++c) {
    for (int attempt = 0; attempt < 8; ++attempt) {
      Vector v = block.col(c);
      const double original = v.norm();
      for (int pass = 0; pass < 2; ++pass) {
        if (basis.cols() > 0) v -= basis * (basis.transpose() * v);
        if (c > 0) v -= block.leftCols(c) * (block.leftCols(c).transpose() * v);
      }
      const double norm = v.norm();
      if (norm > 1e-10 * std::max(original, 1e-300) && norm > 1e-300) {
        block.col(c) = v / norm;
        break;
      }
      block.col(c) = random_direction(block.rows(), rng);
    }
  }
}

}  // namespace

EigenPairs top_eigenpairs(const BlockOperator& op, Eigen::Index dim, int k, const Matrix* warm_start,
                          std::uint64_t seed, double tol, int max_restarts) {
  if (k < 1 || k > dim) throw Error("factors", "top_eigenpairs: k must lie in [1, dim]");
  Rng rng(seed);
  const Eigen::Index block = std::min<Eigen::Index>(dim, k + std::max(k, 8));
  const Eigen::Index depth = std::max<Eigen::Index>(0, std::min<Eigen::Index>(3, dim / block - 1));

  Matrix x(dim, block);
  Eigen::Index filled = 0;
  if (warm_start && warm_start->rows() == dim) {
    filled = std::min(block, warm_start->cols());
    x.leftCols(filled) = warm_start->leftCols(filled);
  }
  for (Eigen::Index c = filled; c < block; ++c) x.col(c) = random_direction(dim, rng);

  EigenPairs result;
  result.converged = false;
  for (int restart = 0; restart <= max_restarts; ++restart) {
    const Eigen::Index width = block * (depth + 1);
    Matrix basis(dim, width);
    Matrix image(dim, width);
    Matrix q = x;
    orthonormalize(q, Matrix(dim, 0), rng);
    basis.leftCols(block) = q;
    image.leftCols(block) = op(q);
    for (Eigen::Index s = 1; s <= depth; ++s) {
      Matrix next = image.middleCols((s - 1) * block, block);
      orthonormalize(next, basis.leftCols(s * block), rng);
      basis.middleCols(s * block, block) = next;
      image.middleCols(s * block, block) = op(next);
    }

    Matrix t = basis.transpose() * image;
    t = 0.5 * (t + t.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(t);
    // Ascending order: take the last `block` columns, reversed.
    Matrix y = eig.eigenvectors().rightCols(block).rowwise().reverse();
    Vector theta = eig.eigenvalues().tail(block).reverse();

    Matrix ritz = basis * y;
    Matrix ritz_image = image * y;
    double scale = 1e-300;
    for (Eigen::Index i = 0; i < block; ++i) scale = std::max(scale, std::abs(theta(i)));
    double worst = 0.0;
    for (int i = 0; i < k; ++i) worst = std::max(worst, (ritz_image.col(i) - theta(i) * ritz.col(i)).norm());

    result.values = theta.head(k);
    result.vectors = ritz.leftCols(k);
    result.restarts = restart;
    if (worst <= tol * scale) {
      result.converged = true;
      break;
    }
    x = ritz;
  }
  return result;
}

}  // namespace blt::factors
