#include "blt/factors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace blt::factors {

double orthomax_criterion(const Matrix& loadings, double gamma) {
  const auto p = static_cast<double>(loadings.rows());
  double total = 0.0;
  for (Eigen::Index j = 0; j < loadings.cols(); ++j) {
    const auto sq = loadings.col(j).array().square();
    const double s2 = sq.sum();
    total += sq.square().sum() - gamma / p * s2 * s2;
  }
  return total;
}

OrthogonalRotation rotate_orthogonal(const Matrix& loadings, RotationKind criterion, int max_iter, double tol) {
  const auto p = loadings.rows();
  const auto k = loadings.cols();
  OrthogonalRotation out;
  out.rotation = Matrix::Identity(k, k);
  if (k < 2 || p == 0) {
    out.loadings = loadings;
    out.criterion.push_back(0.0);
    return out;
  }
  if (criterion != RotationKind::varimax && criterion != RotationKind::equamax) {
    throw Error("factors", "rotate_orthogonal: criterion must be varimax or equamax");
  }
  const double gamma = criterion == RotationKind::varimax ? 1.0 : static_cast<double>(k) / 2.0;
  const double pd = static_cast<double>(p);

  // Kaiser normalization.
  Vector norms = loadings.rowwise().norm();
  Matrix a = loadings;
  for (Eigen::Index i = 0; i < p; ++i) {
    if (norms(i) > 0.0) a.row(i) /= norms(i);
  }

  double current = orthomax_criterion(a, gamma);
  out.criterion.push_back(current);
  out.converged = false;
  for (int sweep = 1; sweep <= max_iter; ++sweep) {
    for (Eigen::Index j = 0; j < k - 1; ++j) {
      for (Eigen::Index l = j + 1; l < k; ++l) {
        const auto x = a.col(j).array();
        const auto y = a.col(l).array();
        const Eigen::ArrayXd u = x.square() - y.square();
        const Eigen::ArrayXd v = 2.0 * x * y;
        const double sa = u.sum();
        const double sb = v.sum();
        const double sc = (u.square() - v.square()).sum();
        const double sd = 2.0 * (u * v).sum();
        const double num = sd - 2.0 * gamma * sa * sb / pd;
        const double den = sc - gamma * (sa * sa - sb * sb) / pd;
        const double angle = 0.25 * std::atan2(num, den);
        if (std::abs(angle) < 1e-15) continue;
        const double c = std::cos(angle);
        const double s = std::sin(angle);
        const Vector xj = a.col(j);
        a.col(j) = c * xj + s * a.col(l);
        a.col(l) = -s * xj + c * a.col(l);
        const Vector tj = out.rotation.col(j);
        out.rotation.col(j) = c * tj + s * out.rotation.col(l);
        out.rotation.col(l) = -s * tj + c * out.rotation.col(l);
      }
    }
    const double next = orthomax_criterion(a, gamma);
    out.criterion.push_back(next);
    out.sweeps = sweep;
    const double gain = next - current;
    current = next;
    if (gain < tol * std::max(1.0, std::abs(current))) {
      out.converged = true;
      break;
    }
  }

  for (Eigen::Index i = 0; i < p; ++i) a.row(i) *= norms(i);
  out.loadings = std::move(a);
  return out;
}

PromaxRotation rotate_promax(const Matrix& loadings, int kappa) {
  if (kappa < 2) throw Error("factors", "promax kappa must be at least 2");
  const auto k = loadings.cols();
  PromaxRotation out;
  if (k < 2) {
    out.pattern = loadings;
    out.phi = Matrix::Identity(k, k);
    out.rotation = Matrix::Identity(k, k);
    out.pre_rotation.loadings = loadings;
    out.pre_rotation.rotation = Matrix::Identity(k, k);
    return out;
  }
  out.pre_rotation = rotate_orthogonal(loadings, RotationKind::equamax);
  const Matrix& a = out.pre_rotation.loadings;

  auto fall_back = [&] {
    out.pattern = a;
    out.phi = Matrix::Identity(k, k);
    out.rotation = out.pre_rotation.rotation;
    out.fell_back = true;
    return out;
  };

  const Matrix target = a.array().sign() * a.array().abs().pow(static_cast<double>(kappa));
  const Matrix normal = a.transpose() * a;
  Eigen::FullPivLU<Matrix> normal_lu(normal);
  if (normal_lu.rank() < k) return fall_back();
  Matrix u = normal_lu.solve(a.transpose() * target);

  Eigen::FullPivLU<Matrix> u_lu(u);
  if (u_lu.rank() < k) return fall_back();
  const Matrix gram_inv = (u.transpose() * u).inverse();
  for (Eigen::Index j = 0; j < k; ++j) {
    if (!(gram_inv(j, j) > 0.0) || !std::isfinite(gram_inv(j, j))) return fall_back();
  }
  u = u * gram_inv.diagonal().cwiseSqrt().asDiagonal();

  Matrix phi = (u.transpose() * u).inverse();
  phi = 0.5 * (phi + phi.transpose()).eval();
  phi.diagonal().setOnes();
  if (!phi.allFinite()) return fall_back();

  out.pattern = a * u;
  out.phi = std::move(phi);
  out.rotation = out.pre_rotation.rotation * u;
  return out;
}

FactorModel rotate(FactorModel model, RotationKind kind, int kappa) {
  const auto k = model.unrotated.cols();
  model.rotation = RotationRecord{};
  model.rotation.kind = kind;
  model.rotation.matrix = Matrix::Identity(k, k);
  model.loadings = model.unrotated;
  model.phi = Matrix::Identity(k, k);
  if (k >= 2) {
    switch (kind) {
      case RotationKind::none:
        break;
      case RotationKind::varimax:
      case RotationKind::equamax: {
        auto rot = rotate_orthogonal(model.unrotated, kind);
        model.loadings = std::move(rot.loadings);
        model.rotation.matrix = std::move(rot.rotation);
        model.rotation.criterion_trace = std::move(rot.criterion);
        model.rotation.converged = rot.converged;
        break;
      }
      case RotationKind::promax: {
        auto rot = rotate_promax(model.unrotated, kappa);
        model.rotation.kappa = kappa;
        model.loadings = std::move(rot.pattern);
        model.phi = std::move(rot.phi);
        model.rotation.matrix = std::move(rot.rotation);
        model.rotation.criterion_trace = std::move(rot.pre_rotation.criterion);
        model.rotation.converged = rot.pre_rotation.converged;
        model.rotation.oblique_fallback = rot.fell_back;
        break;
      }
    }
  } else if (kind == RotationKind::promax) {
    model.rotation.kappa = kappa;
  }

  // Order columns by explained sum of squares, largest first.
  const Vector ss = model.explained();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return ss(a) > ss(b); });
  Matrix loadings(model.loadings.rows(), k), rotation(model.rotation.matrix.rows(), k), phi(k, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const auto src = order[static_cast<std::size_t>(j)];
    loadings.col(j) = model.loadings.col(src);
    rotation.col(j) = model.rotation.matrix.col(src);
    for (Eigen::Index i = 0; i < k; ++i) phi(i, j) = model.phi(order[static_cast<std::size_t>(i)], src);
  }
  model.loadings = std::move(loadings);
  model.rotation.matrix = std::move(rotation);
  model.phi = std::move(phi);
  return model;
}

}  // namespace blt::factors
