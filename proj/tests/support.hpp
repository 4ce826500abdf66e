#pragma once

// Shared helpers and independent oracles for the unit and acceptance tests.

#include "blt/common.hpp"
#include "blt/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <unistd.h>

namespace testsupport {

using blt::Matrix;
using blt::Vector;

inline Matrix random_normal(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  blt::Rng rng(seed);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

inline Matrix random_uniform(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  blt::Rng rng(seed);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform();
  return m;
}

/// Column z-scores with population standard deviation; constant columns become 0.
inline Matrix zscore(const Matrix& x) {
  Matrix z = x;
  const double n = static_cast<double>(x.rows());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double mean = x.col(j).mean();
    const double sd = std::sqrt((x.col(j).array() - mean).square().sum() / n);
    if (sd > 0.0) z.col(j) = (x.col(j).array() - mean) / sd;
    else z.col(j).setZero();
  }
  return z;
}

/// Textbook Pearson correlation.
inline double naive_pearson(const Vector& x, const Vector& y) {
  const double n = static_cast<double>(x.size());
  const double mx = x.sum() / n, my = y.sum() / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    sxy += (x(i) - mx) * (y(i) - my);
    sxx += (x(i) - mx) * (x(i) - mx);
    syy += (y(i) - my) * (y(i) - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

/// Minimum assignment cost by enumerating every permutation.
inline double brute_force_min_cost(const Matrix& cost) {
  std::vector<int> perm(static_cast<std::size_t>(cost.rows()));
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) total += cost(static_cast<Eigen::Index>(i), perm[i]);
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

/// AUC as the share of (positive, negative) pairs ranked correctly, ties one half.
inline double pair_count_auc(std::span<const int> labels, const Vector& scores) {
  double concordant = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (labels[j] != 0) continue;
      pairs += 1.0;
      const double a = scores(static_cast<Eigen::Index>(i)), b = scores(static_cast<Eigen::Index>(j));
      if (a > b) concordant += 1.0;
      else if (a == b) concordant += 0.5;
    }
  }
  return concordant / pairs;
}

/// Data with `k` orthogonal planted factors: each column loads `loading` on
/// factor (column % k) plus unit-variance noise scaled by `noise`.
struct Planted {
  Matrix x;        // users x terms
  Matrix factors;  // users x k
};

inline Planted planted(Eigen::Index users, Eigen::Index terms, int k, double loading, double noise,
                       std::uint64_t seed) {
  Planted p;
  p.factors = random_normal(users, k, seed);
  const Matrix e = random_normal(users, terms, seed + 1000);
  p.x.resize(users, terms);
  for (Eigen::Index t = 0; t < terms; ++t) p.x.col(t) = loading * p.factors.col(t % k) + noise * e.col(t);
  return p;
}

/// Orthomax criterion on Kaiser-normalized rows, written out directly.
inline double normalized_orthomax(const Matrix& loadings, double gamma) {
  Matrix a = loadings;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double n = a.row(i).norm();
    if (n > 0.0) a.row(i) /= n;
  }
  const double p = static_cast<double>(a.rows());
  double total = 0.0;
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    double s4 = 0.0, s2 = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      s4 += std::pow(a(i, j), 4);
      s2 += a(i, j) * a(i, j);
    }
    total += s4 - gamma / p * s2 * s2;
  }
  return total;
}

/// Two-column loadings rotated by the grid angle (step `step` radians over a
/// quarter turn) that maximizes the normalized orthomax criterion.
inline Matrix grid_search_rotation(const Matrix& loadings, double gamma, double step = 0.001) {
  Matrix best = loadings;
  double best_value = -std::numeric_limits<double>::infinity();
  for (double theta = 0.0; theta < std::numbers::pi / 2; theta += step) {
    Matrix rot(2, 2);
    rot << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
    const Matrix candidate = loadings * rot;
    const double value = normalized_orthomax(candidate, gamma);
    if (value > best_value) {
      best_value = value;
      best = candidate;
    }
  }
  return best;
}

/// Largest entrywise difference between `a` and `b` after the best column
/// permutation and per-column sign flips of `b`.
inline double diff_up_to_perm_sign(const Matrix& a, const Matrix& b) {
  std::vector<int> perm(static_cast<std::size_t>(a.cols()));
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double worst = 0.0;
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      const auto col = b.col(perm[static_cast<std::size_t>(j)]);
      const double plus = (a.col(j) - col).cwiseAbs().maxCoeff();
      const double minus = (a.col(j) + col).cwiseAbs().maxCoeff();
      worst = std::max(worst, std::min(plus, minus));
    }
    best = std::min(best, worst);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

/// Unique scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("blt-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testsupport
