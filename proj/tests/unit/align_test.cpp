#include "blt/align.hpp"
#include "doctest.h"
#include "support.hpp"

#include <limits>
#include <vector>

using namespace blt;
using namespace blt::align;

TEST_CASE("two by two examples") {
  Matrix a(2, 2);
  a << 1, 2, 2, 1;
  auto r = hungarian(a);
  CHECK(r.assignment == std::vector<int>{0, 1});
  CHECK(r.total_cost == 2.0);

  Matrix b(2, 2);
  b << 4, 1, 1, 4;
  r = hungarian(b);
  CHECK(r.assignment == std::vector<int>{1, 0});
  CHECK(r.total_cost == 2.0);
}

TEST_CASE("random integer matrices match brute force") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + trial % 5;
    Matrix c(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) c(i, j) = static_cast<double>(rng.below(10));
    const auto r = hungarian(c);
    CHECK(r.total_cost == testsupport::brute_force_min_cost(c));
    std::vector<int> sorted = r.assignment;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < n; ++i) CHECK(sorted[static_cast<std::size_t>(i)] == i);
  }
}

TEST_CASE("ties resolve to the lexicographically smallest assignment") {
  const Matrix c = Matrix::Ones(4, 4);
  CHECK(hungarian(c).assignment == std::vector<int>{0, 1, 2, 3});
  Matrix d(3, 3);
  d << 1, 1, 5, 1, 1, 5, 5, 5, 0;
  CHECK(hungarian(d).assignment == std::vector<int>{0, 1, 2});
}

TEST_CASE("rectangular inputs are padded") {
  Matrix c(2, 3);
  c << 5, 1, 9, 2, 8, 0;
  auto r = hungarian(c);
  CHECK(r.assignment == std::vector<int>{1, 2});
  CHECK(r.total_cost == 1.0);
  Matrix t(3, 2);
  t << 5, 1, 2, 8, 0, 0;
  r = hungarian(t);
  CHECK(r.total_cost == 1.0);
  CHECK(std::count(r.assignment.begin(), r.assignment.end(), -1) == 1);
}

TEST_CASE("non-finite costs rejected") {
  Matrix c = Matrix::Ones(2, 2);
  c(0, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(hungarian(c), Error);
}

TEST_CASE("permuted and negated columns are recovered") {
  const Matrix a = testsupport::random_normal(200, 4, 9);
  Matrix b(200, 4);
  b.col(0) = a.col(2);
  b.col(1) = -a.col(0);
  b.col(2) = a.col(3);
  b.col(3) = a.col(1);
  const auto r = align_columns(a, b);
  CHECK(r.permutation == std::vector<int>{1, 3, 0, 2});
  CHECK(r.signs == std::vector<int>{-1, 1, 1, 1});
  CHECK(std::abs(r.mean_abs_r - 1.0) < 1e-9);
}

TEST_CASE("independent noise aligns weakly") {
  const auto r = align_columns(testsupport::random_normal(1000, 5, 10), testsupport::random_normal(1000, 5, 11));
  CHECK(r.mean_abs_r < 0.2);
}

TEST_CASE("single factor") {
  const Matrix a = testsupport::random_normal(50, 1, 12);
  const Matrix b = a + testsupport::random_normal(50, 1, 13);
  const auto r = align_columns(a, b);
  CHECK(r.mean_abs_r == doctest::Approx(std::abs(testsupport::naive_pearson(a.col(0), b.col(0)))));
}

TEST_CASE("score sets must cover the same users") {
  factors::FactorScores a, b;
  a.user_ids = {"x", "y", "z"};
  b.user_ids = {"x", "z", "y"};
  a.scores = b.scores = testsupport::random_normal(3, 1, 1);
  CHECK_THROWS_AS(align_scores(a, b), Error);
}
