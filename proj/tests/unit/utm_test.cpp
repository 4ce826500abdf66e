#include "blt/utm.hpp"
#include "doctest.h"
#include "support.hpp"

#include <string>
#include <vector>

using namespace blt;
using namespace blt::utm;
using corpus::Message;

namespace {

corpus::UserCorpus make_corpus(const std::vector<Message>& msgs) {
  return corpus::build_corpus(msgs, {}, corpus::FilterConfig::none(), corpus::Tokenizer({}, {}));
}

Demographics demo_from(const Vector& age, const Vector& gender) {
  Demographics d;
  for (Eigen::Index i = 0; i < age.size(); ++i) d.user_ids.push_back("u" + std::to_string(i));
  d.age = age.array() - age.mean();
  d.gender = gender;
  return d;
}

}  // namespace

TEST_CASE("vocabulary selection") {
  auto c = make_corpus({{"a", "good x", {}}, {"b", "good y", {}}, {"c", "good z", {}}});
  auto v = select_vocabulary(c, 10, 0.5);
  CHECK(v == std::vector<std::string>{"good"});

  std::vector<Message> msgs;
  for (int i = 0; i < 100; ++i) msgs.push_back({"u" + std::to_string(i), "common", {}});
  msgs.push_back({"u0", "rare", {}});
  c = make_corpus(msgs);
  v = select_vocabulary(c, 10, 0.05);
  CHECK(v == std::vector<std::string>{"common"});
}

TEST_CASE("vocabulary tie at truncation boundary") {
  auto c = make_corpus({{"a", "top zeta beta", {}}, {"b", "top zeta beta", {}}});
  CHECK(select_vocabulary(c, 2, 1e-9) == std::vector<std::string>{"beta", "top"});
}

TEST_CASE("relative frequency rows") {
  auto c = make_corpus({{"u1", "a a b b", {}}, {"u2", "a a c c", {}}, {"u3", "c d", {}}});
  const auto m = build_matrix(c, {"a", "b"});
  REQUIRE(m.users() == 2);
  CHECK(m.dropped_users == std::vector<std::string>{"u3"});
  const Matrix d = m.dense();
  CHECK(d(0, 0) == doctest::Approx(0.5));
  CHECK(d(0, 1) == doctest::Approx(0.5));
  CHECK(d(1, 0) == doctest::Approx(0.5));
  CHECK(d(1, 1) == 0.0);
  CHECK(m.total_tokens(1) == 4.0);
}

TEST_CASE("standardize columns") {
  UserTermMatrix m;
  m.user_ids = {"a", "b", "c"};
  m.vocabulary = {"x", "y"};
  Matrix d(3, 2);
  d << 1, 5, 2, 5, 3, 5;
  m.values = d.sparseView();
  const auto s = standardize(m);
  CHECK(s.z(0, 0) == doctest::Approx(-std::sqrt(1.5)));
  CHECK(s.z(1, 0) == doctest::Approx(0.0));
  CHECK(s.z(2, 0) == doctest::Approx(std::sqrt(1.5)));
  CHECK(s.z.col(1).isZero());
  CHECK(s.stats.std(0) == doctest::Approx(std::sqrt(2.0 / 3.0)));
  CHECK(s.stats.zero_variance_count() == 1);

  const auto again = standardize(m, &s.stats);
  CHECK(again.z.isApprox(s.z));
}

TEST_CASE("population z-score uses std sqrt(2/3) for [1,2,3]") {
  UserTermMatrix m;
  m.user_ids = {"a", "b", "c"};
  m.vocabulary = {"x"};
  Matrix d(3, 1);
  d << 1, 2, 3;
  m.values = d.sparseView();
  const auto s = standardize(m);
  const Vector expected = (d.col(0).array() - 2.0) / std::sqrt(2.0 / 3.0);
  CHECK((s.z.col(0) - expected).norm() < 1e-12);
}

TEST_CASE("residualize examples") {
  const Matrix raw = testsupport::random_normal(60, 3, 5);
  const Vector age = 30.0 + 10.0 * raw.col(0).array();
  Vector gender(60);
  for (int i = 0; i < 60; ++i) gender(i) = i % 2;
  const auto demo = demo_from(age, gender);

  Matrix values(60, 3);
  values.col(0) = age;
  values.col(2) = 2.0 * age + raw.col(2);
  // Orthogonal to [1, age, gender].
  Matrix design(60, 3);
  design << Vector::Ones(60), age, gender;
  Eigen::HouseholderQR<Matrix> qr(design);
  const Matrix q = qr.householderQ() * Matrix::Identity(60, 3);
  values.col(1) = raw.col(1) - q * (q.transpose() * raw.col(1));

  const auto r = residualize(values, demo);
  CHECK(r.values.col(0).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((r.values.col(1) - values.col(1)).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(std::abs(testsupport::naive_pearson(r.values.col(2), age)) < 1e-10);
  CHECK(r.dropped_regressors.empty());
}

TEST_CASE("collinear covariate dropped") {
  const Vector age = testsupport::random_normal(20, 1, 2).col(0);
  const auto r = residualize(Matrix::Ones(20, 1), demo_from(age, Vector::Ones(20)));
  CHECK(r.dropped_regressors == std::vector<std::string>{"gender"});
  CHECK(r.values.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("csr encoding round trip and persisted matrix") {
  auto c = make_corpus({{"u1", "a b b", {}}, {"u2", "b c", {}}, {"u3", "a a a c", {}}});
  const auto m = build_matrix(c, {"a", "b", "c"});
  const auto decoded = decode_csr(encode_csr(m.values));
  CHECK(Matrix(decoded).isApprox(m.dense()));

  testsupport::TempDir dir;
  save_matrix(dir.path(), m, column_stats(m));
  const auto loaded = load_matrix(dir.path());
  CHECK(loaded.user_ids == m.user_ids);
  CHECK(loaded.vocabulary == m.vocabulary);
  CHECK(loaded.dense() == m.dense());
  CHECK_THROWS(decode_csr("short"));
}

TEST_CASE("row subset keeps order") {
  auto c = make_corpus({{"u1", "a", {}}, {"u2", "b", {}}, {"u3", "a b", {}}});
  const auto m = build_matrix(c, {"a", "b"});
  const auto sub = m.rows({2, 0});
  CHECK(sub.user_ids == std::vector<std::string>{"u3", "u1"});
  CHECK(sub.dense().row(0) == m.dense().row(2));
}
