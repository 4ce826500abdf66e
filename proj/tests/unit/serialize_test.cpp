#include "blt/io.hpp"
#include "blt/serialize.hpp"
#include "doctest.h"
#include "support.hpp"

#include <string>
#include <vector>

using namespace blt;
using namespace blt::serialize;

namespace {

factors::FittedFactors small_fit() {
  const auto p = testsupport::planted(80, 12, 2, 0.8, 0.7, 3);
  utm::UserTermMatrix m;
  for (int i = 0; i < 80; ++i) m.user_ids.push_back("user" + std::to_string(100 + i));
  for (int j = 0; j < 12; ++j) m.vocabulary.push_back("term" + std::to_string(10 + j));
  m.values = (p.x.array() + 4.0).matrix().sparseView();
  m.total_tokens = Vector::Ones(80);
  factors::FactorSpec spec;
  spec.k = 2;
  return factors::fit_factors(m, spec);
}

}  // namespace

TEST_CASE("matrix json round trip is exact") {
  const Matrix m = testsupport::random_normal(4, 3, 1) / 7.0;
  CHECK(matrix_from_json(matrix_json(m)) == m);
  const Vector v = testsupport::random_normal(5, 1, 2).col(0);
  CHECK(vector_from_json(vector_json(v)) == v);
  CHECK(matrix_from_json(matrix_json(Matrix(0, 0))).size() == 0);
}

TEST_CASE("model save and load") {
  const auto fit = small_fit();
  testsupport::TempDir dir;
  save_model(dir.path(), fit.model, {{"command", "test"}});
  const auto loaded = load_model(dir.path());
  CHECK(loaded.loadings == fit.model.loadings);
  CHECK(loaded.score_weights == fit.model.score_weights);
  CHECK(loaded.vocabulary == fit.model.vocabulary);
  CHECK(loaded.stats.mean == fit.model.stats.mean);
  CHECK(model_hash(loaded) == model_hash(fit.model));
  CHECK(model_hash(loaded) == fit.scores.model_hash);

  const auto j = json::parse(io::read_file(dir.path() / "model.json"));
  CHECK(j.at("manifest").at("command") == "test");
  CHECK(j.at("hash") == fit.scores.model_hash);
}

TEST_CASE("tampered model fails verification") {
  const auto fit = small_fit();
  testsupport::TempDir dir;
  save_model(dir.path(), fit.model, json::object());
  auto j = json::parse(io::read_file(dir.path() / "model.json"));
  j["score_ridge"] = 0.5;
  io::write_file_atomic(dir.path() / "model.json", j.dump());
  CHECK_THROWS_WITH_AS(load_model(dir.path()), doctest::Contains("hash mismatch"), Error);

  save_model(dir.path(), fit.model, json::object());
  auto vocab = utm::read_lines(dir.path() / "vocabulary.txt");
  std::swap(vocab[0], vocab[1]);
  utm::write_lines(dir.path() / "vocabulary.txt", vocab);
  CHECK_THROWS_AS(load_model(dir.path()), Error);
}

TEST_CASE("model hash changes with content") {
  auto model = small_fit().model;
  const auto before = model_hash(model);
  model.loadings(0, 0) += 1e-12;
  CHECK(model_hash(model) != before);
}

TEST_CASE("scores csv round trip") {
  const auto fit = small_fit();
  const auto text = scores_csv(fit.scores, {{"seed", 1}});
  CHECK(text.rfind("# manifest {", 0) == 0);
  const auto back = parse_scores_csv(text);
  CHECK(back.user_ids == fit.scores.user_ids);
  CHECK(back.scores == fit.scores.scores);
  CHECK(back.model_hash == fit.scores.model_hash);
  CHECK(back.matrix_hash == fit.scores.matrix_hash);
  CHECK_THROWS_AS(parse_scores_csv("user_id,F1\nx,abc\n"), Error);
}

TEST_CASE("report serialization") {
  predict::EvalReport r;
  r.outcome = "income, net";
  r.feature_set = "scores";
  r.metric = "pearson_r";
  r.values = {0.5, 0.25};
  r.hyperparameters = {1, 10};
  r.seeds = {7, 8};
  r.mean = 0.375;
  const auto j = to_json(r);
  CHECK(j.at("values").size() == 2);
  const auto csv = eval_csv({r});
  CHECK(csv == "outcome,feature_set,split,metric,value,hyperparameter\n"
               "\"income, net\",scores,0,pearson_r,0.5,1\n"
               "\"income, net\",scores,1,pearson_r,0.25,10\n");
  CHECK(with_manifest("a\n", {{"k", 1}}) == "# manifest {\"k\":1}\na\n");
}

TEST_CASE("dla csv layout") {
  evalsuite::DlaReport r;
  r.top_n = 1;
  evalsuite::DlaFactor f;
  f.positive.push_back({"happy", 0.5, 0.01, 3});
  f.negative.push_back({":(", -0.25, 0.002, 1});
  r.factors.push_back(f);
  CHECK(dla_csv(r) == "factor,direction,rank,token,r,frequency,tier\n"
                      "1,positive,1,happy,0.5,0.01,3\n"
                      "1,negative,1,:(,-0.25,0.002,1\n");
  CHECK(to_json(r).at("factors")[0].at("positive")[0].at("token") == "happy");
}
