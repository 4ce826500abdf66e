#include "blt/topics.hpp"
#include "doctest.h"
#include "support.hpp"

#include <string>
#include <vector>

using namespace blt;
using namespace blt::topics;

namespace {

// Users in block b only use the words "b<b>w0".."b<b>w9".
corpus::UserCorpus block_corpus(int blocks, int users_per_block, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<corpus::Message> msgs;
  for (int b = 0; b < blocks; ++b) {
    for (int u = 0; u < users_per_block; ++u) {
      std::string text;
      for (int w = 0; w < 60; ++w) text += "b" + std::to_string(b) + "w" + std::to_string(rng.below(10)) + " ";
      msgs.push_back({"u" + std::to_string(b) + "_" + std::to_string(u), text, {}});
    }
  }
  return corpus::build_corpus(msgs, {}, corpus::FilterConfig::none(), corpus::Tokenizer({}, {}));
}

}  // namespace

TEST_CASE("separable corpus gives dominant topics") {
  const auto c = block_corpus(3, 10, 1);
  LdaOptions o;
  o.k = 3;
  o.iterations = 200;
  o.seed = 5;
  const auto m = fit_lda(c, o);
  REQUIRE(m.proportions.rows() == 30);
  for (Eigen::Index u = 0; u < 30; ++u) CHECK(m.proportions.row(u).maxCoeff() > 0.8);
  CHECK((m.proportions.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-9);
  CHECK((m.topic_word.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-9);
  CHECK_FALSE(m.hyperparameter_optimization);
}

TEST_CASE("composition covariance identity") {
  const auto c = block_corpus(4, 8, 2);
  LdaOptions o;
  o.k = 5;
  o.iterations = 60;
  const auto m = fit_lda(c, o);
  const auto check = composition_covariance(m.proportions);
  CHECK(std::abs(check.off_diagonal_sum + check.variance_sum) < 1e-9);
  CHECK(check.variance_sum > 0.0);
}

TEST_CASE("same seed, same model") {
  const auto c = block_corpus(2, 5, 3);
  LdaOptions o;
  o.k = 2;
  o.iterations = 30;
  const auto a = fit_lda(c, o);
  const auto b = fit_lda(c, o);
  CHECK(a.proportions == b.proportions);
  CHECK(a.topic_word == b.topic_word);
}

TEST_CASE("users without vocabulary tokens are skipped") {
  const auto c = block_corpus(2, 3, 4);
  LdaOptions o;
  o.k = 2;
  o.iterations = 10;
  std::vector<std::string> vocab;
  for (int w = 0; w < 10; ++w) vocab.push_back("b0w" + std::to_string(w));
  const auto m = fit_lda(c, o, vocab);
  CHECK(m.user_ids.size() == 3);
  CHECK(m.skipped_users.size() == 3);
}
