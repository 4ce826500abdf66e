#pragma once

// LDA baseline: collapsed Gibbs sampling over user documents.

#include "blt/common.hpp"
#include "blt/corpus.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace blt::topics {

struct LdaOptions {
  int k = 5;
  double alpha_total = 5.0;  // symmetric alpha_k = alpha_total / k
  double beta = 0.01;
  int iterations = 500;
  int burn_in = -1;  // sweeps before averaging; -1 means iterations / 2
  std::uint64_t seed = 1;
};

struct TopicModel {
  int k = 0;
  double alpha_total = 0.0;
  double beta = 0.0;
  int iterations = 0;
  std::uint64_t seed = 0;
  bool hyperparameter_optimization = false;  // fixed symmetric priors
  std::vector<std::string> vocabulary;
  std::vector<std::string> user_ids;
  Matrix topic_word;   // k x vocabulary, rows sum to 1
  Matrix proportions;  // users x k, rows sum to 1
  std::vector<std::string> skipped_users;  // no in-vocabulary tokens
};

/// Fits LDA on each user's aggregated tokens restricted to `vocabulary`
/// (the whole corpus lexicon, in id order, when empty). Proportions are
/// posterior means averaged over the post-burn-in sweeps.
TopicModel fit_lda(const corpus::UserCorpus& corpus, const LdaOptions& options,
                   const std::vector<std::string>& vocabulary = {});

/// Sum of the off-diagonal entries and of the diagonal of the covariance
/// matrix of the users' topic proportions.
struct CompositionCheck {
  double off_diagonal_sum = 0.0;
  double variance_sum = 0.0;
};
CompositionCheck composition_covariance(const Matrix& proportions);

}  // namespace blt::topics
