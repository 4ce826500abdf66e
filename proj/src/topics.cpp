#include "blt/topics.hpp"

#include "blt/rng.hpp"

#include <algorithm>
#include <numeric>

namespace blt::topics {

TopicModel fit_lda(const corpus::UserCorpus& corpus, const LdaOptions& options,
                   const std::vector<std::string>& vocabulary) {
  if (options.k < 2) throw Error("factors", "LDA needs k >= 2");
  if (!(options.alpha_total > 0.0) || !(options.beta > 0.0)) throw Error("factors", "LDA priors must be positive");
  if (options.iterations < 1) throw Error("factors", "LDA needs at least one iteration");

  TopicModel model;
  model.k = options.k;
  model.alpha_total = options.alpha_total;
  model.beta = options.beta;
  model.iterations = options.iterations;
  model.seed = options.seed;

  std::vector<std::int64_t> word_of(corpus.lexicon.size(), -1);
  if (vocabulary.empty()) {
    for (std::size_t id = 0; id < corpus.lexicon.size(); ++id) {
      word_of[id] = static_cast<std::int64_t>(id);
      model.vocabulary.push_back(corpus.lexicon.token(static_cast<corpus::TokenId>(id)));
    }
  } else {
    model.vocabulary = vocabulary;
    for (std::size_t w = 0; w < vocabulary.size(); ++w) {
      if (auto id = corpus.lexicon.find(vocabulary[w])) word_of[*id] = static_cast<std::int64_t>(w);
    }
  }
  const auto k = static_cast<std::size_t>(options.k);
  const std::size_t v = model.vocabulary.size();

  // Documents as word-id sequences in message order.
  std::vector<std::vector<std::uint32_t>> docs;
  for (const auto& user : corpus.users) {
    std::vector<std::uint32_t> words;
    for (const auto& m : user.messages) {
      for (auto t : m.tokens) {
        if (word_of[t] >= 0) words.push_back(static_cast<std::uint32_t>(word_of[t]));
      }
    }
    if (words.empty()) {
      model.skipped_users.push_back(user.user_id);
      continue;
    }
    model.user_ids.push_back(user.user_id);
    docs.push_back(std::move(words));
  }
  const std::size_t d_count = docs.size();
  if (d_count == 0) throw Error("factors", "LDA corpus has no non-empty documents");

  const double alpha = options.alpha_total / static_cast<double>(k);
  const double beta = options.beta;
  const double vbeta = beta * static_cast<double>(v);

  std::vector<std::vector<std::uint16_t>> z(d_count);
  std::vector<std::uint32_t> doc_topic(d_count * k, 0);
  std::vector<std::uint32_t> word_topic(v * k, 0);
  std::vector<std::uint32_t> topic_total(k, 0);

  Rng rng(options.seed);
  for (std::size_t d = 0; d < d_count; ++d) {
    z[d].resize(docs[d].size());
    for (std::size_t i = 0; i < docs[d].size(); ++i) {
      const auto t = static_cast<std::uint16_t>(rng.below(k));
      z[d][i] = t;
      ++doc_topic[d * k + t];
      ++word_topic[docs[d][i] * k + t];
      ++topic_total[t];
    }
  }

  const int burn_in = options.burn_in >= 0 ? std::min(options.burn_in, options.iterations - 1) : options.iterations / 2;
  Matrix theta_sum = Matrix::Zero(static_cast<Eigen::Index>(d_count), static_cast<Eigen::Index>(k));
  Matrix phi_sum = Matrix::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(v));
  int samples = 0;
  std::vector<double> weights(k);

  for (int sweep = 0; sweep < options.iterations; ++sweep) {
    for (std::size_t d = 0; d < d_count; ++d) {
      auto* dt = &doc_topic[d * k];
      for (std::size_t i = 0; i < docs[d].size(); ++i) {
        const auto w = docs[d][i];
        auto* wt = &word_topic[w * k];
        const auto old = z[d][i];
        --dt[old];
        --wt[old];
        --topic_total[old];
        double total = 0.0;
        for (std::size_t t = 0; t < k; ++t) {
          total += (dt[t] + alpha) * (wt[t] + beta) / (topic_total[t] + vbeta);
          weights[t] = total;
        }
        const double u = rng.uniform() * total;
        std::size_t pick = static_cast<std::size_t>(std::upper_bound(weights.begin(), weights.end(), u) - weights.begin());
        if (pick >= k) pick = k - 1;
        z[d][i] = static_cast<std::uint16_t>(pick);
        ++dt[pick];
        ++wt[pick];
        ++topic_total[pick];
      }
    }
    if (sweep < burn_in) continue;
    ++samples;
    for (std::size_t d = 0; d < d_count; ++d) {
      const double denom = static_cast<double>(docs[d].size()) + options.alpha_total;
      for (std::size_t t = 0; t < k; ++t) {
        theta_sum(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(t)) += (doc_topic[d * k + t] + alpha) / denom;
      }
    }
    for (std::size_t t = 0; t < k; ++t) {
      const double denom = topic_total[t] + vbeta;
      for (std::size_t w = 0; w < v; ++w) {
        phi_sum(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(w)) += (word_topic[w * k + t] + beta) / denom;
      }
    }
  }

  model.proportions = theta_sum / static_cast<double>(samples);
  model.topic_word = phi_sum / static_cast<double>(samples);
  // Renormalize away accumulated rounding so every row sums to one.
  for (Eigen::Index r = 0; r < model.proportions.rows(); ++r) model.proportions.row(r) /= model.proportions.row(r).sum();
  for (Eigen::Index r = 0; r < model.topic_word.rows(); ++r) model.topic_word.row(r) /= model.topic_word.row(r).sum();
  return model;
}

CompositionCheck composition_covariance(const Matrix& proportions) {
  const auto n = static_cast<double>(proportions.rows());
  const Matrix centered = proportions.rowwise() - proportions.colwise().mean();
  const Matrix cov = centered.transpose() * centered / (n - 1.0);
  CompositionCheck check;
  check.variance_sum = cov.trace();
  check.off_diagonal_sum = cov.sum() - check.variance_sum;
  return check;
}

}  // namespace blt::topics
