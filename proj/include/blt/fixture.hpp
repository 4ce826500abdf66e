#pragma once

// Synthetic planted-factor corpora: users whose term usage is driven by
// known latent factors, with demographics, outcomes, likes and timestamps.

#include "blt/common.hpp"
#include "blt/corpus.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace blt::fixture {

struct FixtureConfig {
  std::size_t users = 500;
  int k = 5;
  std::size_t terms = 2000;
  double noise = 0.5;               // std of the per user x term log-rate perturbation
  double loading = 0.8;             // log-rate shift per unit factor score
  double base_spread = 0.5;         // std of the per-term base log-rate
  double factor_correlation = 0.0;  // common off-diagonal correlation of the factors
  int transient = 0;                // last `transient` factors act only in period 0
  int periods = 1;
  std::size_t tokens_per_period = 3000;
  std::size_t words_per_message = 25;
  int likes_clusters = 20;
  std::size_t likes_per_cluster = 10;
  std::int64_t start = 1262304000;  // 2010-01-01T00:00:00Z
  std::uint64_t seed = 1;
};

struct Fixture {
  FixtureConfig config;
  std::vector<std::string> user_ids;  // sorted
  std::vector<std::string> vocabulary;
  std::vector<int> term_factor;  // planted factor of each term
  std::vector<int> term_sign;    // +1 / -1
  Matrix factors;                // users x k true scores
  std::vector<corpus::Message> messages;
  corpus::DemographicTable demographics;
  std::vector<std::string> outcome_names;
  Matrix outcomes;  // users x outcome_names
  std::vector<std::pair<std::string, std::string>> likes;  // (user, like)
  std::vector<int> like_cluster;                           // planted like cluster per user
};

/// Generated word for term index `t`; consonant-vowel syllables, never a
/// default stopword or emoticon.
std::vector<std::string> synthetic_vocabulary(std::size_t terms);

Fixture generate(const FixtureConfig& config);

/// Writes messages.csv, demographics.csv, outcomes.csv, likes.csv,
/// truth_factors.csv, truth_terms.csv, fixture.json and config.json.
void write(const std::filesystem::path& dir, const Fixture& fixture);

}  // namespace blt::fixture
