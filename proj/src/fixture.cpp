#include "blt/fixture.hpp"

#include "blt/io.hpp"
#include "blt/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_set>

namespace blt::fixture {

namespace {

constexpr std::string_view kConsonants = "bdfgklmnprstvz";
constexpr std::string_view kVowels = "aeiou";
constexpr double kDay = 86400.0;
constexpr double kPeriodMonths = 6.0;
constexpr double kDaysPerMonth = 30.44;

std::string syllable(std::size_t s) {
  std::string out;
  out += kConsonants[s / kVowels.size()];
  out += kVowels[s % kVowels.size()];
  return out;
}

std::string padded(std::size_t value, int width) {
  std::string s = std::to_string(value);
  if (static_cast<int>(s.size()) < width) s.insert(0, static_cast<std::size_t>(width) - s.size(), '0');
  return s;
}

}  // namespace

std::vector<std::string> synthetic_vocabulary(std::size_t terms) {
  const std::size_t base = kConsonants.size() * kVowels.size();
  std::unordered_set<std::string> reserved(corpus::default_stopwords().begin(), corpus::default_stopwords().end());
  for (const auto& e : corpus::default_emoticons()) reserved.insert(e);
  std::vector<std::string> words;
  words.reserve(terms);
  for (std::size_t code = 0; words.size() < terms; ++code) {
    std::string w;
    if (code < base * base) {
      w = syllable(code % base) + syllable(code / base);
    } else {
      std::size_t rest = code - base * base;
      w = syllable(rest % base);
      rest /= base;
      w += syllable(rest % base);
      rest /= base;
      w += syllable(rest % base);
      if (rest >= base) w += syllable((rest / base) % base);
    }
    if (!reserved.contains(w)) words.push_back(std::move(w));
  }
  return words;
}

Fixture generate(const FixtureConfig& config) {
  if (config.users < 2) throw Error("cli", "fixture needs at least 2 users");
  if (config.k < 1) throw Error("cli", "fixture needs k >= 1");
  if (config.terms < static_cast<std::size_t>(config.k)) throw Error("cli", "fixture needs at least k terms");
  if (config.periods < 1) throw Error("cli", "fixture needs at least one period");
  if (config.transient < 0 || config.transient > config.k) throw Error("cli", "fixture transient count out of range");
  if (config.words_per_message < 1) throw Error("cli", "fixture needs at least one word per message");
  if (!(config.factor_correlation > -1.0 / config.k && config.factor_correlation < 1.0) && config.k > 1) {
    throw Error("cli", "fixture factor correlation out of range");
  }

  Fixture fx;
  fx.config = config;
  const auto n = static_cast<Eigen::Index>(config.users);
  const auto p = static_cast<Eigen::Index>(config.terms);
  const int k = config.k;
  const int width = static_cast<int>(std::to_string(config.users).size());
  for (std::size_t u = 0; u < config.users; ++u) fx.user_ids.push_back("user" + padded(u + 1, width));
  fx.vocabulary = synthetic_vocabulary(config.terms);

  // Latent factors with a common correlation.
  Rng factor_rng(mix_seed(config.seed, 1));
  Matrix corr = Matrix::Constant(k, k, config.factor_correlation);
  corr.diagonal().setOnes();
  const Matrix chol = Eigen::LLT<Matrix>(corr).matrixL();
  Matrix z(n, k);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int f = 0; f < k; ++f) z(i, f) = factor_rng.normal();
  fx.factors = z * chol.transpose();

  Rng term_rng(mix_seed(config.seed, 2));
  Vector base(p);
  fx.term_factor.resize(config.terms);
  fx.term_sign.resize(config.terms);
  for (Eigen::Index t = 0; t < p; ++t) {
    base(t) = config.base_spread * term_rng.normal();
    fx.term_factor[static_cast<std::size_t>(t)] = static_cast<int>(t % k);
    fx.term_sign[static_cast<std::size_t>(t)] = (t / k) % 2 == 0 ? 1 : -1;
  }

  const double window = kPeriodMonths * kDaysPerMonth * kDay;
  const double margin = 2.0 * kDay;
  Rng text_rng(mix_seed(config.seed, 3));
  Vector rate(p);
  std::vector<double> cdf(static_cast<std::size_t>(p));
  for (Eigen::Index u = 0; u < n; ++u) {
    Vector eps(p);
    for (Eigen::Index t = 0; t < p; ++t) eps(t) = config.noise * text_rng.normal();
    const auto& uid = fx.user_ids[static_cast<std::size_t>(u)];
    for (int period = 0; period < config.periods; ++period) {
      double total = 0.0;
      for (Eigen::Index t = 0; t < p; ++t) {
        const int f = fx.term_factor[static_cast<std::size_t>(t)];
        const bool active = f < k - config.transient || period == 0;
        const double shift = active ? config.loading * fx.term_sign[static_cast<std::size_t>(t)] * fx.factors(u, f) : 0.0;
        total += std::exp(base(t) + eps(t) + shift);
        cdf[static_cast<std::size_t>(t)] = total;
      }
      const double lo = period == 0 ? 0.0 : period * window + margin;
      const double hi = (period + 1) * window - margin;
      std::size_t remaining = config.tokens_per_period;
      while (remaining > 0) {
        const std::size_t len = std::min(remaining, config.words_per_message);
        remaining -= len;
        std::string text;
        for (std::size_t w = 0; w < len; ++w) {
          const double x = text_rng.uniform() * total;
          auto idx = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), x) - cdf.begin());
          idx = std::min(idx, cdf.size() - 1);
          if (w > 0) text += ' ';
          text += fx.vocabulary[idx];
        }
        const auto offset = static_cast<std::int64_t>(lo + text_rng.uniform() * (hi - lo));
        fx.messages.push_back({uid, std::move(text), config.start + offset});
      }
    }
  }

  Rng demo_rng(mix_seed(config.seed, 4));
  std::vector<double> age(config.users);
  std::vector<double> female(config.users);
  for (std::size_t u = 0; u < config.users; ++u) {
    age[u] = std::floor(18.0 + demo_rng.uniform() * 42.0);
    female[u] = demo_rng.uniform() < 0.5 ? 1.0 : 0.0;
    corpus::DemographicRow row;
    row.age = age[u];
    row.gender = female[u] > 0.0 ? corpus::Gender::female : corpus::Gender::male;
    fx.demographics[fx.user_ids[u]] = row;
  }

  Rng outcome_rng(mix_seed(config.seed, 5));
  fx.outcome_names = {"linear", "demographic", "binary"};
  fx.outcomes.resize(n, 3);
  for (Eigen::Index u = 0; u < n; ++u) {
    const auto uu = static_cast<std::size_t>(u);
    fx.outcomes(u, 0) = fx.factors(u, 0) + 0.5 * outcome_rng.normal();
    fx.outcomes(u, 1) = 0.05 * (age[uu] - 40.0) + 0.8 * female[uu] + 0.5 * outcome_rng.normal();
    const double latent = fx.factors(u, std::min(1, k - 1)) + 0.5 * outcome_rng.normal();
    fx.outcomes(u, 2) = latent > 0.0 ? 1.0 : 0.0;
  }

  if (config.likes_clusters > 0 && config.likes_per_cluster > 0) {
    Rng like_rng(mix_seed(config.seed, 6));
    const int clusters = config.likes_clusters;
    Matrix mix(clusters, k);
    for (int c = 0; c < clusters; ++c)
      for (int f = 0; f < k; ++f) mix(c, f) = like_rng.normal();
    std::vector<std::vector<std::string>> items(static_cast<std::size_t>(clusters));
    for (int c = 0; c < clusters; ++c) {
      for (std::size_t i = 0; i < config.likes_per_cluster; ++i) {
        items[static_cast<std::size_t>(c)].push_back("like_" + padded(static_cast<std::size_t>(c), 2) + "_" + padded(i, 3));
      }
    }
    fx.like_cluster.resize(config.users);
    for (Eigen::Index u = 0; u < n; ++u) {
      int best = 0;
      double best_score = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < clusters; ++c) {
        const double s = mix.row(c).dot(fx.factors.row(u)) + like_rng.normal();
        if (s > best_score) {
          best_score = s;
          best = c;
        }
      }
      const auto uu = static_cast<std::size_t>(u);
      fx.like_cluster[uu] = best;
      for (int c = 0; c < clusters; ++c) {
        const double prob = c == best ? 0.6 : 0.01;
        bool any = false;
        for (const auto& item : items[static_cast<std::size_t>(c)]) {
          if (like_rng.uniform() < prob) {
            fx.likes.emplace_back(fx.user_ids[uu], item);
            any = any || c == best;
          }
        }
        if (c == best && !any) fx.likes.emplace_back(fx.user_ids[uu], items[static_cast<std::size_t>(c)].front());
      }
    }
  }
  return fx;
}

void write(const std::filesystem::path& dir, const Fixture& fx) {
  std::filesystem::create_directories(dir);
  const auto& cfg = fx.config;

  std::string messages = "user_id,timestamp,text\n";
  for (const auto& m : fx.messages) {
    messages += m.user_id + "," + std::to_string(*m.timestamp) + "," + io::csv_escape(m.text) + "\n";
  }
  io::write_file_atomic(dir / "messages.csv", messages);

  std::string demo = "user_id,age,gender,include\n";
  for (const auto& [uid, row] : fx.demographics) {
    demo += uid + "," + io::format_double(*row.age) + "," + (row.gender == corpus::Gender::female ? "f" : "m") + ",1\n";
  }
  io::write_file_atomic(dir / "demographics.csv", demo);

  std::string outcomes = "user_id";
  for (const auto& name : fx.outcome_names) outcomes += "," + name;
  outcomes += '\n';
  for (std::size_t u = 0; u < fx.user_ids.size(); ++u) {
    outcomes += fx.user_ids[u];
    for (Eigen::Index c = 0; c < fx.outcomes.cols(); ++c) {
      outcomes += "," + io::format_double(fx.outcomes(static_cast<Eigen::Index>(u), c));
    }
    outcomes += '\n';
  }
  io::write_file_atomic(dir / "outcomes.csv", outcomes);

  std::string likes = "user_id,like_id\n";
  for (const auto& [uid, like] : fx.likes) likes += uid + "," + like + "\n";
  io::write_file_atomic(dir / "likes.csv", likes);

  std::string truth = "user_id";
  for (int f = 0; f < cfg.k; ++f) truth += ",T" + std::to_string(f + 1);
  truth += '\n';
  for (std::size_t u = 0; u < fx.user_ids.size(); ++u) {
    truth += fx.user_ids[u];
    for (int f = 0; f < cfg.k; ++f) truth += "," + io::format_double(fx.factors(static_cast<Eigen::Index>(u), f));
    truth += '\n';
  }
  io::write_file_atomic(dir / "truth_factors.csv", truth);

  std::string terms = "term,factor,sign\n";
  for (std::size_t t = 0; t < fx.vocabulary.size(); ++t) {
    terms += fx.vocabulary[t] + "," + std::to_string(fx.term_factor[t] + 1) + "," + std::to_string(fx.term_sign[t]) + "\n";
  }
  io::write_file_atomic(dir / "truth_terms.csv", terms);

  nlohmann::json meta;
  meta["users"] = cfg.users;
  meta["k"] = cfg.k;
  meta["terms"] = cfg.terms;
  meta["noise"] = cfg.noise;
  meta["loading"] = cfg.loading;
  meta["base_spread"] = cfg.base_spread;
  meta["factor_correlation"] = cfg.factor_correlation;
  meta["transient"] = cfg.transient;
  meta["periods"] = cfg.periods;
  meta["tokens_per_period"] = cfg.tokens_per_period;
  meta["words_per_message"] = cfg.words_per_message;
  meta["likes_clusters"] = cfg.likes_clusters;
  meta["likes_per_cluster"] = cfg.likes_per_cluster;
  meta["start"] = cfg.start;
  meta["seed"] = cfg.seed;
  io::write_file_atomic(dir / "fixture.json", meta.dump(2) + "\n");

  const auto total_tokens = cfg.tokens_per_period * static_cast<std::size_t>(cfg.periods);
  nlohmann::json config;
  config["messages"] = "messages.csv";
  config["demographics"] = "demographics.csv";
  config["outcomes"] = "outcomes.csv";
  config["likes"] = "likes.csv";
  config["filter"] = {{"min_words", std::min<std::size_t>(1000, total_tokens / 2)}, {"max_age", 65}};
  config["vocabulary"] = {{"max_terms", 10000}, {"min_user_fraction", 0.01}};
  config["method"] = "fa";
  config["k"] = cfg.k;
  config["rotation"] = {{"type", "promax"}, {"kappa", 4}};
  config["evaluation"] = {{"outcomes", nlohmann::json::array({{{"column", "linear"}, {"task", "regression"}},
                                                              {{"column", "demographic"}, {"task", "regression"}},
                                                              {{"column", "binary"}, {"task", "classification"}}})},
                          {"n_splits", 10}};
  config["nmf"] = {{"rank", cfg.likes_clusters > 0 ? cfg.likes_clusters : 20}};
  config["seed"] = cfg.seed;
  config["out_dir"] = "out";
  io::write_file_atomic(dir / "config.json", config.dump(2) + "\n");
}

}  // namespace blt::fixture
