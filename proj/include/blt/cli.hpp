#pragma once

// Pipeline configuration and the command implementations behind the `blt`
// executable.

#include "blt/corpus.hpp"
#include "blt/factors.hpp"
#include "blt/fixture.hpp"
#include "blt/predict.hpp"
#include "blt/topics.hpp"
#include "blt/utm.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace blt::cli {

using nlohmann::json;

struct OutcomeSpec {
  std::string column;
  std::optional<predict::Task> task;  // inferred from the values when empty
};

struct PipelineConfig {
  std::filesystem::path base_dir;  // relative paths resolve against this
  std::optional<std::filesystem::path> messages;
  std::optional<std::filesystem::path> demographics;
  std::optional<std::filesystem::path> outcomes;
  std::optional<std::filesystem::path> likes;
  std::optional<std::filesystem::path> stopwords;
  std::optional<std::filesystem::path> emoticons;

  corpus::FilterConfig filter;
  utm::VocabularyConfig vocabulary;
  std::string method = "fa";  // fa, svd or lda
  int k = 5;
  factors::RotationKind rotation = factors::RotationKind::promax;
  int kappa = 4;
  double score_ridge = 1e-6;
  bool residualize_terms = false;
  bool residualize_dla = false;
  topics::LdaOptions lda;

  std::vector<OutcomeSpec> outcomes_to_eval;  // empty: every outcome column
  std::map<std::string, std::vector<std::string>> outcome_groups;
  int n_splits = 10;
  double test_fraction = 0.2;
  int folds = 5;
  std::vector<double> ridge_grid;     // empty: default
  std::vector<double> logistic_grid;  // empty: default

  double retest_train_fraction = 0.75;
  int period_months = 6;
  std::size_t min_period_tokens = 50;
  std::size_t min_common_users = 10;
  int max_periods = 0;
  int dropout_runs = 100;
  double drop_fraction = 0.2;
  double holdout_fraction = 0.2;

  int dla_top_n = 15;

  int nmf_rank = 20;
  int nmf_iterations = 500;
  std::size_t top_likes = 10000;
  std::size_t cluster_top_items = 10;

  std::uint64_t seed = 1;
  int threads = 1;
  std::filesystem::path out_dir = "out";

  std::filesystem::path resolve(const std::filesystem::path& p) const;
  factors::FactorSpec factor_spec() const;
};

/// Parses a config object; unknown keys are rejected. `base_dir` anchors
/// relative paths.
PipelineConfig parse_config(const json& j, const std::filesystem::path& base_dir);
PipelineConfig load_config(const std::filesystem::path& path, const json& overrides = json::object());

/// Effective configuration as JSON, without out_dir and threads (which do
/// not change results).
json effective_config(const PipelineConfig& cfg);
std::string config_hash(const PipelineConfig& cfg);

/// Run manifest: command, config hash, input file hashes and seed.
json manifest(const PipelineConfig& cfg, std::string_view command,
              const std::vector<std::pair<std::string, std::filesystem::path>>& inputs);

corpus::UserCorpus load_corpus(const PipelineConfig& cfg, std::ostream& log);

struct OutcomeTable {
  std::vector<std::string> columns;
  std::map<std::string, std::vector<std::optional<double>>> values;  // column -> per user
  std::vector<std::string> user_ids;
};

OutcomeTable load_outcomes(const std::filesystem::path& path);

int cmd_fit(const PipelineConfig& cfg, std::ostream& out);
int cmd_score(const PipelineConfig& cfg, const std::filesystem::path& model_dir, const std::filesystem::path& output,
              std::ostream& out);
int cmd_eval(const PipelineConfig& cfg, const std::filesystem::path& model_dir, std::ostream& out);
int cmd_stability(const PipelineConfig& cfg, const std::filesystem::path& model_dir, std::ostream& out);
int cmd_dla(const PipelineConfig& cfg, const std::filesystem::path& model_dir, std::ostream& out);
int cmd_cluster_likes(const PipelineConfig& cfg, std::ostream& out);
int cmd_align(const std::filesystem::path& a, const std::filesystem::path& b, const std::filesystem::path& output,
              std::ostream& out);
int cmd_gen_fixture(const fixture::FixtureConfig& cfg, const std::filesystem::path& dir, std::ostream& out);

}  // namespace blt::cli
