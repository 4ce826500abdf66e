#pragma once

// JSON / CSV persistence for models, scores and reports, plus the content
// hashes used as provenance.

#include "blt/align.hpp"
#include "blt/evalsuite.hpp"
#include "blt/factors.hpp"
#include "blt/nmf.hpp"
#include "blt/predict.hpp"
#include "blt/topics.hpp"
#include "blt/utm.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>

namespace blt::serialize {

using nlohmann::json;

json matrix_json(const Matrix& m);  // row-major nested arrays
Matrix matrix_from_json(const json& j);
json vector_json(const Vector& v);
Vector vector_from_json(const json& j);

/// Model content without hash or manifest; vocabulary and column statistics
/// are referenced by file name.
json model_json(const factors::FactorModel& model);

/// SHA-256 over the model content, its vocabulary and column statistics.
std::string model_hash(const factors::FactorModel& model);

/// SHA-256 over user ids, vocabulary and the CSR encoding of the values.
std::string matrix_hash(const utm::UserTermMatrix& matrix);

/// Writes model.json, vocabulary.txt and stats.json into `dir`.
void save_model(const std::filesystem::path& dir, const factors::FactorModel& model, const json& manifest);

/// Loads and verifies the content hash.
factors::FactorModel load_model(const std::filesystem::path& dir);

/// CSV: leading '#' lines carry the hashes and the manifest, then a header
/// user_id,F1..Fk and one row per user.
std::string scores_csv(const factors::FactorScores& scores, const json& manifest);
factors::FactorScores parse_scores_csv(std::string_view text);
factors::FactorScores read_scores(const std::filesystem::path& path);

/// Pretty JSON text with a trailing newline.
std::string dump(const json& j);

/// Prepends "# manifest <compact json>" to CSV text.
std::string with_manifest(const std::string& csv, const json& manifest);

json to_json(const align::Assignment& a);
json to_json(const predict::EvalReport& r);
std::string eval_csv(const std::vector<predict::EvalReport>& reports);          // per split
std::string eval_summary_csv(const std::vector<predict::EvalReport>& reports);  // per outcome x feature set
json to_json(const evalsuite::DlaReport& r);
std::string dla_csv(const evalsuite::DlaReport& r);
json to_json(const evalsuite::ConvergentReport& r);
json to_json(const evalsuite::RetestReport& r);
json to_json(const evalsuite::DropoutReport& r);
json cluster_report(const nmf::NmfModel& model, std::size_t top_n);
json to_json(const topics::TopicModel& model, std::size_t top_words);

}  // namespace blt::serialize
