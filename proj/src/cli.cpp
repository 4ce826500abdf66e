#include "blt/cli.hpp"

#include "blt/align.hpp"
#include "blt/evalsuite.hpp"
#include "blt/io.hpp"
#include "blt/nmf.hpp"
#include "blt/rng.hpp"
#include "blt/serialize.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <set>
#include <unordered_map>

namespace blt::cli {

namespace fs = std::filesystem;

namespace {

void check_keys(const json& j, std::string_view where, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw Error("cli", std::string(where) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw Error("cli", "unknown config key '" + std::string(where) + (where.empty() ? "" : ".") + key + "'");
    }
  }
}

template <class T>
void read(const json& j, const char* key, T& target) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  try {
    target = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error("cli", std::string("config key '") + key + "': " + e.what());
  }
}

void read_path(const json& j, const char* key, std::optional<fs::path>& target) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  if (!j.at(key).is_string()) throw Error("cli", std::string("config key '") + key + "' must be a path string");
  target = fs::path(j.at(key).get<std::string>());
}

json path_json(const std::optional<fs::path>& p) { return p ? json(p->generic_string()) : json(nullptr); }

predict::Task infer_task(const std::vector<std::optional<double>>& values) {
  for (const auto& v : values) {
    if (v && *v != 0.0 && *v != 1.0) return predict::Task::regression;
  }
  return predict::Task::classification;
}

std::string trim_copy(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return std::string(s);
}

void write_json(const fs::path& path, const json& j) { io::write_file_atomic(path, serialize::dump(j)); }

std::vector<std::pair<std::string, fs::path>> corpus_inputs(const PipelineConfig& cfg) {
  std::vector<std::pair<std::string, fs::path>> inputs;
  if (cfg.messages) inputs.emplace_back("messages", cfg.resolve(*cfg.messages));
  if (cfg.demographics) inputs.emplace_back("demographics", cfg.resolve(*cfg.demographics));
  if (cfg.stopwords) inputs.emplace_back("stopwords", cfg.resolve(*cfg.stopwords));
  if (cfg.emoticons) inputs.emplace_back("emoticons", cfg.resolve(*cfg.emoticons));
  return inputs;
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// Matrix rows reordered to `user_ids`; users absent from the matrix are
// skipped and listed in `missing`.
utm::UserTermMatrix rows_for(const utm::UserTermMatrix& m, const std::vector<std::string>& user_ids,
                             std::vector<std::string>* missing) {
  std::unordered_map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < m.user_ids.size(); ++i) row_of.emplace(m.user_ids[i], i);
  std::vector<std::size_t> rows;
  for (const auto& id : user_ids) {
    auto it = row_of.find(id);
    if (it == row_of.end()) {
      if (missing) missing->push_back(id);
    } else {
      rows.push_back(it->second);
    }
  }
  return m.rows(rows);
}

}  // namespace

fs::path PipelineConfig::resolve(const fs::path& p) const { return p.is_absolute() ? p : base_dir / p; }

factors::FactorSpec PipelineConfig::factor_spec() const {
  factors::FactorSpec spec;
  spec.method = factors::parse_method(method);
  spec.k = k;
  spec.rotation = rotation;
  spec.kappa = kappa;
  spec.score_ridge = score_ridge;
  spec.paf.seed = mix_seed(seed, 7);
  return spec;
}

PipelineConfig parse_config(const json& j, const fs::path& base_dir) {
  check_keys(j, "", {"messages", "demographics", "outcomes", "likes", "stopwords", "emoticons", "filter", "vocabulary",
                     "method", "k", "rotation", "score_ridge", "residualize", "lda", "evaluation", "stability", "dla",
                     "nmf", "seed", "threads", "out_dir"});
  PipelineConfig cfg;
  cfg.base_dir = base_dir;
  read_path(j, "messages", cfg.messages);
  read_path(j, "demographics", cfg.demographics);
  read_path(j, "outcomes", cfg.outcomes);
  read_path(j, "likes", cfg.likes);
  read_path(j, "stopwords", cfg.stopwords);
  read_path(j, "emoticons", cfg.emoticons);

  if (j.contains("filter")) {
    const auto& f = j.at("filter");
    check_keys(f, "filter", {"min_words", "max_age", "require_demographics"});
    read(f, "min_words", cfg.filter.min_words);
    read(f, "max_age", cfg.filter.max_age);
    read(f, "require_demographics", cfg.filter.require_demographics);
  }
  if (j.contains("vocabulary")) {
    const auto& v = j.at("vocabulary");
    check_keys(v, "vocabulary", {"max_terms", "min_user_fraction"});
    read(v, "max_terms", cfg.vocabulary.max_terms);
    read(v, "min_user_fraction", cfg.vocabulary.min_user_fraction);
  }
  read(j, "method", cfg.method);
  if (cfg.method != "fa" && cfg.method != "svd" && cfg.method != "lda") {
    throw Error("cli", "method must be fa, svd or lda (got '" + cfg.method + "')");
  }
  read(j, "k", cfg.k);
  if (cfg.k < 1) throw Error("cli", "k must be at least 1");
  if (j.contains("rotation")) {
    const auto& r = j.at("rotation");
    if (r.is_string()) {
      cfg.rotation = factors::parse_rotation(r.get<std::string>());
    } else {
      check_keys(r, "rotation", {"type", "kappa"});
      if (r.contains("type")) cfg.rotation = factors::parse_rotation(r.at("type").get<std::string>());
      read(r, "kappa", cfg.kappa);
    }
  }
  read(j, "score_ridge", cfg.score_ridge);
  if (j.contains("residualize")) {
    const auto& r = j.at("residualize");
    check_keys(r, "residualize", {"terms", "dla"});
    read(r, "terms", cfg.residualize_terms);
    read(r, "dla", cfg.residualize_dla);
  }
  if (j.contains("lda")) {
    const auto& l = j.at("lda");
    check_keys(l, "lda", {"alpha_total", "beta", "iterations", "burn_in"});
    read(l, "alpha_total", cfg.lda.alpha_total);
    read(l, "beta", cfg.lda.beta);
    read(l, "iterations", cfg.lda.iterations);
    read(l, "burn_in", cfg.lda.burn_in);
  }
  if (j.contains("evaluation")) {
    const auto& e = j.at("evaluation");
    check_keys(e, "evaluation",
               {"outcomes", "groups", "n_splits", "test_fraction", "folds", "ridge_grid", "logistic_grid"});
    if (e.contains("outcomes")) {
      for (const auto& o : e.at("outcomes")) {
        OutcomeSpec spec;
        if (o.is_string()) {
          spec.column = o.get<std::string>();
        } else {
          check_keys(o, "evaluation.outcomes[]", {"column", "task"});
          spec.column = o.at("column").get<std::string>();
          if (o.contains("task") && !o.at("task").is_null()) spec.task = predict::parse_task(o.at("task").get<std::string>());
        }
        cfg.outcomes_to_eval.push_back(std::move(spec));
      }
    }
    read(e, "groups", cfg.outcome_groups);
    read(e, "n_splits", cfg.n_splits);
    read(e, "test_fraction", cfg.test_fraction);
    read(e, "folds", cfg.folds);
    read(e, "ridge_grid", cfg.ridge_grid);
    read(e, "logistic_grid", cfg.logistic_grid);
  }
  if (j.contains("stability")) {
    const auto& s = j.at("stability");
    check_keys(s, "stability", {"train_fraction", "period_months", "min_period_tokens", "min_common_users",
                                "max_periods", "runs", "drop_fraction", "holdout_fraction"});
    read(s, "train_fraction", cfg.retest_train_fraction);
    read(s, "period_months", cfg.period_months);
    read(s, "min_period_tokens", cfg.min_period_tokens);
    read(s, "min_common_users", cfg.min_common_users);
    read(s, "max_periods", cfg.max_periods);
    read(s, "runs", cfg.dropout_runs);
    read(s, "drop_fraction", cfg.drop_fraction);
    read(s, "holdout_fraction", cfg.holdout_fraction);
  }
  if (j.contains("dla")) {
    const auto& d = j.at("dla");
    check_keys(d, "dla", {"top_n"});
    read(d, "top_n", cfg.dla_top_n);
  }
  if (j.contains("nmf")) {
    const auto& n = j.at("nmf");
    check_keys(n, "nmf", {"rank", "iterations", "top_likes", "top_items"});
    read(n, "rank", cfg.nmf_rank);
    read(n, "iterations", cfg.nmf_iterations);
    read(n, "top_likes", cfg.top_likes);
    read(n, "top_items", cfg.cluster_top_items);
  }
  read(j, "seed", cfg.seed);
  read(j, "threads", cfg.threads);
  if (j.contains("out_dir") && j.at("out_dir").is_string()) cfg.out_dir = cfg.resolve(j.at("out_dir").get<std::string>());
  else cfg.out_dir = cfg.resolve(cfg.out_dir);
  return cfg;
}

PipelineConfig load_config(const fs::path& path, const json& overrides) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw Error("cli", path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw Error("cli", path.string() + ": config must be a JSON object");
  j.merge_patch(overrides);
  return parse_config(j, path.has_parent_path() ? path.parent_path() : fs::path("."));
}

json effective_config(const PipelineConfig& cfg) {
  json j;
  j["messages"] = path_json(cfg.messages);
  j["demographics"] = path_json(cfg.demographics);
  j["outcomes"] = path_json(cfg.outcomes);
  j["likes"] = path_json(cfg.likes);
  j["stopwords"] = path_json(cfg.stopwords);
  j["emoticons"] = path_json(cfg.emoticons);
  j["filter"] = {{"min_words", cfg.filter.min_words},
                 {"max_age", std::isfinite(cfg.filter.max_age) ? json(cfg.filter.max_age) : json(nullptr)},
                 {"require_demographics", cfg.filter.require_demographics}};
  j["vocabulary"] = {{"max_terms", cfg.vocabulary.max_terms}, {"min_user_fraction", cfg.vocabulary.min_user_fraction}};
  j["method"] = cfg.method;
  j["k"] = cfg.k;
  j["rotation"] = {{"type", factors::to_string(cfg.rotation)}, {"kappa", cfg.kappa}};
  j["score_ridge"] = cfg.score_ridge;
  j["residualize"] = {{"terms", cfg.residualize_terms}, {"dla", cfg.residualize_dla}};
  j["lda"] = {{"alpha_total", cfg.lda.alpha_total}, {"beta", cfg.lda.beta}, {"iterations", cfg.lda.iterations},
              {"burn_in", cfg.lda.burn_in}};
  json outcomes = json::array();
  for (const auto& o : cfg.outcomes_to_eval) {
    outcomes.push_back({{"column", o.column}, {"task", o.task ? json(predict::to_string(*o.task)) : json(nullptr)}});
  }
  j["evaluation"] = {{"outcomes", outcomes},         {"groups", cfg.outcome_groups},
                     {"n_splits", cfg.n_splits},     {"test_fraction", cfg.test_fraction},
                     {"folds", cfg.folds},           {"ridge_grid", cfg.ridge_grid},
                     {"logistic_grid", cfg.logistic_grid}};
  j["stability"] = {{"train_fraction", cfg.retest_train_fraction}, {"period_months", cfg.period_months},
                    {"min_period_tokens", cfg.min_period_tokens},   {"min_common_users", cfg.min_common_users},
                    {"max_periods", cfg.max_periods},               {"runs", cfg.dropout_runs},
                    {"drop_fraction", cfg.drop_fraction},           {"holdout_fraction", cfg.holdout_fraction}};
  j["dla"] = {{"top_n", cfg.dla_top_n}};
  j["nmf"] = {{"rank", cfg.nmf_rank},
              {"iterations", cfg.nmf_iterations},
              {"top_likes", cfg.top_likes},
              {"top_items", cfg.cluster_top_items}};
  j["seed"] = cfg.seed;
  return j;
}

std::string config_hash(const PipelineConfig& cfg) { return io::sha256_hex(effective_config(cfg).dump()); }

json manifest(const PipelineConfig& cfg, std::string_view command,
              const std::vector<std::pair<std::string, fs::path>>& inputs) {
  json m;
  m["command"] = command;
  m["config_hash"] = config_hash(cfg);
  json hashes = json::object();
  for (const auto& [name, path] : inputs) hashes[name] = io::sha256_file(path);
  m["inputs"] = std::move(hashes);
  m["seed"] = cfg.seed;
  return m;
}

corpus::UserCorpus load_corpus(const PipelineConfig& cfg, std::ostream& log) {
  if (!cfg.messages) throw Error("cli", "config has no messages path");
  const auto path = cfg.resolve(*cfg.messages);
  auto loaded = corpus::load_messages(path, corpus::format_for(path));
  if (!loaded.malformed.empty()) {
    log << "warning: skipped " << loaded.malformed.size() << " malformed message rows in " << path.string()
        << " (first at line " << loaded.malformed.front().line << ": " << loaded.malformed.front().reason << ")\n";
  }
  corpus::DemographicTable demo;
  if (cfg.demographics) demo = corpus::load_demographics(cfg.resolve(*cfg.demographics));
  auto stopwords = cfg.stopwords ? corpus::load_word_list(cfg.resolve(*cfg.stopwords)) : corpus::default_stopwords();
  auto emoticons = cfg.emoticons ? corpus::load_word_list(cfg.resolve(*cfg.emoticons)) : corpus::default_emoticons();
  const corpus::Tokenizer tokenizer(std::move(stopwords), std::move(emoticons));
  auto built = corpus::build_corpus(loaded.messages, demo, cfg.filter, tokenizer);
  if (built.users.empty()) throw Error("corpus", "no users remain after filtering " + path.string());
  return built;
}

OutcomeTable load_outcomes(const fs::path& path) {
  const auto text = io::read_file(path);
  OutcomeTable table;
  bool header = false;
  io::parse_csv(text, [&](std::vector<std::string>& fields, std::size_t line) {
    if (!header) {
      header = true;
      if (fields.empty() || trim_copy(fields[0]) != "user_id") {
        throw Error("cli", path.string() + ": outcome file must start with a user_id column");
      }
      for (std::size_t c = 1; c < fields.size(); ++c) {
        table.columns.push_back(trim_copy(fields[c]));
        table.values[table.columns.back()];
      }
      return;
    }
    const auto uid = trim_copy(fields[0]);
    if (uid.empty()) throw Error("cli", path.string() + ": row at line " + std::to_string(line) + " lacks user_id");
    table.user_ids.push_back(uid);
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
      std::optional<double> value;
      if (c + 1 < fields.size()) {
        const auto cell = trim_copy(fields[c + 1]);
        if (!cell.empty()) {
          try {
            std::size_t used = 0;
            value = std::stod(cell, &used);
            if (used != cell.size()) throw std::invalid_argument("trailing");
          } catch (const std::exception&) {
            throw Error("cli", path.string() + ": non-numeric value '" + cell + "' at line " + std::to_string(line));
          }
        }
      }
      table.values[table.columns[c]].push_back(value);
    }
  });
  if (table.columns.empty() || table.user_ids.empty()) throw Error("cli", path.string() + ": outcome file is empty");
  return table;
}

int cmd_fit(const PipelineConfig& cfg, std::ostream& out) {
  const auto corpus = load_corpus(cfg, out);
  const auto vocabulary = utm::select_vocabulary(corpus, cfg.vocabulary);
  if (vocabulary.empty()) throw Error("utm", "vocabulary selection kept no terms");
  auto matrix = utm::build_matrix(corpus, vocabulary);
  const auto m = manifest(cfg, "fit", corpus_inputs(cfg));
  fs::create_directories(cfg.out_dir);

  if (cfg.method == "lda") {
    auto options = cfg.lda;
    options.k = cfg.k;
    options.seed = mix_seed(cfg.seed, 11);
    const auto model = topics::fit_lda(corpus, options, vocabulary);
    json j = serialize::to_json(model, 20);
    factors::FactorScores scores;
    scores.user_ids = model.user_ids;
    scores.scores = model.proportions;
    scores.model_hash = io::sha256_hex(j.dump() + serialize::matrix_json(model.topic_word).dump());
    scores.matrix_hash = serialize::matrix_hash(matrix);
    j["hash"] = scores.model_hash;
    j["manifest"] = m;
    write_json(cfg.out_dir / "topics.json", j);
    io::write_file_atomic(cfg.out_dir / "scores.csv", serialize::scores_csv(scores, m));
    out << "fit lda: users=" << model.user_ids.size() << " vocabulary=" << vocabulary.size() << " k=" << model.k
        << "\nmodel hash " << scores.model_hash << "\n";
    return 0;
  }

  std::optional<utm::Demographics> controls;
  if (cfg.residualize_terms) {
    std::vector<std::string> missing;
    controls = utm::demographics_for(corpus, matrix.user_ids, &missing);
    if (!missing.empty()) {
      out << "note: " << missing.size() << " users without age/gender excluded from residualized fit\n";
      matrix = rows_for(matrix, controls->user_ids, nullptr);
    }
  }
  const auto fitted = factors::fit_factors(matrix, cfg.factor_spec(), controls ? &*controls : nullptr);
  const auto& model = fitted.model;
  serialize::save_model(cfg.out_dir, model, m);
  io::write_file_atomic(cfg.out_dir / "scores.csv", serialize::scores_csv(fitted.scores, m));

  std::vector<double> communalities(model.communalities.data(), model.communalities.data() + model.communalities.size());
  const Vector explained = model.explained() / static_cast<double>(model.vocabulary.size());
  json summary;
  summary["users"] = matrix.users();
  summary["dropped_users"] = matrix.dropped_users.size();
  summary["filter"] = {{"total", corpus.summary.total_users},
                       {"kept", corpus.summary.kept},
                       {"dropped_min_words", corpus.summary.dropped_min_words},
                       {"dropped_max_age", corpus.summary.dropped_max_age},
                       {"dropped_excluded", corpus.summary.dropped_excluded},
                       {"dropped_demographics", corpus.summary.dropped_demographics}};
  summary["vocabulary"] = model.vocabulary.size();
  summary["k"] = model.k;
  summary["method"] = factors::to_string(model.method);
  summary["rotation"] = factors::to_string(model.rotation.kind);
  summary["communality"] = {{"min", quantile(communalities, 0.0)},
                            {"median", quantile(communalities, 0.5)},
                            {"max", quantile(communalities, 1.0)}};
  summary["variance_explained"] = serialize::vector_json(explained);
  summary["heywood_terms"] = model.diagnostics.heywood_terms;
  summary["converged"] = model.diagnostics.converged;
  summary["residualized_terms"] = controls.has_value();
  summary["model_hash"] = fitted.scores.model_hash;
  summary["manifest"] = m;
  write_json(cfg.out_dir / "fit_summary.json", summary);

  out << std::setprecision(4);
  out << "fit " << factors::to_string(model.method) << " k=" << model.k << " rotation=" << factors::to_string(model.rotation.kind)
      << "\nusers " << matrix.users() << " (filtered out " << corpus.summary.total_users - corpus.summary.kept
      << ", no vocabulary tokens " << matrix.dropped_users.size() << ")\nvocabulary " << model.vocabulary.size()
      << "\ncommunality min/median/max " << quantile(communalities, 0.0) << " / " << quantile(communalities, 0.5) << " / "
      << quantile(communalities, 1.0) << "\nvariance explained";
  for (Eigen::Index f = 0; f < explained.size(); ++f) out << " F" << f + 1 << "=" << explained(f);
  out << "\n";
  if (model.diagnostics.heywood) out << "warning: " << model.diagnostics.heywood_terms << " Heywood terms clamped\n";
  if (!model.diagnostics.converged) out << "warning: principal-axis iterations did not converge\n";
  out << "model hash " << fitted.scores.model_hash << "\n";
  return 0;
}

int cmd_score(const PipelineConfig& cfg, const fs::path& model_dir, const fs::path& output, std::ostream& out) {
  const auto model = serialize::load_model(model_dir);
  const auto corpus = load_corpus(cfg, out);
  const auto matrix = utm::build_matrix(corpus, model.vocabulary);
  const auto scores = factors::score_matrix(model, matrix);
  auto inputs = corpus_inputs(cfg);
  inputs.emplace_back("model", model_dir / "model.json");
  const auto m = manifest(cfg, "score", inputs);
  const auto target = output.empty() ? cfg.out_dir / "scores_scored.csv" : output;
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  io::write_file_atomic(target, serialize::scores_csv(scores, m));
  out << "scored " << scores.user_ids.size() << " users (" << matrix.dropped_users.size()
      << " without vocabulary tokens) -> " << target.string() << "\n";
  return 0;
}

int cmd_eval(const PipelineConfig& cfg, const fs::path& model_dir, std::ostream& out) {
  if (!cfg.outcomes && !cfg.likes) throw Error("cli", "config has neither outcomes nor likes to evaluate");
  const auto scores_path = model_dir / "scores.csv";
  const auto scores = serialize::read_scores(scores_path);
  std::unordered_map<std::string, Eigen::Index> score_row;
  for (std::size_t i = 0; i < scores.user_ids.size(); ++i) score_row.emplace(scores.user_ids[i], static_cast<Eigen::Index>(i));

  corpus::DemographicTable demo;
  if (cfg.demographics) demo = corpus::load_demographics(cfg.resolve(*cfg.demographics));
  auto demographic_row = [&](const std::string& uid) -> std::optional<std::pair<double, double>> {
    auto it = demo.find(uid);
    if (it == demo.end() || !it->second.age || it->second.gender == corpus::Gender::unknown) return std::nullopt;
    return std::make_pair(*it->second.age, it->second.gender == corpus::Gender::female ? 1.0 : 0.0);
  };
  const bool with_demo = !demo.empty();

  // (outcome name, task, user -> value)
  struct Target {
    std::string name;
    predict::Task task;
    std::vector<std::pair<std::string, double>> values;
  };
  std::vector<Target> targets;
  std::vector<std::pair<std::string, fs::path>> inputs = {{"scores", scores_path}};
  if (cfg.demographics) inputs.emplace_back("demographics", cfg.resolve(*cfg.demographics));

  if (cfg.outcomes) {
    const auto path = cfg.resolve(*cfg.outcomes);
    inputs.emplace_back("outcomes", path);
    const auto table = load_outcomes(path);
    std::vector<OutcomeSpec> wanted = cfg.outcomes_to_eval;
    if (wanted.empty()) {
      for (const auto& c : table.columns) wanted.push_back({c, std::nullopt});
    }
    std::vector<std::string> absent;
    for (const auto& w : wanted) {
      if (!table.values.contains(w.column)) absent.push_back(w.column);
    }
    if (!absent.empty()) {
      std::string list;
      for (const auto& a : absent) list += (list.empty() ? "" : ", ") + a;
      throw Error("cli", path.string() + ": missing outcome columns: " + list);
    }
    for (const auto& w : wanted) {
      const auto& column = table.values.at(w.column);
      Target t{w.column, w.task.value_or(infer_task(column)), {}};
      for (std::size_t i = 0; i < table.user_ids.size(); ++i) {
        if (column[i]) t.values.emplace_back(table.user_ids[i], *column[i]);
      }
      targets.push_back(std::move(t));
    }
  }

  json clusters_json;
  if (cfg.likes) {
    const auto path = cfg.resolve(*cfg.likes);
    inputs.emplace_back("likes", path);
    const auto likes = nmf::load_likes(path, cfg.top_likes);
    const auto model = nmf::fit_nmf(likes, cfg.nmf_rank, cfg.nmf_iterations, mix_seed(cfg.seed, 13));
    const auto assignment = nmf::cluster_assign(model);
    std::vector<std::string> members;
    for (int c = 0; c < model.rank; ++c) {
      Target t{"likes_c" + std::to_string(c + 1), predict::Task::classification, {}};
      std::size_t positives = 0;
      for (std::size_t i = 0; i < assignment.size(); ++i) {
        if (assignment[i] == nmf::kUnassigned) continue;
        const bool member = assignment[i] == c;
        positives += member ? 1 : 0;
        t.values.emplace_back(model.user_ids[i], member ? 1.0 : 0.0);
      }
      if (positives >= 3 && t.values.size() - positives >= 3) {
        members.push_back(t.name);
        targets.push_back(std::move(t));
      } else {
        out << "note: like cluster " << c + 1 << " has too few members to evaluate\n";
      }
    }
    clusters_json = serialize::cluster_report(model, cfg.cluster_top_items);
  }
  if (targets.empty()) throw Error("cli", "no outcomes to evaluate");

  const auto m = manifest(cfg, "eval", inputs);
  fs::create_directories(cfg.out_dir);
  const std::vector<std::string> feature_sets =
      with_demo ? std::vector<std::string>{"demog", "scores", "scores+demog"} : std::vector<std::string>{"scores"};

  std::vector<predict::EvalReport> reports;
  json per_outcome = json::object();
  for (const auto& target : targets) {
    std::vector<Eigen::Index> rows;
    std::vector<std::pair<double, double>> demo_rows;
    std::vector<double> y;
    for (const auto& [uid, value] : target.values) {
      auto it = score_row.find(uid);
      if (it == score_row.end()) continue;
      std::optional<std::pair<double, double>> d;
      if (with_demo) {
        d = demographic_row(uid);
        if (!d) continue;
      }
      rows.push_back(it->second);
      demo_rows.push_back(d.value_or(std::make_pair(0.0, 0.0)));
      y.push_back(value);
    }
    if (rows.size() < 10) {
      out << "note: outcome " << target.name << " has only " << rows.size() << " usable users; skipped\n";
      continue;
    }
    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto k = scores.scores.cols();
    const Vector outcome = Eigen::Map<const Vector>(y.data(), n);
    json outcome_json = json::array();
    for (const auto& fs_name : feature_sets) {
      const bool use_scores = fs_name != "demog";
      const bool use_demo = fs_name != "scores";
      Matrix x(n, (use_scores ? k : 0) + (use_demo ? 2 : 0));
      for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Index c = 0;
        if (use_scores) {
          x.row(i).head(k) = scores.scores.row(rows[static_cast<std::size_t>(i)]);
          c = k;
        }
        if (use_demo) {
          x(i, c) = demo_rows[static_cast<std::size_t>(i)].first;
          x(i, c + 1) = demo_rows[static_cast<std::size_t>(i)].second;
        }
      }
      predict::EvalOptions options;
      options.n_splits = cfg.n_splits;
      options.test_fraction = cfg.test_fraction;
      options.folds = cfg.folds;
      options.grid = target.task == predict::Task::regression ? cfg.ridge_grid : cfg.logistic_grid;
      options.seed_base = cfg.seed;
      auto report = predict::eval_outcome(x, outcome, target.task, options);
      report.outcome = target.name;
      report.feature_set = fs_name;
      outcome_json.push_back(serialize::to_json(report));
      reports.push_back(std::move(report));
    }
    per_outcome[target.name] = std::move(outcome_json);
  }
  if (reports.empty()) throw Error("cli", "no outcome had enough users to evaluate");

  // Group means (mean over outcomes of their split means) per feature set.
  auto groups = cfg.outcome_groups;
  if (cfg.likes) {
    std::vector<std::string> like_names;
    for (const auto& t : targets) {
      if (t.name.starts_with("likes_c")) like_names.push_back(t.name);
    }
    if (!like_names.empty()) groups.emplace("likes", like_names);
  }
  json groups_json = json::object();
  for (const auto& [group, members] : groups) {
    json g = json::object();
    for (const auto& fs_name : feature_sets) {
      std::vector<predict::EvalReport> picked;
      for (const auto& r : reports) {
        if (r.feature_set == fs_name && std::find(members.begin(), members.end(), r.outcome) != members.end()) {
          picked.push_back(r);
        }
      }
      if (!picked.empty()) g[fs_name] = {{"outcomes", picked.size()}, {"mean", predict::mean_of_means(picked)}};
    }
    groups_json[group] = std::move(g);
  }

  json all;
  all["manifest"] = m;
  all["outcomes"] = per_outcome;
  all["groups"] = groups_json;
  if (!clusters_json.is_null()) all["like_clusters"] = clusters_json;
  write_json(cfg.out_dir / "eval.json", all);
  io::write_file_atomic(cfg.out_dir / "eval.csv", serialize::with_manifest(serialize::eval_csv(reports), m));
  io::write_file_atomic(cfg.out_dir / "eval_summary.csv",
                        serialize::with_manifest(serialize::eval_summary_csv(reports), m));

  out << std::setprecision(4);
  out << "outcome                 feature_set     metric     mean      std\n";
  for (const auto& r : reports) {
    out << std::left << std::setw(24) << r.outcome << std::setw(16) << r.feature_set << std::setw(11) << r.metric
        << std::setw(10) << r.mean << r.std << "\n";
  }
  out << std::right;
  return 0;
}

int cmd_stability(const PipelineConfig& cfg, const fs::path& model_dir, std::ostream& out) {
  const auto corpus = load_corpus(cfg, out);
  auto inputs = corpus_inputs(cfg);
  std::vector<std::string> vocabulary;
  if (!model_dir.empty() && fs::exists(model_dir / "model.json")) {
    vocabulary = serialize::load_model(model_dir).vocabulary;
    inputs.emplace_back("model", model_dir / "model.json");
  } else {
    vocabulary = utm::select_vocabulary(corpus, cfg.vocabulary);
  }
  const auto m = manifest(cfg, "stability", inputs);
  fs::create_directories(cfg.out_dir);
  const auto spec = cfg.factor_spec();

  json retest_json;
  if (!corpus.all_timestamped) {
    retest_json = {{"skipped", true}, {"reason", "messages lack timestamps"}};
    out << "notice: test-retest skipped because messages lack timestamps\n";
  } else {
    evalsuite::RetestOptions options;
    options.train_fraction = cfg.retest_train_fraction;
    options.period_months = cfg.period_months;
    options.min_period_tokens = cfg.min_period_tokens;
    options.min_common_users = cfg.min_common_users;
    options.max_periods = cfg.max_periods;
    options.seed = mix_seed(cfg.seed, 17);
    options.vocabulary = cfg.vocabulary;
    options.spec = spec;
    const auto report = evalsuite::test_retest(corpus, options);
    retest_json = serialize::to_json(report);
    out << std::setprecision(3) << "test-retest: " << report.periods.size() << " periods, train users "
        << report.train_users << "\n";
    for (std::size_t t = 1; t < report.periods.size(); ++t) {
      const auto& p = report.periods[t];
      out << "  period " << t << (p.missing ? " (missing)" : "") << " r vs period 0:";
      for (const auto& r : p.r_vs_first) {
        if (r) out << " " << *r;
        else out << " n/a";
      }
      out << "\n";
    }
  }
  retest_json["manifest"] = m;
  write_json(cfg.out_dir / "retest.json", retest_json);

  const auto matrix = utm::build_matrix(corpus, vocabulary);
  std::vector<std::size_t> order(matrix.users());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(cfg.seed, 19));
  rng.shuffle(order.begin(), order.end());
  const auto holdout_count = static_cast<std::size_t>(std::llround(cfg.holdout_fraction * static_cast<double>(order.size())));
  std::vector<std::size_t> holdout(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(holdout_count));
  std::vector<std::size_t> training(order.begin() + static_cast<std::ptrdiff_t>(holdout_count), order.end());
  std::sort(holdout.begin(), holdout.end());
  std::sort(training.begin(), training.end());
  if (holdout.size() < 3 || training.size() < 3) throw Error("evalsuite", "dropout needs at least 3 training and holdout users");

  evalsuite::DropoutOptions options;
  options.drop_fraction = cfg.drop_fraction;
  options.runs = cfg.dropout_runs;
  options.seed_base = mix_seed(cfg.seed, 23);
  options.threads = cfg.threads;
  options.spec = spec;
  const auto dropout = evalsuite::dropout_reliability(matrix.rows(training), matrix.rows(holdout), options);
  json dropout_json = serialize::to_json(dropout);
  dropout_json["manifest"] = m;
  write_json(cfg.out_dir / "dropout.json", dropout_json);
  out << "dropout reliability: runs " << dropout.runs << ", drop fraction " << dropout.drop_fraction;
  if (dropout.grand_mean) out << ", grand mean aligned |r| " << *dropout.grand_mean << "\n";
  else out << ", insufficient runs for pairwise comparison\n";
  return 0;
}

int cmd_dla(const PipelineConfig& cfg, const fs::path& model_dir, std::ostream& out) {
  const auto model = serialize::load_model(model_dir);
  const auto scores = serialize::read_scores(model_dir / "scores.csv");
  const auto corpus = load_corpus(cfg, out);
  auto inputs = corpus_inputs(cfg);
  inputs.emplace_back("model", model_dir / "model.json");
  inputs.emplace_back("scores", model_dir / "scores.csv");
  const auto m = manifest(cfg, "dla", inputs);

  const auto full = utm::build_matrix(corpus, model.vocabulary);
  std::vector<std::string> wanted = scores.user_ids;
  std::optional<utm::Demographics> controls;
  if (cfg.residualize_dla) {
    std::vector<std::string> missing;
    controls = utm::demographics_for(corpus, wanted, &missing);
    if (!missing.empty()) out << "note: " << missing.size() << " users without age/gender excluded\n";
    wanted = controls->user_ids;
  }
  std::vector<std::string> absent;
  const auto matrix = rows_for(full, wanted, &absent);
  if (!absent.empty()) throw Error("evalsuite", std::to_string(absent.size()) + " scored users are missing from the corpus");
  factors::FactorScores aligned = scores;
  if (wanted != scores.user_ids) {
    std::unordered_map<std::string, Eigen::Index> row_of;
    for (std::size_t i = 0; i < scores.user_ids.size(); ++i) row_of.emplace(scores.user_ids[i], static_cast<Eigen::Index>(i));
    aligned.user_ids = wanted;
    aligned.scores.resize(static_cast<Eigen::Index>(wanted.size()), scores.scores.cols());
    for (std::size_t i = 0; i < wanted.size(); ++i) aligned.scores.row(static_cast<Eigen::Index>(i)) = scores.scores.row(row_of.at(wanted[i]));
  }
  const auto report = evalsuite::dla(matrix, aligned, cfg.dla_top_n, controls ? &*controls : nullptr);
  json j = serialize::to_json(report);
  j["manifest"] = m;
  fs::create_directories(cfg.out_dir);
  write_json(cfg.out_dir / "dla.json", j);
  io::write_file_atomic(cfg.out_dir / "dla.csv", serialize::with_manifest(serialize::dla_csv(report), m));
  out << "dla: " << report.factors.size() << " factors, top " << report.top_n << " terms each way"
      << (report.controls.empty() ? "" : ", controls: age, gender") << "\n";
  for (const auto& f : report.factors) {
    out << "  F" << f.factor + 1 << " +";
    for (std::size_t i = 0; i < std::min<std::size_t>(5, f.positive.size()); ++i) out << " " << f.positive[i].token;
    out << " | -";
    for (std::size_t i = 0; i < std::min<std::size_t>(5, f.negative.size()); ++i) out << " " << f.negative[i].token;
    out << "\n";
  }
  return 0;
}

int cmd_cluster_likes(const PipelineConfig& cfg, std::ostream& out) {
  if (!cfg.likes) throw Error("cli", "config has no likes path");
  const auto path = cfg.resolve(*cfg.likes);
  const auto likes = nmf::load_likes(path, cfg.top_likes);
  const auto model = nmf::fit_nmf(likes, cfg.nmf_rank, cfg.nmf_iterations, mix_seed(cfg.seed, 13));
  const auto m = manifest(cfg, "cluster-likes", {{"likes", path}});
  json j = serialize::cluster_report(model, cfg.cluster_top_items);
  j["objective"] = model.objective;
  j["manifest"] = m;
  fs::create_directories(cfg.out_dir);
  write_json(cfg.out_dir / "clusters.json", j);
  out << "cluster-likes: " << likes.users() << " users, " << likes.likes() << " likes, rank " << model.rank
      << ", objective " << model.objective.front() << " -> " << model.objective.back() << "\n";
  return 0;
}

int cmd_align(const fs::path& a_path, const fs::path& b_path, const fs::path& output, std::ostream& out) {
  const auto a = serialize::read_scores(a_path);
  const auto b = serialize::read_scores(b_path);
  std::unordered_map<std::string, Eigen::Index> b_row;
  for (std::size_t i = 0; i < b.user_ids.size(); ++i) b_row.emplace(b.user_ids[i], static_cast<Eigen::Index>(i));
  std::vector<std::pair<Eigen::Index, Eigen::Index>> rows;
  for (std::size_t i = 0; i < a.user_ids.size(); ++i) {
    auto it = b_row.find(a.user_ids[i]);
    if (it != b_row.end()) rows.emplace_back(static_cast<Eigen::Index>(i), it->second);
  }
  if (rows.size() < 3) throw Error("align", "score files share fewer than 3 users");
  Matrix sa(static_cast<Eigen::Index>(rows.size()), a.scores.cols());
  Matrix sb(static_cast<Eigen::Index>(rows.size()), b.scores.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    sa.row(static_cast<Eigen::Index>(i)) = a.scores.row(rows[i].first);
    sb.row(static_cast<Eigen::Index>(i)) = b.scores.row(rows[i].second);
  }
  const auto report = evalsuite::convergent_matrix(sa, sb, {}, {});
  json j = serialize::to_json(report);
  j["common_users"] = rows.size();
  j["inputs"] = {{"a", io::sha256_file(a_path)}, {"b", io::sha256_file(b_path)}};
  if (output.has_parent_path()) fs::create_directories(output.parent_path());
  write_json(output, j);
  out << std::setprecision(4) << "align: " << rows.size() << " common users, mean aligned |r| "
      << report.assignment.mean_abs_r << "\n";
  for (std::size_t i = 0; i < report.assignment.permutation.size(); ++i) {
    const int jcol = report.assignment.permutation[i];
    out << "  A" << i + 1 << " -> " << (jcol >= 0 ? "B" + std::to_string(jcol + 1) : std::string("none"));
    if (jcol >= 0) out << " r=" << report.assignment.per_pair_r[i];
    out << "\n";
  }
  return 0;
}

int cmd_gen_fixture(const fixture::FixtureConfig& cfg, const fs::path& dir, std::ostream& out) {
  const auto fx = fixture::generate(cfg);
  fixture::write(dir, fx);
  out << "fixture: " << fx.user_ids.size() << " users, " << fx.vocabulary.size() << " terms, " << fx.messages.size()
      << " messages, k=" << cfg.k << " -> " << dir.string() << "\n";
  return 0;
}

}  // namespace blt::cli
