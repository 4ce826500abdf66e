#include "blt/serialize.hpp"

#include "blt/io.hpp"

#include <cmath>
#include <numeric>

namespace blt::serialize {

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json optional_list(const std::vector<std::optional<double>>& values) {
  json out = json::array();
  for (const auto& v : values) out.push_back(optional_json(v));
  return out;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string stats_text(const utm::ColumnStats& stats) {
  json j;
  j["terms"] = stats.vocabulary.size();
  j["means"] = std::vector<double>(stats.mean.data(), stats.mean.data() + stats.mean.size());
  j["stds"] = std::vector<double>(stats.std.data(), stats.std.data() + stats.std.size());
  return j.dump();
}

}  // namespace

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j) {
  if (!j.is_array()) throw Error("cli", "matrix JSON must be an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(row.size()) != cols) throw Error("cli", "ragged matrix in JSON");
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from_json(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

json model_json(const factors::FactorModel& model) {
  json j;
  j["method"] = factors::to_string(model.method);
  j["k"] = model.k;
  j["training_users"] = model.training_users;
  j["vocabulary"] = "vocabulary.txt";
  j["terms"] = model.vocabulary.size();
  j["column_stats"] = "stats.json";
  j["unrotated"] = matrix_json(model.unrotated);
  j["loadings"] = matrix_json(model.loadings);
  j["phi"] = matrix_json(model.phi);
  j["communalities"] = vector_json(model.communalities);
  j["eigenvalues"] = vector_json(model.eigenvalues);
  json rot;
  rot["type"] = factors::to_string(model.rotation.kind);
  rot["kappa"] = model.rotation.kappa;
  rot["matrix"] = matrix_json(model.rotation.matrix);
  rot["criterion_trace"] = model.rotation.criterion_trace;
  rot["converged"] = model.rotation.converged;
  rot["oblique_fallback"] = model.rotation.oblique_fallback;
  j["rotation"] = std::move(rot);
  j["sign_convention"] = model.sign_convention_applied;
  j["score_ridge"] = model.score_ridge;
  j["score_weights"] = matrix_json(model.score_weights);
  json diag;
  diag["iterations"] = model.diagnostics.iterations;
  diag["converged"] = model.diagnostics.converged;
  diag["heywood"] = model.diagnostics.heywood;
  diag["heywood_terms"] = model.diagnostics.heywood_terms;
  diag["initial_communalities"] = model.diagnostics.initial_communalities;
  diag["max_change"] = model.diagnostics.max_change;
  j["diagnostics"] = std::move(diag);
  return j;
}

std::string model_hash(const factors::FactorModel& model) {
  std::string text = model_json(model).dump();
  text += '\n';
  for (const auto& term : model.vocabulary) {
    text += term;
    text += '\n';
  }
  text += stats_text(model.stats);
  return io::sha256_hex(text);
}

std::string matrix_hash(const utm::UserTermMatrix& matrix) {
  std::string text;
  for (const auto& id : matrix.user_ids) {
    text += id;
    text += '\n';
  }
  text += '\n';
  for (const auto& term : matrix.vocabulary) {
    text += term;
    text += '\n';
  }
  text += utm::encode_csr(matrix.values);
  return io::sha256_hex(text);
}

void save_model(const std::filesystem::path& dir, const factors::FactorModel& model, const json& manifest) {
  std::filesystem::create_directories(dir);
  utm::write_lines(dir / "vocabulary.txt", model.vocabulary);
  utm::save_stats(dir / "stats.json", model.stats);
  json j = model_json(model);
  j["hash"] = model_hash(model);
  j["manifest"] = manifest;
  io::write_file_atomic(dir / "model.json", dump(j));
}

factors::FactorModel load_model(const std::filesystem::path& dir) {
  json j;
  try {
    j = json::parse(io::read_file(dir / "model.json"));
  } catch (const json::exception& e) {
    throw Error("cli", (dir / "model.json").string() + ": " + e.what());
  }
  factors::FactorModel model;
  try {
    model.method = factors::parse_method(j.at("method").get<std::string>());
    model.k = j.at("k").get<int>();
    model.training_users = j.at("training_users").get<std::size_t>();
    model.vocabulary = utm::read_lines(dir / j.at("vocabulary").get<std::string>());
    model.stats = utm::load_stats(dir / j.at("column_stats").get<std::string>(), model.vocabulary);
    model.unrotated = matrix_from_json(j.at("unrotated"));
    model.loadings = matrix_from_json(j.at("loadings"));
    model.phi = matrix_from_json(j.at("phi"));
    model.communalities = vector_from_json(j.at("communalities"));
    model.eigenvalues = vector_from_json(j.at("eigenvalues"));
    const auto& rot = j.at("rotation");
    model.rotation.kind = factors::parse_rotation(rot.at("type").get<std::string>());
    model.rotation.kappa = rot.at("kappa").get<int>();
    model.rotation.matrix = matrix_from_json(rot.at("matrix"));
    model.rotation.criterion_trace = rot.at("criterion_trace").get<std::vector<double>>();
    model.rotation.converged = rot.at("converged").get<bool>();
    model.rotation.oblique_fallback = rot.at("oblique_fallback").get<bool>();
    model.sign_convention_applied = j.at("sign_convention").get<bool>();
    model.score_ridge = j.at("score_ridge").get<double>();
    model.score_weights = matrix_from_json(j.at("score_weights"));
    const auto& diag = j.at("diagnostics");
    model.diagnostics.iterations = diag.at("iterations").get<int>();
    model.diagnostics.converged = diag.at("converged").get<bool>();
    model.diagnostics.heywood = diag.at("heywood").get<bool>();
    model.diagnostics.heywood_terms = diag.at("heywood_terms").get<std::size_t>();
    model.diagnostics.initial_communalities = diag.at("initial_communalities").get<std::string>();
    model.diagnostics.max_change = diag.at("max_change").get<double>();
  } catch (const json::exception& e) {
    throw Error("cli", (dir / "model.json").string() + ": " + e.what());
  }
  if (model_hash(model) != j.value("hash", std::string())) {
    throw Error("cli", (dir / "model.json").string() + ": content hash mismatch");
  }
  return model;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

std::string with_manifest(const std::string& csv, const json& manifest) {
  return "# manifest " + manifest.dump() + "\n" + csv;
}

std::string scores_csv(const factors::FactorScores& scores, const json& manifest) {
  std::string out = "# manifest " + manifest.dump() + "\n";
  out += "# model_hash " + scores.model_hash + "\n";
  out += "# matrix_hash " + scores.matrix_hash + "\n";
  out += "user_id";
  for (Eigen::Index f = 0; f < scores.scores.cols(); ++f) out += ",F" + std::to_string(f + 1);
  out += '\n';
  for (std::size_t i = 0; i < scores.user_ids.size(); ++i) {
    out += io::csv_escape(scores.user_ids[i]);
    for (Eigen::Index f = 0; f < scores.scores.cols(); ++f) {
      out += ',';
      out += io::format_double(scores.scores(static_cast<Eigen::Index>(i), f));
    }
    out += '\n';
  }
  return out;
}

factors::FactorScores parse_scores_csv(std::string_view text) {
  factors::FactorScores scores;
  while (!text.empty() && text.front() == '#') {
    const auto end = text.find('\n');
    const auto line = text.substr(0, end);
    if (line.starts_with("# model_hash ")) scores.model_hash = std::string(line.substr(13));
    if (line.starts_with("# matrix_hash ")) scores.matrix_hash = std::string(line.substr(14));
    text = end == std::string_view::npos ? std::string_view() : text.substr(end + 1);
  }
  std::vector<std::vector<double>> rows;
  std::size_t cols = 0;
  bool header = false;
  io::parse_csv(text, [&](std::vector<std::string>& fields, std::size_t line) {
    if (!header) {
      header = true;
      if (fields.empty() || fields[0] != "user_id") throw Error("cli", "scores CSV must start with a user_id column");
      cols = fields.size() - 1;
      return;
    }
    if (fields.size() != cols + 1) throw Error("cli", "scores CSV row at line " + std::to_string(line) + " has wrong width");
    scores.user_ids.push_back(fields[0]);
    std::vector<double> row;
    for (std::size_t c = 1; c < fields.size(); ++c) {
      try {
        row.push_back(std::stod(fields[c]));
      } catch (const std::exception&) {
        throw Error("cli", "scores CSV row at line " + std::to_string(line) + " has a non-numeric score");
      }
    }
    rows.push_back(std::move(row));
  });
  scores.scores.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < cols; ++c) scores.scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
  return scores;
}

factors::FactorScores read_scores(const std::filesystem::path& path) {
  try {
    return parse_scores_csv(io::read_file(path));
  } catch (const Error& e) {
    const std::string what = e.what();
    throw Error(e.module(), path.string() + ": " + what.substr(e.module().size() + 2));
  }
}

json to_json(const align::Assignment& a) {
  json j;
  j["permutation"] = a.permutation;
  j["signs"] = a.signs;
  json r = json::array();
  for (double v : a.per_pair_r) r.push_back(number_or_null(v));
  j["per_pair_r"] = std::move(r);
  j["objective"] = a.objective;
  j["mean_abs_r"] = a.mean_abs_r;
  return j;
}

json to_json(const predict::EvalReport& r) {
  json j;
  j["outcome"] = r.outcome;
  j["feature_set"] = r.feature_set;
  j["task"] = predict::to_string(r.task);
  j["metric"] = r.metric;
  j["rows"] = r.rows;
  j["values"] = r.values;
  j["hyperparameters"] = r.hyperparameters;
  j["seeds"] = r.seeds;
  j["mean"] = r.mean;
  j["std"] = r.std;
  return j;
}

std::string eval_csv(const std::vector<predict::EvalReport>& reports) {
  std::string out = "outcome,feature_set,split,metric,value,hyperparameter\n";
  for (const auto& r : reports) {
    for (std::size_t s = 0; s < r.values.size(); ++s) {
      out += io::csv_escape(r.outcome) + "," + io::csv_escape(r.feature_set) + "," + std::to_string(s) + "," + r.metric +
             "," + io::format_double(r.values[s]) + "," + io::format_double(r.hyperparameters[s]) + "\n";
    }
  }
  return out;
}

std::string eval_summary_csv(const std::vector<predict::EvalReport>& reports) {
  std::string out = "outcome,feature_set,metric,mean,std,splits\n";
  for (const auto& r : reports) {
    out += io::csv_escape(r.outcome) + "," + io::csv_escape(r.feature_set) + "," + r.metric + "," +
           io::format_double(r.mean) + "," + io::format_double(r.std) + "," + std::to_string(r.values.size()) + "\n";
  }
  return out;
}

json to_json(const evalsuite::DlaReport& r) {
  json j;
  j["users"] = r.users;
  j["top_n"] = r.top_n;
  j["controls"] = r.controls;
  j["skipped_terms"] = r.skipped_terms;
  json factors = json::array();
  auto entries = [](const std::vector<evalsuite::DlaEntry>& list) {
    json arr = json::array();
    for (const auto& e : list) {
      arr.push_back({{"token", e.token}, {"r", e.r}, {"mean_frequency", e.mean_frequency}, {"tier", e.tier}});
    }
    return arr;
  };
  for (const auto& f : r.factors) {
    factors.push_back({{"factor", f.factor + 1}, {"positive", entries(f.positive)}, {"negative", entries(f.negative)}});
  }
  j["factors"] = std::move(factors);
  return j;
}

std::string dla_csv(const evalsuite::DlaReport& r) {
  std::string out = "factor,direction,rank,token,r,frequency,tier\n";
  for (const auto& f : r.factors) {
    auto emit = [&](const std::vector<evalsuite::DlaEntry>& list, const char* direction) {
      for (std::size_t i = 0; i < list.size(); ++i) {
        const auto& e = list[i];
        out += std::to_string(f.factor + 1) + "," + direction + "," + std::to_string(i + 1) + "," + io::csv_escape(e.token) +
               "," + io::format_double(e.r) + "," + io::format_double(e.mean_frequency) + "," + std::to_string(e.tier) + "\n";
      }
    };
    emit(f.positive, "positive");
    emit(f.negative, "negative");
  }
  return out;
}

json to_json(const evalsuite::ConvergentReport& r) {
  json j;
  j["rows"] = r.a_names;
  j["columns"] = r.b_names;
  j["column_order"] = r.b_order;
  json m = json::array();
  for (Eigen::Index i = 0; i < r.r.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index c = 0; c < r.r.cols(); ++c) row.push_back(number_or_null(r.r(i, c)));
    m.push_back(std::move(row));
  }
  j["r"] = std::move(m);
  j["assignment"] = to_json(r.assignment);
  return j;
}

json to_json(const evalsuite::RetestReport& r) {
  json j;
  j["train_messages"] = r.train_messages;
  j["test_messages"] = r.test_messages;
  j["train_users"] = r.train_users;
  j["vocabulary"] = r.vocabulary;
  j["k"] = r.k;
  j["model_hash"] = r.model_hash;
  json periods = json::array();
  for (std::size_t t = 0; t < r.periods.size(); ++t) {
    const auto& p = r.periods[t];
    json pj;
    pj["period"] = t;
    pj["start"] = p.start;
    pj["end"] = p.end;
    pj["users"] = p.users;
    pj["common_with_first"] = p.common_with_first;
    pj["missing"] = p.missing;
    pj["r_vs_first"] = optional_list(p.r_vs_first);
    if (t > 0) {
      pj["common_with_previous"] = p.common_with_previous;
      pj["r_vs_previous"] = optional_list(p.r_vs_previous);
    }
    periods.push_back(std::move(pj));
  }
  j["periods"] = std::move(periods);
  j["cross_period_mean"] = optional_list(r.cross_period_mean());
  return j;
}

json to_json(const evalsuite::DropoutReport& r) {
  json j;
  j["runs"] = r.runs;
  j["drop_fraction"] = r.drop_fraction;
  j["training_users"] = r.training_users;
  j["holdout_users"] = r.holdout_users;
  j["run_model_hashes"] = r.run_model_hashes;
  json pairs = json::array();
  for (const auto& p : r.pairs) pairs.push_back({{"a", p.a}, {"b", p.b}, {"mean_abs_r", p.mean_abs_r}});
  j["pairs"] = std::move(pairs);
  j["grand_mean"] = optional_json(r.grand_mean);
  j["insufficient_runs"] = r.insufficient_runs;
  return j;
}

json cluster_report(const nmf::NmfModel& model, std::size_t top_n) {
  json j;
  j["rank"] = model.rank;
  j["iterations"] = model.iterations;
  j["seed"] = model.seed;
  j["likes"] = model.like_ids.size();
  j["objective_initial"] = model.objective.empty() ? 0.0 : model.objective.front();
  j["objective_final"] = model.objective.empty() ? 0.0 : model.objective.back();
  const auto assignment = nmf::cluster_assign(model);
  std::vector<std::size_t> sizes(static_cast<std::size_t>(model.rank), 0);
  json users = json::object();
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] >= 0) ++sizes[static_cast<std::size_t>(assignment[i])];
    users[model.user_ids[i]] = assignment[i] >= 0 ? json(assignment[i]) : json(nullptr);
  }
  json clusters = json::array();
  for (int c = 0; c < model.rank; ++c) {
    clusters.push_back({{"cluster", c}, {"users", sizes[static_cast<std::size_t>(c)]}, {"top_items", nmf::top_items(model, c, top_n)}});
  }
  j["clusters"] = std::move(clusters);
  j["assignment"] = std::move(users);
  return j;
}

json to_json(const topics::TopicModel& model, std::size_t top_words) {
  json j;
  j["method"] = "lda";
  j["k"] = model.k;
  j["alpha_total"] = model.alpha_total;
  j["beta"] = model.beta;
  j["iterations"] = model.iterations;
  j["seed"] = model.seed;
  j["hyperparameter_optimization"] = model.hyperparameter_optimization;
  j["users"] = model.user_ids.size();
  j["skipped_users"] = model.skipped_users;
  const auto check = topics::composition_covariance(model.proportions);
  j["proportion_covariance"] = {{"off_diagonal_sum", check.off_diagonal_sum}, {"variance_sum", check.variance_sum}};
  json topics_json = json::array();
  for (Eigen::Index t = 0; t < model.topic_word.rows(); ++t) {
    std::vector<std::size_t> order(model.vocabulary.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return model.topic_word(t, static_cast<Eigen::Index>(a)) > model.topic_word(t, static_cast<Eigen::Index>(b));
    });
    if (order.size() > top_words) order.resize(top_words);
    json words = json::array();
    for (auto w : order) words.push_back({{"token", model.vocabulary[w]}, {"p", model.topic_word(t, static_cast<Eigen::Index>(w))}});
    topics_json.push_back({{"topic", t + 1}, {"top_words", std::move(words)}});
  }
  j["topics"] = std::move(topics_json);
  return j;
}

}  // namespace blt::serialize
