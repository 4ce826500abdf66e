#include "blt/cli.hpp"
#include "blt/io.hpp"
#include "blt/serialize.hpp"
#include "doctest.h"
#include "support.hpp"

#include <sstream>
#include <string>

using namespace blt;
using namespace blt::cli;
namespace fs = std::filesystem;

namespace {

fixture::FixtureConfig small_fixture() {
  fixture::FixtureConfig f;
  f.users = 150;
  f.k = 3;
  f.terms = 300;
  f.tokens_per_period = 1200;
  f.likes_clusters = 4;
  return f;
}

struct Workspace {
  testsupport::TempDir tmp;
  fs::path dir;

  explicit Workspace(const fixture::FixtureConfig& f = small_fixture()) : dir(tmp.path() / "fx") {
    std::ostringstream log;
    REQUIRE(cmd_gen_fixture(f, dir, log) == 0);
  }

  PipelineConfig config(json overrides = json::object()) const {
    if (!overrides.contains("evaluation")) overrides["evaluation"] = {{"n_splits", 3}};
    if (!overrides.contains("nmf")) overrides["nmf"] = {{"iterations", 100}};
    return load_config(dir / "config.json", overrides);
  }
};

json read_json(const fs::path& p) { return json::parse(io::read_file(p)); }

}  // namespace

TEST_CASE("config rejects unknown keys and bad values") {
  CHECK_THROWS_WITH_AS(parse_config({{"colour", 1}}, "."), doctest::Contains("colour"), Error);
  CHECK_THROWS_AS(parse_config({{"filter", {{"min_word", 3}}}}, "."), Error);
  CHECK_THROWS_AS(parse_config({{"k", 0}}, "."), Error);
  CHECK_THROWS_AS(parse_config({{"method", "pca"}}, "."), Error);
  const auto cfg = parse_config({{"messages", "m.csv"}}, "/data");
  CHECK(cfg.resolve(*cfg.messages) == fs::path("/data/m.csv"));
  CHECK(cfg.k == 5);
  CHECK(cfg.rotation == factors::RotationKind::promax);
  CHECK(cfg.filter.min_words == 1000);
}

TEST_CASE("config hash ignores out_dir and threads") {
  auto a = parse_config({{"k", 4}}, ".");
  auto b = parse_config({{"k", 4}, {"out_dir", "elsewhere"}, {"threads", 8}}, ".");
  CHECK(config_hash(a) == config_hash(b));
  auto c = parse_config({{"k", 4}, {"seed", 2}}, ".");
  CHECK(config_hash(a) != config_hash(c));
}

TEST_CASE("fit writes a model with k columns and is reproducible") {
  Workspace ws;
  std::ostringstream log;
  auto cfg = ws.config();
  REQUIRE(cmd_fit(cfg, log) == 0);
  const auto model = read_json(cfg.out_dir / "model.json");
  CHECK(model.at("loadings")[0].size() == 3);
  CHECK(model.at("manifest").at("command") == "fit");
  CHECK(model.at("manifest").at("inputs").contains("messages"));
  const auto first = model.at("hash").get<std::string>();
  const auto scores1 = io::read_file(cfg.out_dir / "scores.csv");
  CHECK(scores1.rfind("# manifest ", 0) == 0);
  CHECK(log.str().find("communality") != std::string::npos);

  REQUIRE(cmd_fit(cfg, log) == 0);
  CHECK(read_json(cfg.out_dir / "model.json").at("hash") == first);
  CHECK(io::read_file(cfg.out_dir / "scores.csv") == scores1);

  auto wide = ws.config({{"k", 30}, {"out_dir", "wide"}});
  REQUIRE(cmd_fit(wide, log) == 0);
  CHECK(read_json(wide.out_dir / "model.json").at("loadings")[0].size() == 30);
}

TEST_CASE("eval reports every feature set and is deterministic") {
  Workspace ws;
  std::ostringstream log;
  auto cfg = ws.config();
  REQUIRE(cmd_fit(cfg, log) == 0);
  REQUIRE(cmd_eval(cfg, cfg.out_dir, log) == 0);
  const auto first = io::read_file(cfg.out_dir / "eval.json");
  const auto j = json::parse(first);
  const auto& demographic = j.at("outcomes").at("demographic");
  REQUIRE(demographic.size() == 3);
  CHECK(demographic[0].at("feature_set") == "demog");
  CHECK(demographic[2].at("feature_set") == "scores+demog");
  CHECK(demographic[2].at("mean").get<double>() >= demographic[0].at("mean").get<double>() - 0.02);
  CHECK(j.at("outcomes").at("binary")[1].at("metric") == "auc");
  CHECK(j.contains("like_clusters"));

  REQUIRE(cmd_eval(cfg, cfg.out_dir, log) == 0);
  CHECK(io::read_file(cfg.out_dir / "eval.json") == first);
}

TEST_CASE("outcome equal to the first factor is predicted almost perfectly") {
  Workspace ws;
  std::ostringstream log;
  auto cfg = ws.config();
  REQUIRE(cmd_fit(cfg, log) == 0);
  const auto scores = serialize::read_scores(cfg.out_dir / "scores.csv");
  std::string csv = "user_id,leak\n";
  for (std::size_t i = 0; i < scores.user_ids.size(); ++i)
    csv += scores.user_ids[i] + "," + io::format_double(scores.scores(static_cast<Eigen::Index>(i), 0)) + "\n";
  io::write_file_atomic(ws.dir / "leak.csv", csv);
  auto leak = ws.config({{"outcomes", "leak.csv"}, {"likes", nullptr}, {"evaluation", {{"outcomes", {"leak"}}, {"n_splits", 3}}}});
  REQUIRE(cmd_eval(leak, cfg.out_dir, log) == 0);
  const auto j = read_json(leak.out_dir / "eval.json");
  CHECK(j.at("outcomes").at("leak")[1].at("feature_set") == "scores");
  CHECK(j.at("outcomes").at("leak")[1].at("mean").get<double>() > 0.999);
}

TEST_CASE("eval errors name the file and missing columns") {
  Workspace ws;
  std::ostringstream log;
  auto cfg = ws.config();
  REQUIRE(cmd_fit(cfg, log) == 0);
  io::write_file_atomic(ws.dir / "empty.csv", "");
  auto empty = ws.config({{"outcomes", "empty.csv"}});
  CHECK_THROWS_WITH_AS(cmd_eval(empty, cfg.out_dir, log), doctest::Contains("empty.csv"), Error);

  auto missing = ws.config({{"evaluation", {{"outcomes", {"linear", "income", "iq"}}}}});
  CHECK_THROWS_WITH_AS(cmd_eval(missing, cfg.out_dir, log), doctest::Contains("income, iq"), Error);
}

TEST_CASE("dla outputs") {
  Workspace ws;
  std::ostringstream log;
  auto cfg = ws.config();
  REQUIRE(cmd_fit(cfg, log) == 0);
  REQUIRE(cmd_dla(cfg, cfg.out_dir, log) == 0);
  const auto first = io::read_file(cfg.out_dir / "dla.json");
  const auto j = json::parse(first);
  for (const auto& f : j.at("factors")) {
    CHECK(f.at("positive").size() == 15);
    CHECK(f.at("negative").size() == 15);
  }
  CHECK(j.at("controls").empty());
  REQUIRE(cmd_dla(cfg, cfg.out_dir, log) == 0);
  CHECK(io::read_file(cfg.out_dir / "dla.json") == first);

  auto controlled = ws.config({{"residualize", {{"dla", true}}}, {"out_dir", "dla_controls"}});
  REQUIRE(cmd_dla(controlled, cfg.out_dir, log) == 0);
  CHECK(read_json(controlled.out_dir / "dla.json").at("controls") == json({"age", "gender"}));
  CHECK(io::read_file(controlled.out_dir / "dla.csv").rfind("# manifest ", 0) == 0);
}

TEST_CASE("stability with and without timestamps") {
  Workspace ws;
  std::ostringstream log;
  auto cfg = ws.config({{"stability", {{"runs", 2}, {"drop_fraction", 0.0}}}});
  REQUIRE(cmd_stability(cfg, "", log) == 0);
  const auto dropout = read_json(cfg.out_dir / "dropout.json");
  CHECK(std::abs(dropout.at("grand_mean").get<double>() - 1.0) < 1e-9);
  CHECK(read_json(cfg.out_dir / "retest.json").contains("periods"));

  // Strip the timestamp column.
  std::string stripped = "user_id,text\n";
  io::parse_csv(io::read_file(ws.dir / "messages.csv"), [&](std::vector<std::string>& f, std::size_t line) {
    if (line == 1) return;
    stripped += f[0] + "," + io::csv_escape(f[2]) + "\n";
  });
  io::write_file_atomic(ws.dir / "untimed.csv", stripped);
  auto untimed = ws.config({{"messages", "untimed.csv"}, {"stability", {{"runs", 2}}}, {"out_dir", "untimed"}});
  REQUIRE(cmd_stability(untimed, "", log) == 0);
  CHECK(read_json(untimed.out_dir / "retest.json").at("skipped") == true);
  CHECK(read_json(untimed.out_dir / "dropout.json").at("runs") == 2);
  CHECK(log.str().find("test-retest skipped") != std::string::npos);
}

TEST_CASE("score, align and cluster commands") {
  Workspace ws;
  std::ostringstream log;
  auto cfg = ws.config();
  REQUIRE(cmd_fit(cfg, log) == 0);
  REQUIRE(cmd_score(cfg, cfg.out_dir, cfg.out_dir / "rescored.csv", log) == 0);
  const auto a = serialize::read_scores(cfg.out_dir / "scores.csv");
  const auto b = serialize::read_scores(cfg.out_dir / "rescored.csv");
  CHECK(a.user_ids == b.user_ids);
  CHECK((a.scores - b.scores).cwiseAbs().maxCoeff() < 1e-9);

  REQUIRE(cmd_align(cfg.out_dir / "scores.csv", cfg.out_dir / "rescored.csv", cfg.out_dir / "alignment.json", log) == 0);
  const auto al = read_json(cfg.out_dir / "alignment.json");
  CHECK(al.at("assignment").at("permutation") == json({0, 1, 2}));

  REQUIRE(cmd_cluster_likes(cfg, log) == 0);
  const auto clusters = read_json(cfg.out_dir / "clusters.json");
  CHECK(clusters.contains("manifest"));
}

TEST_CASE("svd and lda methods") {
  Workspace ws;
  std::ostringstream log;
  auto svd = ws.config({{"method", "svd"}, {"rotation", "varimax"}, {"out_dir", "svd"}});
  REQUIRE(cmd_fit(svd, log) == 0);
  CHECK(read_json(svd.out_dir / "model.json").at("method") == "svd");
  auto lda = ws.config({{"method", "lda"}, {"lda", {{"iterations", 20}}}, {"out_dir", "lda"}});
  REQUIRE(cmd_fit(lda, log) == 0);
  CHECK(fs::exists(lda.out_dir / "topics.json"));
  CHECK(serialize::read_scores(lda.out_dir / "scores.csv").scores.cols() == 3);
}

TEST_CASE("missing messages file is reported") {
  Workspace ws;
  std::ostringstream log;
  auto cfg = ws.config({{"messages", "nope.csv"}});
  CHECK_THROWS_WITH_AS(cmd_fit(cfg, log), doctest::Contains("nope.csv"), Error);
}
