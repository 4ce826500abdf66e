// blt: fit, score and evaluate language-based trait factors.

#include "blt/cli.hpp"
#include "blt/common.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using blt::cli::json;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::optional<int> threads;
};

blt::cli::PipelineConfig config_from(const Globals& g, json overrides) {
  if (g.config.empty()) throw blt::Error("cli", "--config is required for this command");
  if (g.seed) overrides["seed"] = *g.seed;
  if (g.threads) overrides["threads"] = *g.threads;
  auto cfg = blt::cli::load_config(g.config, overrides);
  if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"blt: behavior-based linguistic traits from user language"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Pipeline configuration (JSON)");
  app.add_option("--seed", g.seed, "Override the configured seed");
  app.add_option("--out-dir", g.out_dir, "Directory for outputs");
  app.add_option("--threads", g.threads, "Worker threads for repeated fits")->check(CLI::PositiveNumber);

  std::string model_dir;
  std::string output;

  auto* fit = app.add_subcommand("fit", "Fit a factor (or topic) model and score the training users");
  std::optional<int> fit_k;
  std::string fit_method, fit_rotation;
  fit->add_option("--k", fit_k, "Number of factors")->check(CLI::PositiveNumber);
  fit->add_option("--method", fit_method, "fa, svd or lda")->check(CLI::IsMember({"fa", "svd", "lda"}));
  fit->add_option("--rotation", fit_rotation, "none, varimax, equamax or promax")
      ->check(CLI::IsMember({"none", "varimax", "equamax", "promax"}));
  bool fit_residualize = false;
  fit->add_flag("--residualize", fit_residualize, "Residualize term frequencies on age and gender before fitting");

  auto* score = app.add_subcommand("score", "Score the configured messages with a saved model");
  score->add_option("--model", model_dir, "Model directory")->required();
  score->add_option("--output", output, "Scores CSV to write");

  auto* eval = app.add_subcommand("eval", "Predictive evaluation of factor scores against outcomes");
  eval->add_option("--model", model_dir, "Model directory (default: out dir)");
  std::optional<int> n_splits;
  eval->add_option("--n-splits", n_splits, "Random train/test splits")->check(CLI::PositiveNumber);

  auto* stability = app.add_subcommand("stability", "Test-retest and dropout reliability");
  stability->add_option("--model", model_dir, "Model directory whose vocabulary is reused");
  std::optional<int> runs;
  std::optional<double> drop_fraction;
  stability->add_option("--runs", runs, "Dropout runs")->check(CLI::PositiveNumber);
  stability->add_option("--drop-fraction", drop_fraction, "Fraction of training users dropped per run")
      ->check(CLI::Range(0.0, 0.99));

  auto* dla = app.add_subcommand("dla", "Differential language analysis of factor scores");
  dla->add_option("--model", model_dir, "Model directory (default: out dir)");
  std::optional<int> top_n;
  dla->add_option("--top-n", top_n, "Terms reported per direction")->check(CLI::NonNegativeNumber);
  bool dla_residualize = false;
  dla->add_flag("--residualize", dla_residualize, "Control for age and gender");

  auto* cluster = app.add_subcommand("cluster-likes", "NMF clustering of the likes matrix");
  std::optional<int> rank;
  cluster->add_option("--rank", rank, "Number of clusters")->check(CLI::PositiveNumber);

  auto* align = app.add_subcommand("align", "Match the factors of two score files");
  std::string align_a, align_b;
  align->add_option("--a", align_a, "First scores CSV")->required()->check(CLI::ExistingFile);
  align->add_option("--b", align_b, "Second scores CSV")->required()->check(CLI::ExistingFile);
  align->add_option("--output", output, "Alignment JSON to write");

  auto* gen = app.add_subcommand("gen-fixture", "Write a synthetic planted-factor corpus");
  blt::fixture::FixtureConfig fx;
  gen->add_option("--users", fx.users, "Users");
  gen->add_option("--k", fx.k, "Planted factors")->check(CLI::PositiveNumber);
  gen->add_option("--terms", fx.terms, "Vocabulary size");
  gen->add_option("--noise", fx.noise, "Std of per-user term log-rate noise");
  gen->add_option("--loading", fx.loading, "Log-rate shift per unit factor score");
  gen->add_option("--correlation", fx.factor_correlation, "Common factor correlation");
  gen->add_option("--transient", fx.transient, "Factors active only in the first period");
  gen->add_option("--periods", fx.periods, "Six-month periods of messages")->check(CLI::PositiveNumber);
  gen->add_option("--tokens-per-period", fx.tokens_per_period, "Tokens per user per period");
  gen->add_option("--likes-clusters", fx.likes_clusters, "Planted like clusters");
  gen->add_option("--fixture-seed", fx.seed, "Generator seed (--seed also applies)");

  CLI11_PARSE(app, argc, argv);

  try {
    json overrides = json::object();
    if (*fit) {
      if (fit_k) overrides["k"] = *fit_k;
      if (!fit_method.empty()) overrides["method"] = fit_method;
      if (!fit_rotation.empty()) overrides["rotation"] = {{"type", fit_rotation}};
      if (fit_residualize) overrides["residualize"] = {{"terms", true}};
      return blt::cli::cmd_fit(config_from(g, overrides), std::cout);
    }
    if (*score) {
      return blt::cli::cmd_score(config_from(g, overrides), model_dir, output, std::cout);
    }
    if (*eval) {
      if (n_splits) overrides["evaluation"] = {{"n_splits", *n_splits}};
      const auto cfg = config_from(g, overrides);
      return blt::cli::cmd_eval(cfg, model_dir.empty() ? cfg.out_dir : std::filesystem::path(model_dir), std::cout);
    }
    if (*stability) {
      json s = json::object();
      if (runs) s["runs"] = *runs;
      if (drop_fraction) s["drop_fraction"] = *drop_fraction;
      if (!s.empty()) overrides["stability"] = s;
      const auto cfg = config_from(g, overrides);
      return blt::cli::cmd_stability(cfg, model_dir.empty() ? cfg.out_dir : std::filesystem::path(model_dir), std::cout);
    }
    if (*dla) {
      if (top_n) overrides["dla"] = {{"top_n", *top_n}};
      if (dla_residualize) overrides["residualize"] = {{"dla", true}};
      const auto cfg = config_from(g, overrides);
      return blt::cli::cmd_dla(cfg, model_dir.empty() ? cfg.out_dir : std::filesystem::path(model_dir), std::cout);
    }
    if (*cluster) {
      if (rank) overrides["nmf"] = {{"rank", *rank}};
      return blt::cli::cmd_cluster_likes(config_from(g, overrides), std::cout);
    }
    if (*align) {
      std::filesystem::path target = output;
      if (target.empty()) target = std::filesystem::path(g.out_dir.empty() ? "." : g.out_dir) / "alignment.json";
      return blt::cli::cmd_align(align_a, align_b, target, std::cout);
    }
    if (*gen) {
      if (g.seed) fx.seed = *g.seed;
      const std::filesystem::path dir = g.out_dir.empty() ? "fixture" : g.out_dir;
      return blt::cli::cmd_gen_fixture(fx, dir, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
