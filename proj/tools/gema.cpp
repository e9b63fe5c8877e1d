// Command-line front end: extract, score, benchmark, correlate, analyze, synth.

#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "gema/cli.hpp"

namespace {

void add_common(CLI::App* cmd, gema::cli::RunConfig& c, std::string& backend) {
  cmd->add_option("--backend", backend, "http | mock | offline-fixtures")
      ->check(CLI::IsMember({"http", "mock", "offline-fixtures", "offline"}));
  cmd->add_option("--fixtures", c.fixtures,
                  "entity fixtures JSONL (offline-fixtures) or response directory (mock)");
  cmd->add_option("--lexicon", c.lexicon, "synonym lexicon CSV (canonical,synonym)");
  cmd->add_option("--cache-dir", c.cache_dir, "response cache directory (else GEMA_CACHE_DIR)");
  cmd->add_option("--model", c.model, "model name sent to the completion backend");
  cmd->add_option("--alpha", c.alpha, "objective weight in the combined score")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--lambda", c.lambda, "per-error penalty for subjective aspects")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--parallelism", c.parallelism, "concurrent studies / requests")
      ->check(CLI::PositiveNumber);
  cmd->add_flag("--strict", c.strict, "fail the run on any per-study error");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GEMA-Score report evaluation"};
  app.require_subcommand(1);
  gema::cli::RunConfig config;
  std::string backend = "offline-fixtures";

  auto* extract = app.add_subcommand("extract", "extract entity sets for every report");
  add_common(extract, config, backend);
  extract->add_option("--corpus", config.corpus, "report-pair JSONL")->required();
  extract->add_option("--out", config.out, "output fixtures JSONL")->required();

  auto* score = app.add_subcommand("score", "score every study");
  add_common(score, config, backend);
  score->add_option("--corpus", config.corpus, "report-pair JSONL")->required();
  score->add_option("--out", config.out, "output scores JSONL")->required();
  score->add_option("--explain", config.explain, "also write human-readable explanations");

  auto* benchmark = app.add_subcommand("benchmark", "baseline metrics next to GEMA scores");
  add_common(benchmark, config, backend);
  benchmark->add_option("--corpus", config.corpus, "report-pair JSONL")->required();
  benchmark->add_option("--scores", config.scores, "precomputed scores JSONL");
  benchmark->add_option("--out", config.out, "output CSV")->required();

  auto* correlate = app.add_subcommand("correlate", "correlate metrics with rater error counts");
  add_common(correlate, config, backend);
  correlate->add_option("--corpus", config.corpus, "report-pair JSONL (enables baselines)");
  correlate->add_option("--scores", config.scores, "precomputed scores JSONL");
  correlate->add_option("--annotations", config.annotations, "rater CSV")->required();
  correlate->add_option("--out", config.out, "output JSON report");

  auto* analyze = app.add_subcommand("analyze", "histograms and correlation matrix of match counts");
  analyze->add_option("--scores", config.scores, "scores JSONL")->required();
  analyze->add_option("--out", config.out, "output prefix")->required();
  analyze->add_option("--bins", config.bins, "histogram bins")->check(CLI::PositiveNumber);

  auto* synth = app.add_subcommand("synth", "write a synthetic corpus with injected errors");
  synth->add_option("--seed", config.seed, "generator seed");
  synth->add_option("--studies", config.synthetic_studies, "number of studies")
      ->check(CLI::PositiveNumber);
  synth->add_option("--model", config.model, "model name used in mock fixture digests");
  synth->add_option("--out", config.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  config.backend = *gema::cli::parse_backend(backend);

  if (extract->parsed()) return gema::cli::cmd_extract(config, std::cerr);
  if (score->parsed()) return gema::cli::cmd_score(config, std::cerr);
  if (benchmark->parsed()) return gema::cli::cmd_benchmark(config, std::cerr);
  if (correlate->parsed()) return gema::cli::cmd_correlate(config, std::cout);
  if (analyze->parsed()) return gema::cli::cmd_analyze(config, std::cerr);
  if (synth->parsed()) return gema::cli::cmd_synth(config, std::cerr);
  return 2;
}
