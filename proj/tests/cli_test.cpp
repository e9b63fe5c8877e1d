#include <gtest/gtest.h>

#include <sstream>

#include "gema/cli.hpp"
#include "gema/synthetic.hpp"
#include "support.hpp"

using namespace gema;
using namespace gema::cli;

namespace {

std::filesystem::path data(const std::string& name) {
  return std::filesystem::path(GEMA_SOURCE_DIR) / "tests" / "data" / name;
}

synthetic::SyntheticCorpus small_corpus(std::size_t n = 2) {
  synthetic::GeneratorConfig g;
  g.seed = 11;
  g.study_count = n;
  return synthetic::generate(g);
}

RunConfig mock_config(const std::filesystem::path& corpus, const std::filesystem::path& out) {
  RunConfig c;
  c.backend = BackendKind::mock;
  c.corpus = corpus;
  c.out = out;
  c.fixtures = out.parent_path() / "mock";  // unused when a backend is injected
  return c;
}

// Offline corpus where each study's candidate equals its reference.
RunConfig identity_offline(test::TempDir& dir) {
  std::vector<ReportPair> pairs = {
      {"i1", Modality::xray, "There is mild atelectasis in the left lower lobe.",
       "There is mild atelectasis in the left lower lobe."},
      {"i2", Modality::ct, "A small right pleural effusion is present.",
       "A small right pleural effusion is present."}};
  ExtractionFixtures fx;
  auto a = test::set_of({test::ent("atelectasis", "left lower lobe", "mild", {})}, Role::reference);
  auto b = test::set_of({test::ent("pleural effusion", "right", "small", {})}, Role::reference);
  fx[{"i1", Role::reference}] = a;
  fx[{"i1", Role::candidate}] = a;
  fx[{"i1", Role::candidate}].source = Role::candidate;
  fx[{"i2", Role::reference}] = b;
  fx[{"i2", Role::candidate}] = b;
  fx[{"i2", Role::candidate}].source = Role::candidate;
  write_corpus(pairs, dir / "c.jsonl");
  write_extraction_fixtures(fx, dir / "f.jsonl");
  RunConfig c;
  c.corpus = dir / "c.jsonl";
  c.fixtures = dir / "f.jsonl";
  return c;
}

std::vector<std::string> csv_fields(const std::string& row) { return split_csv_row(row); }

}  // namespace

TEST(Cli, ParseBackend) {
  EXPECT_EQ(parse_backend("mock"), BackendKind::mock);
  EXPECT_EQ(parse_backend("offline-fixtures"), BackendKind::offline_fixtures);
  EXPECT_EQ(parse_backend("http"), BackendKind::http);
  EXPECT_FALSE(parse_backend("gpt"));
}

TEST(Cli, ConfigValidation) {
  RunConfig c;
  c.fixtures = "f.jsonl";
  c.alpha = 1.5;
  EXPECT_THROW(scoring_config(c), InvalidArgument);
  c.alpha = 0.6;
  c.parallelism = 0;
  EXPECT_THROW(validate(c), InvalidArgument);
  c.parallelism = 4;
  EXPECT_NO_THROW(validate(c));
  EXPECT_DOUBLE_EQ(scoring_config(c).alpha, 0.6);
}

TEST(CliExtract, MockTwoStudies) {
  test::TempDir dir;
  auto corpus = small_corpus(2);
  write_corpus(corpus.pairs, dir / "c.jsonl");
  MockBackend mock;
  synthetic::register_mock_responses(corpus, mock);
  std::ostringstream log;
  auto config = mock_config(dir / "c.jsonl", dir / "entities.jsonl");
  ASSERT_EQ(cmd_extract(config, log, &mock), 0) << log.str();
  EXPECT_EQ(read_lines(dir / "entities.jsonl").size(), 4u);
  auto fx = load_extraction_fixtures(dir / "entities.jsonl");
  EXPECT_EQ(fx, corpus.fixtures);
  EXPECT_NE(log.str().find("extract: 2 studies, 4 entity sets, structural errors per study 0.000 (0.000)"),
            std::string::npos)
      << log.str();
}

TEST(CliExtract, StrictFailureLeavesNoOutput) {
  test::TempDir dir;
  auto corpus = small_corpus(2);
  write_corpus(corpus.pairs, dir / "c.jsonl");
  MockBackend mock;
  mock.set_fallback("this is not json");
  write_lines(dir / "entities.jsonl", {"stale"});
  auto config = mock_config(dir / "c.jsonl", dir / "entities.jsonl");
  config.strict = true;
  std::ostringstream log;
  EXPECT_NE(cmd_extract(config, log, &mock), 0);
  EXPECT_FALSE(std::filesystem::exists(dir / "entities.jsonl"));

  config.strict = false;
  std::ostringstream lenient_log;
  EXPECT_EQ(cmd_extract(config, lenient_log, &mock), 0);
  auto fx = load_extraction_fixtures(dir / "entities.jsonl");
  EXPECT_EQ(fx.size(), 4u);
  for (const auto& [_, set] : fx) EXPECT_EQ(set.structural_error_count, 1u);
}

TEST(CliScore, WarmCacheMakesNoBackendCalls) {
  test::TempDir dir;
  auto corpus = small_corpus(3);
  write_corpus(corpus.pairs, dir / "c.jsonl");
  MockBackend mock;
  synthetic::register_mock_responses(corpus, mock);
  auto config = mock_config(dir / "c.jsonl", dir / "s1.jsonl");
  config.cache_dir = dir / "cache";
  std::ostringstream log;
  ASSERT_EQ(cmd_score(config, log, &mock), 0) << log.str();
  EXPECT_EQ(mock.call_count(), 3u * 5u);
  mock.reset_call_count();
  config.out = dir / "s2.jsonl";
  ASSERT_EQ(cmd_score(config, log, &mock), 0) << log.str();
  EXPECT_EQ(mock.call_count(), 0u);
  EXPECT_EQ(read_file(dir / "s1.jsonl"), read_file(dir / "s2.jsonl"));
}

TEST(CliScore, MockRunsAreByteIdentical) {
  test::TempDir dir;
  auto corpus = small_corpus(4);
  auto written = synthetic::write(corpus, dir / "syn");
  RunConfig config = mock_config(written.corpus, dir / "a.jsonl");
  config.fixtures = written.mock_dir;
  config.parallelism = 3;
  std::ostringstream log;
  ASSERT_EQ(cmd_score(config, log), 0) << log.str();
  config.out = dir / "b.jsonl";
  config.parallelism = 1;
  ASSERT_EQ(cmd_score(config, log), 0) << log.str();
  EXPECT_EQ(read_file(dir / "a.jsonl"), read_file(dir / "b.jsonl"));
}

TEST(CliScore, IdentityCorpusScoresOne) {
  test::TempDir dir;
  auto config = identity_offline(dir);
  config.out = dir / "s.jsonl";
  config.explain = dir / "explain.txt";
  std::ostringstream log;
  ASSERT_EQ(cmd_score(config, log), 0) << log.str();
  auto scores = read_scores(dir / "s.jsonl");
  ASSERT_EQ(scores.size(), 2u);
  for (const auto& s : scores) {
    EXPECT_DOUBLE_EQ(s.s_obj, 1.0);
    EXPECT_DOUBLE_EQ(s.gema, 1.0);
  }
  EXPECT_NE(read_file(dir / "explain.txt").find("Study i1"), std::string::npos);
  EXPECT_NE(log.str().find("score: 2 studies, mean GEMA 1.000"), std::string::npos) << log.str();
}

TEST(CliScore, EmptyCandidateScoresZeroObjective) {
  test::TempDir dir;
  RunConfig config;
  config.corpus = data("mini_corpus.jsonl");
  config.fixtures = data("mini_fixtures.jsonl");
  config.out = dir / "s.jsonl";
  std::ostringstream log;
  ASSERT_EQ(cmd_score(config, log), 0) << log.str();
  auto scores = read_scores(dir / "s.jsonl");
  ASSERT_EQ(scores.size(), 3u);
  EXPECT_EQ(scores[1].study_id, "m2");
  EXPECT_DOUBLE_EQ(scores[1].s_obj, 0.0);
  EXPECT_EQ(scores[1].st_pred, 0u);
  EXPECT_EQ(scores[1].explanation.omissions.size(), 1u);
}

TEST(CliBenchmark, HeaderAndSanity) {
  test::TempDir dir;
  RunConfig config;
  config.corpus = data("mini_corpus.jsonl");
  config.fixtures = data("mini_fixtures.jsonl");
  config.out = dir / "bench.csv";
  std::ostringstream log;
  ASSERT_EQ(cmd_benchmark(config, log), 0) << log.str();
  auto lines = read_lines(dir / "bench.csv");
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0], kBenchmarkHeader);
  auto m1 = csv_fields(lines[1]);
  auto m2 = csv_fields(lines[2]);
  EXPECT_EQ(m1[0], "m1");
  EXPECT_EQ(m1[1], "1.000000");
  EXPECT_EQ(m1[2], "1.000000");
  EXPECT_EQ(m2[0], "m2");
  EXPECT_EQ(m2[1], "0.000000");
  EXPECT_EQ(m2[2], "0.000000");
  EXPECT_EQ(m2[3], "0.000000");
  EXPECT_EQ(m2[5], "0.000000");
}

TEST(CliBenchmark, GoldenOutput) {
  test::TempDir dir;
  RunConfig config;
  config.corpus = data("mini_corpus.jsonl");
  config.fixtures = data("mini_fixtures.jsonl");
  config.out = dir / "bench.csv";
  std::ostringstream log;
  ASSERT_EQ(cmd_benchmark(config, log), 0) << log.str();
  EXPECT_EQ(read_file(dir / "bench.csv"),
            read_file(std::filesystem::path(GEMA_SOURCE_DIR) / "tests/golden/mini_benchmark.csv"));
}

TEST(CliCorrelate, PerfectInverseRanking) {
  test::TempDir dir;
  std::vector<ScoreBreakdown> scores;
  std::vector<AnnotationRecord> notes;
  for (int i = 0; i < 5; ++i) {
    ScoreBreakdown b;
    b.study_id = "s" + std::to_string(i);
    b.gema = 1.0 - 0.1 * i;
    b.s_obj = b.gema;
    b.s_sub = 1.0;
    scores.push_back(b);
    notes.push_back({b.study_id, "r0", i, 0, {}});
  }
  write_scores(scores, dir / "s.jsonl");
  write_annotations(notes, dir / "a.csv");
  RunConfig config;
  config.scores = dir / "s.jsonl";
  config.annotations = dir / "a.csv";
  config.out = dir / "report.json";
  std::ostringstream log;
  ASSERT_EQ(cmd_correlate(config, log), 0) << log.str();
  auto report = nlohmann::json::parse(read_file(dir / "report.json"));
  bool seen = false;
  for (const auto& row : report["results"]) {
    if (row["group"] == "rater:r0" && row["metric"] == "gema" && row["target"] == "significant_errors" &&
        row["method"] == "kendall_b") {
      EXPECT_DOUBLE_EQ(row["coefficient"].get<double>(), -1.0);
      EXPECT_DOUBLE_EQ(row["abs_coefficient"].get<double>(), 1.0);
      EXPECT_FALSE(row["p_value"].is_null());
      seen = true;
    }
    if (row["metric"] == "s_sub") EXPECT_FALSE(row["defined"].get<bool>());
  }
  EXPECT_TRUE(seen);
  EXPECT_NE(log.str().find("kendall_b"), std::string::npos);
}

TEST(CliCorrelate, TwoStudiesHaveNoPValue) {
  std::map<std::string, std::map<std::string, double>> metrics = {{"a", {{"gema", 0.9}}},
                                                                  {"b", {{"gema", 0.5}}}};
  std::vector<AnnotationRecord> notes = {{"a", "r0", 0, 0, {}}, {"b", "r0", 2, 1, {}}};
  auto cells = correlate_scores(metrics, notes);
  ASSERT_FALSE(cells.empty());
  for (const auto& c : cells) {
    EXPECT_EQ(c.group, "rater:r0");
    EXPECT_EQ(c.n, 2u);
    ASSERT_TRUE(c.result);
    EXPECT_DOUBLE_EQ(c.result->coefficient, -1.0);
    if (c.method == stats::Method::kendall_b) continue;
    EXPECT_FALSE(c.result->p_value);
    EXPECT_EQ(c.note, "p-value undefined (n < 3)");
  }
}

TEST(CliCorrelate, MeanGroupAcrossRaters) {
  auto notes = load_annotations(data("mini_annotations.csv"));
  std::map<std::string, std::map<std::string, double>> metrics = {
      {"m1", {{"gema", 1.0}}}, {"m2", {{"gema", 0.2}}}, {"m3", {{"gema", 0.5}}}};
  auto cells = correlate_scores(metrics, notes);
  std::set<std::string> groups, targets;
  for (const auto& c : cells) {
    groups.insert(c.group);
    targets.insert(c.target);
  }
  EXPECT_EQ(groups, (std::set<std::string>{"mean", "rater:r0", "rater:r1"}));
  EXPECT_TRUE(targets.count("type:missed_finding"));
  EXPECT_TRUE(targets.count("type:wrong_location"));
}

TEST(CliCorrelate, NoOverlapFails) {
  test::TempDir dir;
  ScoreBreakdown b;
  b.study_id = "x";
  write_scores({b}, dir / "s.jsonl");
  write_annotations({{"y", "r0", 1, 0, {}}}, dir / "a.csv");
  RunConfig config;
  config.scores = dir / "s.jsonl";
  config.annotations = dir / "a.csv";
  std::ostringstream log;
  EXPECT_EQ(cmd_correlate(config, log), 1);
}

TEST(CliAnalyze, WritesMatrixAndHistograms) {
  test::TempDir dir;
  RunConfig config;
  config.corpus = data("mini_corpus.jsonl");
  config.fixtures = data("mini_fixtures.jsonl");
  config.out = dir / "s.jsonl";
  std::ostringstream log;
  ASSERT_EQ(cmd_score(config, log), 0);
  RunConfig analyze;
  analyze.scores = dir / "s.jsonl";
  analyze.out = dir / "dist";
  ASSERT_EQ(cmd_analyze(analyze, log), 0) << log.str();
  auto j = nlohmann::json::parse(read_file(dir / "dist.json"));
  EXPECT_TRUE(j["histograms"].contains("st_pred"));
  auto csv = read_lines(dir / "dist.matrix.csv");
  EXPECT_EQ(csv.size(), 6u);
}

TEST(CliSynth, WritesAllArtifacts) {
  test::TempDir dir;
  RunConfig config;
  config.out = dir / "syn";
  config.synthetic_studies = 3;
  std::ostringstream log;
  ASSERT_EQ(cmd_synth(config, log), 0) << log.str();
  EXPECT_EQ(load_corpus(dir / "syn/corpus.jsonl").pairs.size(), 3u);
  EXPECT_EQ(load_extraction_fixtures(dir / "syn/fixtures.jsonl").size(), 6u);
  EXPECT_EQ(load_annotations(dir / "syn/annotations.csv").size(), 3u);
}

TEST(CliScore, MissingCorpusIsConfigError) {
  RunConfig config;
  config.corpus = "/nonexistent/corpus.jsonl";
  config.out = "/nonexistent/out.jsonl";
  std::ostringstream log;
  EXPECT_EQ(cmd_score(config, log), 2);
}
