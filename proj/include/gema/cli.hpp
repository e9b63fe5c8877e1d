#pragma once

// Batch commands behind the `gema` executable. Each returns a process exit
// status: 0 success, 1 evaluation failures (strict mode) or no usable data,
// 2 configuration or I/O errors.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gema/baselines.hpp"
#include "gema/core_model.hpp"
#include "gema/corpus_io.hpp"
#include "gema/error.hpp"
#include "gema/extraction.hpp"
#include "gema/llm_gateway.hpp"
#include "gema/matching.hpp"
#include "gema/parallel.hpp"
#include "gema/scoring.hpp"
#include "gema/stats.hpp"
#include "gema/synthetic.hpp"

namespace gema::cli {

enum class BackendKind { http, mock, offline_fixtures };

inline std::optional<BackendKind> parse_backend(std::string_view s) {
  if (s == "http") return BackendKind::http;
  if (s == "mock") return BackendKind::mock;
  if (s == "offline-fixtures" || s == "offline") return BackendKind::offline_fixtures;
  return std::nullopt;
}

struct RunConfig {
  BackendKind backend = BackendKind::offline_fixtures;
  std::filesystem::path corpus;
  std::filesystem::path fixtures;  // JSONL (offline-fixtures) or directory (mock)
  std::filesystem::path lexicon;
  std::filesystem::path annotations;
  std::filesystem::path scores;
  std::filesystem::path out;
  std::filesystem::path explain;
  std::optional<std::filesystem::path> cache_dir;
  std::optional<double> alpha;
  std::optional<double> lambda;
  std::string model = DecodingConfig{}.model_name;
  int parallelism = 1;
  bool strict = false;
  std::uint64_t seed = 7;
  std::size_t synthetic_studies = 50;
  std::size_t bins = 10;
};

inline void validate(const RunConfig& c) {
  if (c.parallelism < 1) throw InvalidArgument("--parallelism must be positive");
  if ((c.backend == BackendKind::offline_fixtures || c.backend == BackendKind::mock) &&
      c.fixtures.empty())
    throw InvalidArgument("--fixtures is required for the " +
                          std::string(c.backend == BackendKind::mock ? "mock" : "offline-fixtures") +
                          " backend");
}

inline ScoringConfig scoring_config(const RunConfig& c) {
  ScoringConfig s;
  if (c.alpha) s.alpha = *c.alpha;
  if (c.lambda) s.lambda_penalty = *c.lambda;
  gema::validate(s);
  return s;
}

inline MatchPolicy match_policy(const RunConfig& c) {
  MatchPolicy p;
  if (!c.lexicon.empty()) p.synonym_lexicon = SynonymLexicon::from_file(c.lexicon);
  return p;
}

inline DecodingConfig decoding_config(const RunConfig& c) {
  DecodingConfig d;
  d.model_name = c.model;
  return d;
}

// Backend, gateway and the two agents for one command invocation.
class Pipeline {
 public:
  Pipeline(const RunConfig& config, Backend* backend_override = nullptr) {
    validate(config);
    auto decoding = decoding_config(config);
    if (config.backend == BackendKind::offline_fixtures) {
      extractor_ = std::make_unique<FixtureEntityExtractor>(load_extraction_fixtures(config.fixtures));
      judge_ = std::make_unique<RuleBasedSubjectiveJudge>();
      return;
    }
    Backend* backend = backend_override;
    if (!backend) {
      if (config.backend == BackendKind::mock)
        owned_backend_ = std::make_unique<MockBackend>(MockBackend::from_directory(config.fixtures));
      else
        owned_backend_ = std::make_unique<HttpBackend>(HttpBackendConfig::from_env());
      backend = owned_backend_.get();
    }
    auto cache_dir = config.cache_dir;
    if (!cache_dir)
      if (const char* env = std::getenv("GEMA_CACHE_DIR"); env && *env) cache_dir = env;
    gateway_ = std::make_unique<Gateway>(*backend, cache_dir, RetryPolicy{}, config.parallelism);
    extractor_ = std::make_unique<LlmEntityExtractor>(*gateway_, default_extraction_template(), decoding);
    judge_ = std::make_unique<LlmSubjectiveJudge>(*gateway_, decoding);
  }

  EntityExtractor& extractor() { return *extractor_; }
  SubjectiveJudge& judge() { return *judge_; }
  Gateway* gateway() { return gateway_.get(); }

 private:
  std::unique_ptr<Backend> owned_backend_;
  std::unique_ptr<Gateway> gateway_;
  std::unique_ptr<EntityExtractor> extractor_;
  std::unique_ptr<SubjectiveJudge> judge_;
};

inline void remove_quietly(const std::filesystem::path& p) {
  std::error_code ec;
  if (!p.empty()) std::filesystem::remove(p, ec);
}

inline std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline Corpus load_corpus_logged(const RunConfig& config, std::ostream& log) {
  if (config.corpus.empty()) throw InvalidArgument("--corpus is required");
  auto corpus = load_corpus(config.corpus, config.strict);
  for (const auto& e : corpus.errors)
    log << "warning: " << config.corpus.string() << ":" << e.line << ": " << e.message << "\n";
  return corpus;
}

struct ScoredCorpus {
  std::vector<ScoreBreakdown> breakdowns;  // ordered by study_id
  std::vector<std::string> failures;
};

inline ScoredCorpus score_corpus(const std::vector<ReportPair>& pairs, Pipeline& pipeline,
                                 const MatchPolicy& policy, const ScoringConfig& scoring,
                                 int parallelism) {
  auto outcomes = parallel_map(pairs, parallelism, [&](const ReportPair& p) {
    return score_pair(p, pipeline.extractor(), pipeline.judge(), policy, scoring);
  });
  ScoredCorpus out;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (outcomes[i].ok()) {
      out.breakdowns.push_back(*outcomes[i].value);
      continue;
    }
    try {
      std::rethrow_exception(outcomes[i].error);
    } catch (const std::exception& e) {
      out.failures.push_back(e.what());
    }
  }
  std::sort(out.breakdowns.begin(), out.breakdowns.end(),
            [](const auto& a, const auto& b) { return a.study_id < b.study_id; });
  return out;
}

// ---------------------------------------------------------------------------

inline int cmd_extract(const RunConfig& config, std::ostream& log,
                       Backend* backend_override = nullptr) {
  try {
    if (config.out.empty()) throw InvalidArgument("--out is required");
    auto corpus = load_corpus_logged(config, log);
    Pipeline pipeline(config, backend_override);

    struct StudyExtraction {
      EntitySet reference;
      EntitySet candidate;
      std::vector<std::string> failures;
    };
    auto extract_side = [&](const ReportPair& p, Role role, std::vector<std::string>& failures) {
      const auto& text = role == Role::reference ? p.reference_text : p.candidate_text;
      try {
        return pipeline.extractor().extract(p.study_id, text, role);
      } catch (const std::exception& e) {
        failures.push_back(p.study_id + "/" + std::string(to_string(role)) + ": " + e.what());
        EntitySet failed;
        failed.source = role;
        failed.structural_error_count = 1;  // whole-side structural failure
        return failed;
      }
    };
    auto outcomes = parallel_map(corpus.pairs, config.parallelism, [&](const ReportPair& p) {
      StudyExtraction s;
      s.reference = extract_side(p, Role::reference, s.failures);
      s.candidate = extract_side(p, Role::candidate, s.failures);
      return s;
    });

    ExtractionFixtures fixtures;
    std::vector<double> per_study_errors;
    std::size_t failure_count = 0;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      const auto& s = outcomes[i].get();
      for (const auto& f : s.failures) log << "error: " << f << "\n";
      failure_count += s.failures.size();
      const auto& id = corpus.pairs[i].study_id;
      per_study_errors.push_back(
          static_cast<double>(s.reference.structural_error_count + s.candidate.structural_error_count));
      fixtures[{id, Role::reference}] = s.reference;
      fixtures[{id, Role::candidate}] = s.candidate;
    }
    if (config.strict && failure_count > 0) {
      remove_quietly(config.out);
      log << "extract: " << failure_count << " extraction failure(s) in strict mode; no output written\n";
      return 1;
    }
    auto manifest = write_extraction_fixtures(fixtures, config.out);

    double mean = 0.0, sd = 0.0;
    if (!per_study_errors.empty()) {
      for (double v : per_study_errors) mean += v;
      mean /= static_cast<double>(per_study_errors.size());
      if (per_study_errors.size() > 1) {
        for (double v : per_study_errors) sd += (v - mean) * (v - mean);
        sd = std::sqrt(sd / static_cast<double>(per_study_errors.size() - 1));
      }
    }
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "extract: %zu studies, %zu entity sets, structural errors per study %.3f (%.3f)",
                  corpus.pairs.size(), manifest.record_count, mean, sd);
    log << buf << "\n";
    if (failure_count) log << "extract: " << failure_count << " extraction failure(s)\n";
    return 0;
  } catch (const std::exception& e) {
    remove_quietly(config.out);
    log << "extract: " << e.what() << "\n";
    return 2;
  }
}

inline int cmd_score(const RunConfig& config, std::ostream& log,
                     Backend* backend_override = nullptr) {
  try {
    if (config.out.empty()) throw InvalidArgument("--out is required");
    auto corpus = load_corpus_logged(config, log);
    auto policy = match_policy(config);
    auto scoring = scoring_config(config);
    Pipeline pipeline(config, backend_override);
    auto scored = score_corpus(corpus.pairs, pipeline, policy, scoring, config.parallelism);
    for (const auto& f : scored.failures) log << "error: " << f << "\n";
    if (config.strict && !scored.failures.empty()) {
      remove_quietly(config.out);
      remove_quietly(config.explain);
      log << "score: " << scored.failures.size() << " failure(s) in strict mode; no output written\n";
      return 1;
    }
    write_scores(scored.breakdowns, config.out);
    if (!config.explain.empty()) {
      std::vector<std::string> blocks;
      for (const auto& b : scored.breakdowns) blocks.push_back(render_explanation_text(b));
      write_lines(config.explain, blocks);
    }
    double gema = 0, s_obj = 0, s_sub = 0;
    for (const auto& b : scored.breakdowns) {
      gema += b.gema;
      s_obj += b.s_obj;
      s_sub += b.s_sub;
    }
    double n = std::max<double>(1.0, static_cast<double>(scored.breakdowns.size()));
    log << "score: " << scored.breakdowns.size() << " studies, mean GEMA " << fixed6(gema / n)
        << ", mean S_obj " << fixed6(s_obj / n) << ", mean S_sub " << fixed6(s_sub / n) << "\n";
    if (!scored.failures.empty())
      log << "score: " << scored.failures.size() << " study failure(s) skipped\n";
    return 0;
  } catch (const std::exception& e) {
    remove_quietly(config.out);
    log << "score: " << e.what() << "\n";
    return 2;
  }
}

inline std::vector<ScoreBreakdown> scores_for(const RunConfig& config,
                                              const std::vector<ReportPair>& pairs,
                                              std::ostream& log, Backend* backend_override) {
  if (!config.scores.empty()) return read_scores(config.scores);
  Pipeline pipeline(config, backend_override);
  auto scored = score_corpus(pairs, pipeline, match_policy(config), scoring_config(config),
                             config.parallelism);
  for (const auto& f : scored.failures) log << "error: " << f << "\n";
  if (config.strict && !scored.failures.empty())
    throw Error(std::to_string(scored.failures.size()) + " scoring failure(s) in strict mode");
  return std::move(scored.breakdowns);
}

inline constexpr std::string_view kBenchmarkHeader = "study_id,bleu1,rouge_l,meteor,gema,s_obj,s_sub";

inline int cmd_benchmark(const RunConfig& config, std::ostream& log,
                         Backend* backend_override = nullptr) {
  try {
    if (config.out.empty()) throw InvalidArgument("--out is required");
    auto corpus = load_corpus_logged(config, log);
    auto scores = scores_for(config, corpus.pairs, log, backend_override);
    std::map<std::string, const ScoreBreakdown*> by_id;
    for (const auto& s : scores) by_id[s.study_id] = &s;
    std::vector<const ReportPair*> pairs;
    for (const auto& p : corpus.pairs) pairs.push_back(&p);
    std::sort(pairs.begin(), pairs.end(),
              [](auto a, auto b) { return a->study_id < b->study_id; });
    std::vector<std::string> lines{std::string(kBenchmarkHeader)};
    std::size_t missing = 0;
    for (const auto* p : pairs) {
      auto it = by_id.find(p->study_id);
      if (it == by_id.end()) {
        ++missing;
        continue;
      }
      auto base = baseline_scores(p->reference_text, p->candidate_text);
      const auto& s = *it->second;
      lines.push_back(p->study_id + "," + fixed6(base.bleu1) + "," + fixed6(base.rouge_l) + "," +
                      fixed6(base.meteor) + "," + fixed6(s.gema) + "," + fixed6(s.s_obj) + "," +
                      fixed6(s.s_sub));
    }
    write_lines(config.out, lines);
    log << "benchmark: " << lines.size() - 1 << " rows";
    if (missing) log << ", " << missing << " studies without scores skipped";
    log << "\n";
    if (config.strict && missing) return 1;
    return 0;
  } catch (const std::exception& e) {
    remove_quietly(config.out);
    log << "benchmark: " << e.what() << "\n";
    return 2;
  }
}

// ---------------------------------------------------------------------------
// Correlation against rater annotations

struct CorrelationCell {
  std::string group;
  std::string metric;
  std::string target;
  stats::Method method;
  std::optional<stats::CorrelationResult> result;
  std::string note;  // reason when undefined
  std::size_t n = 0;
};

inline std::vector<CorrelationCell> correlate_scores(
    const std::map<std::string, std::map<std::string, double>>& metrics_by_study,
    const std::vector<AnnotationRecord>& annotations) {
  // group -> study -> target -> value
  using Targets = std::map<std::string, double>;
  std::map<std::string, std::map<std::string, Targets>> groups;
  std::map<std::string, std::map<std::string, std::pair<Targets, int>>> pooled;
  std::set<std::string> target_names = {"significant_errors", "insignificant_errors"};
  for (const auto& a : annotations) {
    if (!metrics_by_study.count(a.study_id)) continue;
    Targets t;
    t["significant_errors"] = static_cast<double>(a.significant_errors);
    t["insignificant_errors"] = static_cast<double>(a.insignificant_errors);
    for (const auto& [type, count] : a.per_type_counts) {
      t["type:" + type] = static_cast<double>(count);
      target_names.insert("type:" + type);
    }
    groups["rater:" + a.rater_id][a.study_id] = t;
    auto& [sum, count] = pooled["mean"][a.study_id];
    for (const auto& [k, v] : t) sum[k] += v;
    ++count;
  }
  if (groups.empty()) throw Error("no overlapping studies between scores and annotations");
  if (groups.size() > 1) {
    for (auto& [study, entry] : pooled["mean"]) {
      Targets t;
      for (const auto& [k, v] : entry.first) t[k] = v / entry.second;
      groups["mean"][study] = t;
    }
  }

  std::set<std::string> metric_names;
  for (const auto& [_, m] : metrics_by_study)
    for (const auto& [name, __] : m) metric_names.insert(name);

  std::vector<CorrelationCell> cells;
  for (const auto& [group, studies] : groups) {
    for (const auto& metric : metric_names) {
      for (const auto& target : target_names) {
        std::vector<double> x, y;
        for (const auto& [study, targets] : studies) {
          auto mt = metrics_by_study.at(study).find(metric);
          auto tt = targets.find(target);
          if (mt == metrics_by_study.at(study).end() || tt == targets.end()) continue;
          x.push_back(mt->second);
          y.push_back(tt->second);
        }
        for (auto method : {stats::Method::kendall_b, stats::Method::spearman, stats::Method::pearson}) {
          CorrelationCell cell{group, metric, target, method, std::nullopt, "", x.size()};
          try {
            cell.result = stats::correlate(stats::PairedSamples(x, y), method);
            if (!cell.result->p_value) cell.note = "p-value undefined (n < 3)";
          } catch (const std::exception& e) {
            cell.note = e.what();
          }
          cells.push_back(std::move(cell));
        }
      }
    }
  }
  return cells;
}

inline nlohmann::json correlation_report_json(const std::vector<CorrelationCell>& cells) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& c : cells) {
    nlohmann::json row = {{"group", c.group},
                          {"metric", c.metric},
                          {"target", c.target},
                          {"method", std::string(stats::to_string(c.method))},
                          {"n", c.n},
                          {"defined", c.result.has_value()}};
    if (c.result) {
      row["coefficient"] = c.result->coefficient;
      row["abs_coefficient"] = std::abs(c.result->coefficient);
      row["p_value"] = c.result->p_value ? nlohmann::json(*c.result->p_value) : nlohmann::json();
    } else {
      row["coefficient"] = nlohmann::json();
      row["abs_coefficient"] = nlohmann::json();
      row["p_value"] = nlohmann::json();
    }
    if (!c.note.empty()) row["note"] = c.note;
    rows.push_back(row);
  }
  return {{"sign_convention",
           "raw coefficients; negative means higher metric values go with fewer errors"},
          {"results", rows}};
}

inline std::string correlation_table(const std::vector<CorrelationCell>& cells) {
  std::ostringstream out;
  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
  };
  std::size_t wg = 5, wm = 6, wt = 6;
  for (const auto& c : cells) {
    wg = std::max(wg, c.group.size());
    wm = std::max(wm, c.metric.size());
    wt = std::max(wt, c.target.size());
  }
  out << pad("group", wg) << "  " << pad("metric", wm) << "  " << pad("target", wt) << "  "
      << pad("method", 9) << "  " << pad("coef", 10) << "  " << pad("|coef|", 8) << "  "
      << "p-value\n";
  for (const auto& c : cells) {
    out << pad(c.group, wg) << "  " << pad(c.metric, wm) << "  " << pad(c.target, wt) << "  "
        << pad(std::string(stats::to_string(c.method)), 9) << "  ";
    if (!c.result) {
      out << pad("undefined", 10) << "  " << pad("-", 8) << "  -\n";
      continue;
    }
    char coef[32], abs_coef[32], p[32];
    std::snprintf(coef, sizeof coef, "%.3f", c.result->coefficient);
    std::snprintf(abs_coef, sizeof abs_coef, "%.3f", std::abs(c.result->coefficient));
    if (c.result->p_value)
      std::snprintf(p, sizeof p, "%.3g", *c.result->p_value);
    else
      std::snprintf(p, sizeof p, "undefined");
    out << pad(coef, 10) << "  " << pad(abs_coef, 8) << "  " << p << "\n";
  }
  return out.str();
}

inline int cmd_correlate(const RunConfig& config, std::ostream& log,
                         Backend* backend_override = nullptr) {
  try {
    if (config.annotations.empty()) throw InvalidArgument("--annotations is required");
    if (config.scores.empty() && config.corpus.empty())
      throw InvalidArgument("--scores or --corpus is required");
    auto annotations = load_annotations(config.annotations);
    std::vector<ReportPair> pairs;
    if (!config.corpus.empty()) pairs = load_corpus_logged(config, log).pairs;
    auto scores = scores_for(config, pairs, log, backend_override);

    std::map<std::string, std::map<std::string, double>> metrics;
    for (const auto& s : scores)
      metrics[s.study_id] = {{"gema", s.gema}, {"s_obj", s.s_obj}, {"s_sub", s.s_sub}};
    for (const auto& p : pairs) {
      auto it = metrics.find(p.study_id);
      if (it == metrics.end()) continue;
      auto base = baseline_scores(p.reference_text, p.candidate_text);
      it->second["bleu1"] = base.bleu1;
      it->second["rouge_l"] = base.rouge_l;
      it->second["meteor"] = base.meteor;
    }
    std::vector<CorrelationCell> cells;
    try {
      cells = correlate_scores(metrics, annotations);
    } catch (const Error& e) {
      log << "correlate: " << e.what() << "\n";
      return 1;
    }
    if (!config.out.empty())
      write_lines(config.out, {correlation_report_json(cells).dump(2)});
    log << correlation_table(cells);
    return 0;
  } catch (const std::exception& e) {
    log << "correlate: " << e.what() << "\n";
    return 2;
  }
}

// ---------------------------------------------------------------------------
// Distributional analysis of match ledgers (histograms + correlation matrix)

inline int cmd_analyze(const RunConfig& config, std::ostream& log) {
  try {
    if (config.scores.empty()) throw InvalidArgument("--scores is required");
    if (config.out.empty()) throw InvalidArgument("--out is required");
    auto scores = read_scores(config.scores);
    if (scores.empty()) {
      log << "analyze: no score records\n";
      return 1;
    }
    std::vector<stats::NamedColumn> columns = {
        {"st_gt", {}}, {"st_pred", {}}, {"TP", {}}, {"FP", {}}, {"FN", {}}};
    for (const auto& s : scores) {
      const auto& c = s.counts[Dimension::disease];
      columns[0].values.push_back(static_cast<double>(s.st_gt));
      columns[1].values.push_back(static_cast<double>(s.st_pred));
      columns[2].values.push_back(static_cast<double>(c.tp));
      columns[3].values.push_back(static_cast<double>(c.fp));
      columns[4].values.push_back(static_cast<double>(c.fn));
    }
    nlohmann::json histograms = nlohmann::json::object();
    for (const auto& c : columns)
      histograms[c.name] = stats::to_json(stats::distribution_summary(c.values, config.bins));
    auto matrix = stats::correlation_matrix(columns, stats::Method::pearson);
    auto json_path = config.out;
    json_path += ".json";
    auto csv_path = config.out;
    csv_path += ".matrix.csv";
    write_lines(json_path, {nlohmann::json{{"histograms", histograms},
                                           {"correlation_matrix", stats::to_json(matrix)}}
                                .dump(2)});
    auto csv = stats::to_csv(matrix);
    if (!csv.empty() && csv.back() == '\n') csv.pop_back();
    write_lines(csv_path, {csv});
    log << "analyze: " << scores.size() << " studies -> " << json_path.string() << ", "
        << csv_path.string() << "\n";
    return 0;
  } catch (const std::exception& e) {
    log << "analyze: " << e.what() << "\n";
    return 2;
  }
}

inline int cmd_synth(const RunConfig& config, std::ostream& log) {
  try {
    if (config.out.empty()) throw InvalidArgument("--out is required");
    synthetic::GeneratorConfig g;
    g.seed = config.seed;
    g.study_count = config.synthetic_studies;
    auto corpus = synthetic::generate(g);
    auto written = synthetic::write(corpus, config.out, decoding_config(config));
    log << "synth: " << corpus.pairs.size() << " studies -> " << written.corpus.string() << ", "
        << written.fixtures.string() << ", " << written.annotations.string() << ", "
        << written.mock_dir.string() << "/\n";
    return 0;
  } catch (const std::exception& e) {
    log << "synth: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace gema::cli
