#pragma once

// Objective clinical accuracy (directional scores combined by harmonic
// mean), penalized subjective expressiveness on a discrete grid, and the
// alpha-weighted GEMA aggregate with its structured explanation.

#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gema/core_model.hpp"
#include "gema/error.hpp"
#include "gema/extraction.hpp"
#include "gema/llm_gateway.hpp"
#include "gema/matching.hpp"
#include "gema/prompts.hpp"

namespace gema {

struct ScoringConfig {
  double alpha = 0.8;
  double lambda_penalty = 0.05;
  PerAspect<double> aspect_weights = PerAspect<double>::filled(1.0 / 3.0);
  PerDimension<double> dimension_weights = PerDimension<double>::filled(0.25);
  std::vector<double> subjective_grid = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
};

inline void validate(const ScoringConfig& c) {
  if (!(c.alpha >= 0.0 && c.alpha <= 1.0)) throw InvalidArgument("alpha must be in [0,1]");
  if (!(c.lambda_penalty > 0.0)) throw InvalidArgument("lambda must be > 0");
  auto check_weights = [](std::span<const double> w, const char* what) {
    double sum = 0.0;
    for (double v : w) {
      if (!(v >= 0.0)) throw InvalidArgument(std::string(what) + " weights must be >= 0");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw InvalidArgument(std::string(what) + " weights must sum to 1");
  };
  check_weights(c.aspect_weights.values, "aspect");
  check_weights(c.dimension_weights.values, "dimension");
  if (c.subjective_grid.empty()) throw InvalidArgument("subjective grid must be non-empty");
  for (std::size_t i = 1; i < c.subjective_grid.size(); ++i)
    if (!(c.subjective_grid[i] > c.subjective_grid[i - 1]))
      throw InvalidArgument("subjective grid must be strictly increasing");
}

// Fraction of target entities carrying `d` that match some source entity.
// Target without the dimension: 1 if the source also lacks it, else 0.
inline double directional_score(const EntitySet& source, const EntitySet& target, Dimension d,
                                const MatchPolicy& policy) {
  std::size_t denominator = 0;
  std::size_t hits = 0;
  for (const auto& t : target.entities) {
    if (!t.has(d)) continue;
    ++denominator;
    for (const auto& s : source.entities) {
      if (entity_match(s, t, d, policy)) {
        ++hits;
        break;
      }
    }
  }
  if (denominator == 0) return source.count_with(d) == 0 ? 1.0 : 0.0;
  return static_cast<double>(hits) / static_cast<double>(denominator);
}

inline double harmonic_mean(double a, double b) {
  if (a + b == 0.0) return 0.0;
  return 2.0 * a * b / (a + b);
}

struct ObjectiveScore {
  double s_obj = 0.0;
  PerDimension<double> per_dimension = PerDimension<double>::filled(0.0);
  PerDimension<double> precision = PerDimension<double>::filled(0.0);  // S(x, x_hat)
  PerDimension<double> recall = PerDimension<double>::filled(0.0);     // S(x_hat, x)
  PerDimension<bool> populated = PerDimension<bool>::filled(false);
};

// Per-dimension harmonic mean of the two directional scores, combined with
// the dimension weights over the dimensions either side carries. Two empty
// sets agree on absence and score 1.
inline ObjectiveScore objective_score(const EntitySet& reference, const EntitySet& candidate,
                                      const MatchPolicy& policy, const ScoringConfig& config) {
  ObjectiveScore out;
  double weighted = 0.0;
  double weight_total = 0.0;
  double plain = 0.0;
  std::size_t populated = 0;
  for (auto d : kDimensions) {
    out.precision[d] = directional_score(reference, candidate, d, policy);
    out.recall[d] = directional_score(candidate, reference, d, policy);
    out.per_dimension[d] = harmonic_mean(out.precision[d], out.recall[d]);
    out.populated[d] = reference.count_with(d) > 0 || candidate.count_with(d) > 0;
    if (!out.populated[d]) continue;
    weighted += config.dimension_weights[d] * out.per_dimension[d];
    weight_total += config.dimension_weights[d];
    plain += out.per_dimension[d];
    ++populated;
  }
  if (populated == 0)
    out.s_obj = 1.0;
  else if (weight_total > 0.0)
    out.s_obj = weighted / weight_total;
  else
    out.s_obj = plain / static_cast<double>(populated);
  return out;
}

// Nearest grid value; exact midpoints go to the higher value.
inline double round_to_grid(double value, std::span<const double> grid) {
  if (grid.empty()) throw InvalidArgument("empty grid");
  double best = grid.front();
  double best_distance = std::abs(value - best);
  constexpr double kTieEpsilon = 1e-12;
  for (double g : grid.subspan(1)) {
    double distance = std::abs(value - g);
    if (distance < best_distance - kTieEpsilon ||
        (std::abs(distance - best_distance) <= kTieEpsilon && g > best)) {
      best = g;
      best_distance = distance;
    }
  }
  return best;
}

struct SubjectiveScore {
  double s_sub = 0.0;      // rounded to the grid
  double unrounded = 0.0;  // weighted sum before rounding
  PerAspect<double> per_aspect = PerAspect<double>::filled(0.0);
};

inline SubjectiveScore subjective_score_detailed(const PerAspect<std::size_t>& error_counts,
                                                 const ScoringConfig& config) {
  SubjectiveScore out;
  for (auto a : kAspects) {
    double penalized =
        std::max(0.0, 1.0 - config.lambda_penalty * static_cast<double>(error_counts[a]));
    out.per_aspect[a] = penalized;
    out.unrounded += config.aspect_weights[a] * penalized;
  }
  out.s_sub = round_to_grid(out.unrounded, config.subjective_grid);
  return out;
}

inline double subjective_score(const PerAspect<std::size_t>& error_counts,
                               const ScoringConfig& config) {
  return subjective_score_detailed(error_counts, config).s_sub;
}

inline double gema_score(double s_obj, double s_sub, const ScoringConfig& config) {
  if (s_obj < 0.0 || s_obj > 1.0 || s_sub < 0.0 || s_sub > 1.0)
    throw InvalidArgument("gema_score inputs must be in [0,1]");
  if (config.alpha == 1.0) return s_obj;
  return config.alpha * s_obj + (1.0 - config.alpha) * s_sub;
}

// Weighted sum over K objective and I subjective categories.
inline double overall_score(std::span<const double> objective_scores,
                            std::span<const double> objective_weights,
                            std::span<const double> subjective_scores,
                            std::span<const double> subjective_weights) {
  if (objective_scores.size() != objective_weights.size() ||
      subjective_scores.size() != subjective_weights.size())
    throw InvalidArgument("score and weight counts differ");
  double total = 0.0;
  for (std::size_t i = 0; i < objective_scores.size(); ++i)
    total += objective_weights[i] * objective_scores[i];
  for (std::size_t i = 0; i < subjective_scores.size(); ++i)
    total += subjective_weights[i] * subjective_scores[i];
  return total;
}

// ---------------------------------------------------------------------------
// Subjective error detection

class SubjectiveJudge {
 public:
  virtual ~SubjectiveJudge() = default;
  virtual std::vector<std::string> issues(std::string_view report_text, Aspect aspect) = 0;
  virtual std::string template_id() const = 0;
};

// Parses a JSON issue list (strings or objects) out of an LLM response.
inline std::vector<std::string> parse_issue_list(std::string_view completion_text) {
  auto body = detail::strip_fences(completion_text);
  auto accept = [](const nlohmann::json& j) -> std::optional<nlohmann::json> {
    if (j.is_array()) return j;
    if (j.is_object() && j.contains("issues") && j["issues"].is_array()) return j["issues"];
    return std::nullopt;
  };
  auto list = detail::first_json(body, accept);
  if (!list && body.size() != completion_text.size())
    list = detail::first_json(completion_text, accept);
  if (!list) throw ExtractionParseError(std::string(completion_text));
  std::vector<std::string> out;
  for (const auto& item : *list) {
    if (item.is_string())
      out.push_back(item.get<std::string>());
    else if (item.is_object() && item.contains("issue") && item["issue"].is_string())
      out.push_back(item["issue"].get<std::string>());
    else if (item.is_object() && item.contains("description") && item["description"].is_string())
      out.push_back(item["description"].get<std::string>());
    else
      out.push_back(item.dump());
  }
  return out;
}

inline PromptRequest build_subjective_prompt(std::string_view report_text, Aspect aspect,
                                             const DecodingConfig& decoding = {}) {
  const auto& t = default_subjective_template(aspect);
  return PromptRequest{t.system_prompt, render_template(t, report_text), decoding};
}

class LlmSubjectiveJudge : public SubjectiveJudge {
 public:
  explicit LlmSubjectiveJudge(Gateway& gateway, DecodingConfig decoding = {})
      : gateway_(gateway), decoding_(std::move(decoding)) {}

  std::vector<std::string> issues(std::string_view report_text, Aspect aspect) override {
    auto completion = gateway_.complete(build_subjective_prompt(report_text, aspect, decoding_));
    return parse_issue_list(completion.text);
  }
  std::string template_id() const override { return "gema-subjective/v1"; }

 private:
  Gateway& gateway_;
  DecodingConfig decoding_;
};

namespace detail {

inline std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80 || c == '\'') {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == '.' || c == '!' || c == '?' || c == '\n') {
      if (!normalize_text(cur).empty()) out.push_back(normalize_text(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!normalize_text(cur).empty()) out.push_back(normalize_text(cur));
  return out;
}

}  // namespace detail

// Deterministic offline stand-in for the subjective agent. Duplicated
// adjacent words (fluency), sentences lacking any verb from a closed list
// (grammar; sentences opening with a negation are exempt) and colloquial
// terms that have a standard radiology equivalent (terminology).
class RuleBasedSubjectiveJudge : public SubjectiveJudge {
 public:
  std::vector<std::string> issues(std::string_view report_text, Aspect aspect) override {
    switch (aspect) {
      case Aspect::fluency: return fluency_issues(report_text);
      case Aspect::grammar: return grammar_issues(report_text);
      case Aspect::terminology: break;
    }
    return terminology_issues(report_text);
  }
  std::string template_id() const override { return "rule-based/v1"; }

  static std::vector<std::string> fluency_issues(std::string_view text) {
    std::vector<std::string> out;
    auto tokens = detail::word_tokens(text);
    for (std::size_t i = 1; i < tokens.size(); ++i)
      if (tokens[i] == tokens[i - 1]) out.push_back("repeated word '" + tokens[i] + "'");
    return out;
  }

  static std::vector<std::string> grammar_issues(std::string_view text) {
    static const std::set<std::string> verbs = {
        "is",         "are",       "was",        "were",     "be",         "been",
        "has",        "have",      "had",        "shows",    "show",       "showed",
        "demonstrates", "demonstrate", "demonstrated", "reveals", "revealed", "seen",
        "noted",      "identified", "appears",   "appear",   "remains",    "remain",
        "persists",   "persist",   "measures",   "measure",  "suggests",   "suggest",
        "represents", "represent", "involves",   "involve",  "extends",    "extend",
        "resolved",   "improved",  "worsened",   "increased", "decreased", "unchanged"};
    std::vector<std::string> out;
    for (const auto& sentence : detail::split_sentences(text)) {
      auto tokens = detail::word_tokens(sentence);
      if (tokens.empty()) continue;
      if (tokens.front() == "no" || tokens.front() == "without") continue;
      bool has_verb = false;
      for (const auto& t : tokens) has_verb = has_verb || verbs.count(t) > 0;
      if (!has_verb) out.push_back("sentence without a verb: '" + sentence + "'");
    }
    return out;
  }

  static const std::vector<std::pair<std::string, std::string>>& colloquial_terms() {
    static const std::vector<std::pair<std::string, std::string>> terms = {
        {"big heart", "cardiomegaly"},
        {"water on the lung", "pleural effusion"},
        {"water on the lungs", "pleural effusion"},
        {"fluid in the lungs", "pulmonary edema"},
        {"collapsed lung", "pneumothorax"},
        {"broken rib", "rib fracture"},
        {"lung spot", "pulmonary nodule"},
        {"shadow", "opacity"},
        {"xray", "radiograph"},
        {"heart attack", "myocardial infarction"},
        {"windpipe", "trachea"},
        {"breastbone", "sternum"}};
    return terms;
  }

  static std::vector<std::string> terminology_issues(std::string_view text) {
    std::vector<std::string> out;
    std::string padded;
    for (const auto& t : detail::word_tokens(text)) padded += " " + t;
    padded += " ";
    for (const auto& [term, preferred] : colloquial_terms()) {
      std::string needle = " " + term + " ";
      for (auto pos = padded.find(needle); pos != std::string::npos;
           pos = padded.find(needle, pos + 1))
        out.push_back("non-standard term '" + term + "' (use '" + preferred + "')");
    }
    return out;
  }
};

inline std::size_t count_subjective_errors(std::string_view report_text, Aspect aspect,
                                           SubjectiveJudge& judge) {
  return judge.issues(report_text, aspect).size();
}

inline std::size_t count_subjective_errors(std::string_view report_text, Aspect aspect,
                                           Gateway& gateway, const DecodingConfig& decoding = {}) {
  LlmSubjectiveJudge judge(gateway, decoding);
  return count_subjective_errors(report_text, aspect, judge);
}

// ---------------------------------------------------------------------------
// Entity sources

class EntityExtractor {
 public:
  virtual ~EntityExtractor() = default;
  virtual EntitySet extract(const std::string& study_id, std::string_view text, Role role) = 0;
  virtual std::string template_id() const = 0;
};

class LlmEntityExtractor : public EntityExtractor {
 public:
  explicit LlmEntityExtractor(Gateway& gateway,
                              ExtractionPromptTemplate tmpl = default_extraction_template(),
                              DecodingConfig decoding = {})
      : gateway_(gateway), template_(std::move(tmpl)), decoding_(std::move(decoding)) {}

  EntitySet extract(const std::string&, std::string_view text, Role role) override {
    return extract_entities(text, gateway_, template_, decoding_, role);
  }
  std::string template_id() const override { return template_.template_id; }

 private:
  Gateway& gateway_;
  ExtractionPromptTemplate template_;
  DecodingConfig decoding_;
};

using FixtureKey = std::pair<std::string, Role>;
using ExtractionFixtures = std::map<FixtureKey, EntitySet>;

// Serves pre-structured entity sets (offline mode).
class FixtureEntityExtractor : public EntityExtractor {
 public:
  explicit FixtureEntityExtractor(ExtractionFixtures fixtures)
      : fixtures_(std::move(fixtures)) {}

  EntitySet extract(const std::string& study_id, std::string_view, Role role) override {
    auto it = fixtures_.find({study_id, role});
    if (it == fixtures_.end())
      throw FixtureMissingError("no extraction fixture for " + study_id + "/" +
                                std::string(to_string(role)));
    return it->second;
  }
  std::string template_id() const override { return "offline-fixtures"; }

 private:
  ExtractionFixtures fixtures_;
};

// ---------------------------------------------------------------------------
// Explanation

inline std::string describe(const ClinicalEntity& e) {
  std::string out = e.disease;
  std::vector<std::string> attrs;
  if (e.severity) attrs.push_back("severity=" + *e.severity);
  if (e.location) attrs.push_back("location=" + *e.location);
  if (e.uncertainty) attrs.push_back("uncertainty=" + *e.uncertainty);
  if (!attrs.empty()) {
    out += " (";
    for (std::size_t i = 0; i < attrs.size(); ++i) out += (i ? ", " : "") + attrs[i];
    out += ")";
  }
  return out;
}

inline std::string format_score(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

inline Explanation build_explanation(const EntitySet& reference, const EntitySet& candidate,
                                     const MatchResult& match, const ObjectiveScore& objective,
                                     PerAspect<std::vector<std::string>> subjective_log) {
  Explanation ex;
  for (auto j : match.unmatched_candidate) ex.false_predictions.push_back(candidate.entities[j]);
  for (auto i : match.unmatched_reference) ex.omissions.push_back(reference.entities[i]);
  for (auto d : kDimensions) {
    std::ostringstream note;
    if (!objective.populated[d]) {
      note << "not reported in either report";
      ex.per_dimension_notes[d] = note.str();
      continue;
    }
    const auto& c = match.per_dimension[d];
    note << "tp=" << c.tp << " fp=" << c.fp << " fn=" << c.fn
         << "; precision=" << format_score(objective.precision[d])
         << " recall=" << format_score(objective.recall[d])
         << " score=" << format_score(objective.per_dimension[d]);
    if (d != Dimension::disease) {
      for (const auto& p : match.matched_pairs) {
        const auto& r = reference.entities[p.reference_index];
        const auto& g = candidate.entities[p.candidate_index];
        if (p.agrees[d]) continue;
        if (!r.has(d) && !g.has(d)) continue;
        note << "; " << r.disease << ": reference " << to_string(d) << " '"
             << (r.has(d) ? std::string(r.value(d)) : "-") << "' vs candidate '"
             << (g.has(d) ? std::string(g.value(d)) : "-") << "'";
      }
    } else {
      if (!ex.omissions.empty()) note << "; omitted " << ex.omissions.size();
      if (!ex.false_predictions.empty())
        note << "; falsely predicted " << ex.false_predictions.size();
    }
    ex.per_dimension_notes[d] = note.str();
  }
  ex.subjective_error_log = std::move(subjective_log);
  return ex;
}

inline std::string render_explanation_text(const ScoreBreakdown& b) {
  std::ostringstream out;
  out << "Study " << b.study_id << "\n";
  out << "  GEMA-Score " << format_score(b.gema) << "  (objective " << format_score(b.s_obj)
      << ", subjective " << format_score(b.s_sub) << ")\n";
  out << "  Objective clinical accuracy\n";
  for (auto d : kDimensions)
    out << "    " << to_string(d) << ": " << format_score(b.s_obj_per_dimension[d]) << "  "
        << b.explanation.per_dimension_notes[d] << "\n";
  out << "  Omissions (" << b.explanation.omissions.size() << ")\n";
  for (const auto& e : b.explanation.omissions) out << "    - " << describe(e) << "\n";
  out << "  False predictions (" << b.explanation.false_predictions.size() << ")\n";
  for (const auto& e : b.explanation.false_predictions) out << "    - " << describe(e) << "\n";
  out << "  Subjective expressiveness\n";
  for (auto a : kAspects) {
    const auto& log = b.explanation.subjective_error_log[a];
    out << "    " << to_string(a) << ": " << format_score(b.s_sub_per_aspect[a]) << " ("
        << log.size() << " issue" << (log.size() == 1 ? "" : "s") << ")\n";
    for (const auto& issue : log) out << "      - " << issue << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Pipeline

// Extract both sides, match, score objectively and subjectively, aggregate.
inline ScoreBreakdown score_pair(const ReportPair& pair, EntityExtractor& extractor,
                                 SubjectiveJudge& judge, const MatchPolicy& policy,
                                 const ScoringConfig& config) {
  try {
    validate_report_pair(pair);
    auto reference = extractor.extract(pair.study_id, pair.reference_text, Role::reference);
    auto candidate = extractor.extract(pair.study_id, pair.candidate_text, Role::candidate);
    reference.source = Role::reference;
    candidate.source = Role::candidate;

    auto match = match_entities(reference, candidate, policy);
    auto objective = objective_score(reference, candidate, policy, config);

    PerAspect<std::vector<std::string>> log;
    PerAspect<std::size_t> counts = PerAspect<std::size_t>::filled(0);
    for (auto a : kAspects) {
      log[a] = judge.issues(pair.candidate_text, a);
      counts[a] = log[a].size();
    }
    auto subjective = subjective_score_detailed(counts, config);

    ScoreBreakdown b;
    b.study_id = pair.study_id;
    b.s_obj_per_dimension = objective.per_dimension;
    b.s_obj = objective.s_obj;
    b.s_sub_per_aspect = subjective.per_aspect;
    b.s_sub = subjective.s_sub;
    b.gema = gema_score(b.s_obj, b.s_sub, config);
    b.explanation = build_explanation(reference, candidate, match, objective, std::move(log));
    b.st_gt = match.st_gt;
    b.st_pred = match.st_pred;
    b.counts = match.per_dimension;
    b.structural_errors = reference.structural_error_count + candidate.structural_error_count;
    b.extraction_template_id = extractor.template_id();
    b.subjective_template_id = judge.template_id();
    return b;
  } catch (const StudyError&) {
    throw;
  } catch (const Error& e) {
    throw StudyError(pair.study_id, e.what());
  } catch (const nlohmann::json::exception& e) {
    throw StudyError(pair.study_id, e.what());
  }
}

inline ScoreBreakdown score_pair(const ReportPair& pair, const MatchPolicy& policy,
                                 const ScoringConfig& config, Gateway& gateway,
                                 const DecodingConfig& decoding = {}) {
  LlmEntityExtractor extractor(gateway, default_extraction_template(), decoding);
  LlmSubjectiveJudge judge(gateway, decoding);
  return score_pair(pair, extractor, judge, policy, config);
}

}  // namespace gema
