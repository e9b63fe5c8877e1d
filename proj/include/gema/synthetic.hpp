#pragma once

// Seeded generator of report pairs with a known number of injected clinical
// errors (omission, false finding, wrong location, wrong severity). Correct
// findings in the candidate are paraphrased through lexicon synonyms, which
// overlap metrics see as differences and the entity matcher does not.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "gema/core_model.hpp"
#include "gema/corpus_io.hpp"
#include "gema/extraction.hpp"
#include "gema/llm_gateway.hpp"
#include "gema/prompts.hpp"
#include "gema/scoring.hpp"

namespace gema::synthetic {

struct Term {
  std::string canonical;
  std::vector<std::string> variants;  // lexicon-equivalent surface forms
};

struct GeneratorConfig {
  std::uint64_t seed = 7;
  std::size_t study_count = 50;
  std::size_t findings_per_report = 10;
  std::size_t max_errors = 8;
  double synonym_rate = 0.5;  // chance a correct term is paraphrased
};

struct SyntheticCorpus {
  std::vector<ReportPair> pairs;
  ExtractionFixtures fixtures;
  std::vector<AnnotationRecord> annotations;
  std::map<std::string, std::size_t> injected_errors;
};

inline const std::vector<Term>& disease_terms() {
  static const std::vector<Term> terms = {
      {"opacity", {"infiltrate", "opacification", "airspace disease"}},
      {"pleural effusion", {"effusion", "pleural fluid"}},
      {"cardiomegaly", {"enlarged cardiac silhouette", "cardiac enlargement"}},
      {"atelectasis", {"atelectatic change", "subsegmental collapse"}},
      {"pneumothorax", {"ptx"}},
      {"pulmonary edema", {"pulmonary oedema", "interstitial edema"}},
      {"consolidation", {"airspace consolidation"}},
      {"nodule", {"nodular opacity"}},
      {"emphysema", {"hyperinflation"}},
      {"fracture", {"cortical break"}},
      {"hiatal hernia", {"hiatus hernia"}},
      {"granuloma", {}},
      {"calcification", {}},
      {"bronchiectasis", {}},
      {"lymphadenopathy", {}},
      {"mass", {}},
      {"scarring", {}},
      {"pleural thickening", {}}};
  return terms;
}

inline const std::vector<Term>& location_terms() {
  static const std::vector<Term> terms = {{"left lower lobe", {"lll", "left base"}},
                                          {"right lower lobe", {"rll", "right base"}},
                                          {"left upper lobe", {"lul"}},
                                          {"right upper lobe", {"rul"}},
                                          {"right middle lobe", {"rml"}}};
  return terms;
}

inline const std::vector<Term>& severity_terms() {
  static const std::vector<Term> terms = {{"mild", {"minimal", "slight"}},
                                          {"moderate", {"moderate-sized"}},
                                          {"severe", {"marked", "extensive"}}};
  return terms;
}

inline const std::vector<Term>& uncertainty_terms() {
  static const std::vector<Term> terms = {{"possible", {"questionable"}},
                                          {"probable", {"likely", "suspected"}},
                                          {"definite", {"certain"}}};
  return terms;
}

enum class ErrorType { omission, false_finding, wrong_location, wrong_severity };

inline std::string_view error_label(ErrorType t) {
  switch (t) {
    case ErrorType::omission: return "missed_finding";
    case ErrorType::false_finding: return "false_positive_finding";
    case ErrorType::wrong_location: return "wrong_location";
    case ErrorType::wrong_severity: break;
  }
  return "wrong_severity";
}

namespace detail {

struct Finding {
  std::size_t disease = 0;
  std::size_t location = 0;
  std::size_t severity = 0;
  std::size_t uncertainty = 0;
};

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 engine_;
};

inline std::string surface(const Term& t, bool paraphrase, Rng& rng) {
  if (!paraphrase || t.variants.empty()) return t.canonical;
  return t.variants[rng.below(t.variants.size())];
}

struct Rendered {
  std::string sentence;
  ClinicalEntity entity;
};

inline Rendered render(const Finding& f, bool paraphrase, double synonym_rate, Rng& rng) {
  auto pick = [&](const Term& t) {
    return surface(t, paraphrase && rng.unit() < synonym_rate, rng);
  };
  Rendered r;
  r.entity.disease = pick(disease_terms()[f.disease]);
  r.entity.location = pick(location_terms()[f.location]);
  r.entity.severity = pick(severity_terms()[f.severity]);
  r.entity.uncertainty = pick(uncertainty_terms()[f.uncertainty]);
  r.sentence = "There is " + *r.entity.uncertainty + " " + *r.entity.severity + " " +
               r.entity.disease + " in the " + *r.entity.location + ".";
  r.sentence[0] = 'T';
  return r;
}

}  // namespace detail

inline SyntheticCorpus generate(const GeneratorConfig& config = {}) {
  using detail::Finding;
  detail::Rng rng(config.seed);
  SyntheticCorpus out;
  const auto& diseases = disease_terms();
  const std::size_t m = config.findings_per_report;
  if (m + config.max_errors > diseases.size() || config.max_errors > m)
    throw InvalidArgument("not enough distinct findings for the requested error budget");

  for (std::size_t s = 0; s < config.study_count; ++s) {
    char id[32];
    std::snprintf(id, sizeof id, "syn-%04zu", s);
    std::string study_id = id;

    std::vector<std::size_t> disease_order(diseases.size());
    for (std::size_t i = 0; i < disease_order.size(); ++i) disease_order[i] = i;
    for (std::size_t i = disease_order.size(); i > 1; --i)
      std::swap(disease_order[i - 1], disease_order[rng.below(i)]);

    std::vector<Finding> reference;
    for (std::size_t i = 0; i < m; ++i)
      reference.push_back({disease_order[i], rng.below(location_terms().size()),
                           rng.below(severity_terms().size()),
                           rng.below(uncertainty_terms().size())});

    std::size_t k = rng.below(config.max_errors + 1);
    std::vector<std::size_t> targets(m);
    for (std::size_t i = 0; i < m; ++i) targets[i] = i;
    for (std::size_t i = m; i > 1; --i) std::swap(targets[i - 1], targets[rng.below(i)]);

    std::vector<Finding> candidate = reference;
    std::vector<bool> omitted(m, false);
    std::vector<Finding> false_findings;
    AnnotationRecord annotation;
    annotation.study_id = study_id;
    annotation.rater_id = "synthetic";
    for (auto label : kErrorTypes) annotation.per_type_counts[std::string(label)] = 0;
    std::size_t next_unused_disease = m;
    for (std::size_t e = 0; e < k; ++e) {
      auto type = static_cast<ErrorType>(rng.below(4));
      std::size_t target = targets[e];
      switch (type) {
        case ErrorType::omission: omitted[target] = true; break;
        case ErrorType::false_finding:
          false_findings.push_back({disease_order[next_unused_disease++],
                                    rng.below(location_terms().size()),
                                    rng.below(severity_terms().size()),
                                    rng.below(uncertainty_terms().size())});
          break;
        case ErrorType::wrong_location:
          candidate[target].location = (candidate[target].location + 1 +
                                        rng.below(location_terms().size() - 1)) %
                                       location_terms().size();
          break;
        case ErrorType::wrong_severity:
          candidate[target].severity = (candidate[target].severity + 1 +
                                        rng.below(severity_terms().size() - 1)) %
                                       severity_terms().size();
          break;
      }
      ++annotation.per_type_counts[std::string(error_label(type))];
    }
    annotation.significant_errors = static_cast<std::int64_t>(k);
    annotation.insignificant_errors = 0;

    std::string reference_text, candidate_text;
    EntitySet ref_set, cand_set;
    ref_set.source = Role::reference;
    cand_set.source = Role::candidate;
    for (const auto& f : reference) {
      auto r = detail::render(f, false, 0.0, rng);
      reference_text += (reference_text.empty() ? "" : " ") + r.sentence;
      ref_set.entities.push_back(r.entity);
    }
    std::vector<detail::Rendered> cand_rendered;
    for (std::size_t i = 0; i < m; ++i)
      if (!omitted[i]) cand_rendered.push_back(detail::render(candidate[i], true, config.synonym_rate, rng));
    for (const auto& f : false_findings)
      cand_rendered.push_back(detail::render(f, true, config.synonym_rate, rng));
    for (const auto& r : cand_rendered) {
      candidate_text += (candidate_text.empty() ? "" : " ") + r.sentence;
      cand_set.entities.push_back(r.entity);
    }

    out.pairs.push_back({study_id, Modality::xray, reference_text, candidate_text});
    out.fixtures[{study_id, Role::reference}] =
        validate_entity_set([&] {
          std::vector<RawEntity> raw;
          for (const auto& e : ref_set.entities) raw.push_back(to_raw(e));
          return raw;
        }(), Role::reference);
    out.fixtures[{study_id, Role::candidate}] =
        validate_entity_set([&] {
          std::vector<RawEntity> raw;
          for (const auto& e : cand_set.entities) raw.push_back(to_raw(e));
          return raw;
        }(), Role::candidate);
    out.annotations.push_back(std::move(annotation));
    out.injected_errors[study_id] = k;
  }
  return out;
}

// Mock-backend fixtures answering every prompt the LLM pipeline sends for
// this corpus: extraction for both sides, and an empty issue list per aspect.
inline void register_mock_responses(const SyntheticCorpus& corpus, MockBackend& mock,
                                    const DecodingConfig& decoding = {}) {
  for (const auto& p : corpus.pairs) {
    mock.add(build_extraction_prompt(p.reference_text, default_extraction_template(), decoding),
             serialize_entity_set(corpus.fixtures.at({p.study_id, Role::reference})));
    mock.add(build_extraction_prompt(p.candidate_text, default_extraction_template(), decoding),
             serialize_entity_set(corpus.fixtures.at({p.study_id, Role::candidate})));
    for (auto a : kAspects) mock.add(build_subjective_prompt(p.candidate_text, a, decoding), "[]");
  }
}

inline void write_mock_fixtures(const SyntheticCorpus& corpus, const std::filesystem::path& dir,
                                const DecodingConfig& decoding = {}) {
  for (const auto& p : corpus.pairs) {
    MockBackend::write_fixture(
        dir, build_extraction_prompt(p.reference_text, default_extraction_template(), decoding),
        serialize_entity_set(corpus.fixtures.at({p.study_id, Role::reference})));
    MockBackend::write_fixture(
        dir, build_extraction_prompt(p.candidate_text, default_extraction_template(), decoding),
        serialize_entity_set(corpus.fixtures.at({p.study_id, Role::candidate})));
    for (auto a : kAspects)
      MockBackend::write_fixture(dir, build_subjective_prompt(p.candidate_text, a, decoding), "[]");
  }
}

struct WrittenCorpus {
  std::filesystem::path corpus;
  std::filesystem::path fixtures;
  std::filesystem::path annotations;
  std::filesystem::path mock_dir;
};

inline WrittenCorpus write(const SyntheticCorpus& corpus, const std::filesystem::path& dir,
                           const DecodingConfig& decoding = {}) {
  std::filesystem::create_directories(dir);
  WrittenCorpus w{dir / "corpus.jsonl", dir / "fixtures.jsonl", dir / "annotations.csv",
                  dir / "mock"};
  write_corpus(corpus.pairs, w.corpus);
  write_extraction_fixtures(corpus.fixtures, w.fixtures);
  write_annotations(corpus.annotations, w.annotations);
  write_mock_fixtures(corpus, w.mock_dir, decoding);
  return w;
}

}  // namespace gema::synthetic
