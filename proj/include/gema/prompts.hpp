#pragma once

// Versioned prompt templates. Bump the template id whenever the wording
// changes; it is recorded in every score record and feeds the cache key.

#include <string>
#include <string_view>

#include "gema/core_model.hpp"
#include "gema/error.hpp"

namespace gema {

inline constexpr std::string_view kReportSlot = "{{report}}";

struct PromptTemplate {
  std::string template_id;
  std::string system_prompt;
  std::string user_prompt_skeleton;  // exactly one {{report}} slot
  std::string expected_schema_version;
};

using ExtractionPromptTemplate = PromptTemplate;

inline std::string render_template(const PromptTemplate& t, std::string_view report) {
  auto pos = t.user_prompt_skeleton.find(kReportSlot);
  if (pos == std::string::npos ||
      t.user_prompt_skeleton.find(kReportSlot, pos + 1) != std::string::npos)
    throw InvalidArgument("template " + t.template_id + " needs exactly one report slot");
  std::string out = t.user_prompt_skeleton.substr(0, pos);
  out.append(report);
  out.append(t.user_prompt_skeleton.substr(pos + kReportSlot.size()));
  return out;
}

inline const ExtractionPromptTemplate& default_extraction_template() {
  static const ExtractionPromptTemplate t{
      "gema-extraction/v1",
      R"(You are a radiology entity extraction agent. You read a radiology report and segment it into fine-grained clinical findings. You answer with JSON only.)",
      R"(Extract every clinical finding from the radiology report below.

For each finding emit one object with these keys:
  "disease"     - the finding or disease entity (required, non-empty string)
  "location"    - the anatomical location, if stated (string or null)
  "severity"    - the severity descriptor, e.g. "mild", "moderate", "severe" (string or null)
  "uncertainty" - the uncertainty descriptor, e.g. "possible", "probable", "definite" (string or null)

Rules:
  - Output a single JSON array of such objects and nothing else.
  - Output [] when the report contains no findings.
  - Copy descriptors as written; do not invent values that are not in the report.

Report:
<<<
{{report}}
>>>)",
      "entity-tuple/1"};
  return t;
}

inline const PromptTemplate& default_subjective_template(Aspect aspect) {
  static const PromptTemplate fluency{
      "gema-subjective-fluency/v1",
      R"(You are a radiology report language reviewer. You answer with JSON only.)",
      R"(Review the radiology report below for FLUENCY problems only: repeated words, broken or run-on sentences, incoherent ordering, unreadable phrasing.

List each distinct problem as one short string. Output a single JSON array of strings and nothing else. Output [] when there are no fluency problems.

Report:
<<<
{{report}}
>>>)",
      "issue-list/1"};
  static const PromptTemplate grammar{
      "gema-subjective-grammar/v1",
      R"(You are a radiology report language reviewer. You answer with JSON only.)",
      R"(Review the radiology report below for GRAMMAR problems only: agreement errors, missing verbs where a full sentence is intended, wrong tense, punctuation errors. Telegraphic radiology style ("No pneumothorax.") is acceptable.

List each distinct problem as one short string. Output a single JSON array of strings and nothing else. Output [] when there are no grammar problems.

Report:
<<<
{{report}}
>>>)",
      "issue-list/1"};
  static const PromptTemplate terminology{
      "gema-subjective-terminology/v1",
      R"(You are a radiology report language reviewer. You answer with JSON only.)",
      R"(Review the radiology report below for TERMINOLOGY problems only: colloquial or non-standard terms where standard radiology terminology exists, misspelled medical terms, ambiguous abbreviations.

List each distinct problem as one short string. Output a single JSON array of strings and nothing else. Output [] when there are no terminology problems.

Report:
<<<
{{report}}
>>>)",
      "issue-list/1"};
  switch (aspect) {
    case Aspect::fluency: return fluency;
    case Aspect::grammar: return grammar;
    case Aspect::terminology: break;
  }
  return terminology;
}

}  // namespace gema
