#pragma once

// Entity extraction agent: prompt construction, tolerant parsing of LLM
// output into validated entity sets, and batch extraction over a gateway.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gema/core_model.hpp"
#include "gema/error.hpp"
#include "gema/llm_gateway.hpp"
#include "gema/parallel.hpp"
#include "gema/prompts.hpp"

namespace gema {

inline PromptRequest build_extraction_prompt(
    std::string_view report_text,
    const ExtractionPromptTemplate& tmpl = default_extraction_template(),
    const DecodingConfig& decoding = {}) {
  return PromptRequest{tmpl.system_prompt, render_template(tmpl, report_text), decoding};
}

namespace detail {

// Content between the first opening fence and the next closing fence, when
// the text contains a markdown code fence; the text itself otherwise.
inline std::string_view strip_fences(std::string_view text) {
  auto open = text.find("```");
  if (open == std::string_view::npos) return text;
  auto body_start = text.find('\n', open);
  if (body_start == std::string_view::npos) return text.substr(open + 3);
  ++body_start;
  auto close = text.find("```", body_start);
  if (close == std::string_view::npos) return text.substr(body_start);
  return text.substr(body_start, close - body_start);
}

// End index (exclusive) of the balanced JSON value starting at `start`, or
// npos. String literals are skipped so brackets inside them do not count.
inline std::size_t balanced_end(std::string_view s, std::size_t start) {
  std::vector<char> stack;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = start; i < s.size(); ++i) {
    char c = s[i];
    if (in_string) {
      if (escaped)
        escaped = false;
      else if (c == '\\')
        escaped = true;
      else if (c == '"')
        in_string = false;
      continue;
    }
    switch (c) {
      case '"': in_string = true; break;
      case '[': stack.push_back(']'); break;
      case '{': stack.push_back('}'); break;
      case ']':
      case '}':
        if (stack.empty() || stack.back() != c) return std::string_view::npos;
        stack.pop_back();
        if (stack.empty()) return i + 1;
        break;
      default: break;
    }
  }
  return std::string_view::npos;
}

inline std::optional<nlohmann::json> entity_array_from(const nlohmann::json& j) {
  if (j.is_array()) return j;
  if (j.is_object()) {
    if (j.contains("entities") && j["entities"].is_array()) return j["entities"];
    if (j.contains("findings") && j["findings"].is_array()) return j["findings"];
    if (j.contains("disease")) return nlohmann::json::array({j});
  }
  return std::nullopt;
}

// First balanced top-level JSON array or object in `text` that parses and
// satisfies `accept`.
template <typename Accept>
std::optional<nlohmann::json> first_json(std::string_view text, Accept accept) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '[' && text[i] != '{') continue;
    auto end = balanced_end(text, i);
    if (end == std::string_view::npos) continue;
    auto j = nlohmann::json::parse(text.substr(i, end - i), nullptr, false);
    if (j.is_discarded()) continue;
    if (auto accepted = accept(j)) return accepted;
    i = end - 1;
  }
  return std::nullopt;
}

inline RawEntity raw_entity_from(const nlohmann::json& j) {
  RawEntity raw;
  if (!j.is_object()) {
    raw.well_formed = false;
    return raw;
  }
  auto field = [&](const char* key, std::optional<std::string>& out) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return;
    if (!it->is_string()) {
      raw.well_formed = false;
      return;
    }
    out = it->get<std::string>();
  };
  field("disease", raw.disease);
  field("location", raw.location);
  field("severity", raw.severity);
  field("uncertainty", raw.uncertainty);
  field("raw_span", raw.raw_span);
  return raw;
}

}  // namespace detail

inline std::vector<RawEntity> raw_entities_from_json(const nlohmann::json& array) {
  std::vector<RawEntity> raw;
  for (const auto& item : array) raw.push_back(detail::raw_entity_from(item));
  return raw;
}

inline nlohmann::json entity_to_json(const ClinicalEntity& e) {
  nlohmann::json j = {{"disease", e.disease}};
  if (e.location) j["location"] = *e.location;
  if (e.severity) j["severity"] = *e.severity;
  if (e.uncertainty) j["uncertainty"] = *e.uncertainty;
  if (e.raw_span) j["raw_span"] = *e.raw_span;
  return j;
}

inline nlohmann::json entities_to_json(const std::vector<ClinicalEntity>& entities) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : entities) out.push_back(entity_to_json(e));
  return out;
}

inline std::string serialize_entity_set(const EntitySet& set) {
  return entities_to_json(set.entities).dump();
}

// Tolerates markdown fences and surrounding prose; validation of individual
// records is delegated to validate_entity_set.
inline EntitySet parse_extraction_response(std::string_view completion_text,
                                           Role source = Role::candidate) {
  auto body = detail::strip_fences(completion_text);
  auto array = detail::first_json(body, detail::entity_array_from);
  if (!array && body.size() != completion_text.size())
    array = detail::first_json(completion_text, detail::entity_array_from);
  if (!array) throw ExtractionParseError(std::string(completion_text));
  return validate_entity_set(raw_entities_from_json(*array), source);
}

struct ExtractionOutcome {
  EntitySet entities;
  bool truncated = false;
  bool cache_hit = false;
};

inline ExtractionOutcome extract_entities_detailed(
    std::string_view report_text, Role role, Gateway& gateway,
    const ExtractionPromptTemplate& tmpl = default_extraction_template(),
    const DecodingConfig& decoding = {}) {
  auto completion = gateway.complete(build_extraction_prompt(report_text, tmpl, decoding));
  return {parse_extraction_response(completion.text, role), completion.truncated,
          completion.cache_hit};
}

inline EntitySet extract_entities(std::string_view report_text, Gateway& gateway,
                                  const ExtractionPromptTemplate& tmpl =
                                      default_extraction_template(),
                                  const DecodingConfig& decoding = {},
                                  Role role = Role::candidate) {
  return extract_entities_detailed(report_text, role, gateway, tmpl, decoding).entities;
}

// Fans out over the gateway's parallelism bound; results are in input order.
inline std::vector<Outcome<EntitySet>> extract_batch(
    const std::vector<std::string>& reports, Gateway& gateway,
    const ExtractionPromptTemplate& tmpl = default_extraction_template(),
    const DecodingConfig& decoding = {}, Role role = Role::candidate) {
  return parallel_map(reports, gateway.parallelism(), [&](const std::string& text) {
    return extract_entities(text, gateway, tmpl, decoding, role);
  });
}

}  // namespace gema
