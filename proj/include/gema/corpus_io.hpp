#pragma once

// File formats: report-pair corpora and score records (JSONL), extraction
// fixtures (JSONL), rater annotation tables (CSV). Output is byte-stable:
// sorted keys, floats fixed at six decimals, LF line endings.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gema/core_model.hpp"
#include "gema/error.hpp"
#include "gema/extraction.hpp"
#include "gema/llm_gateway.hpp"
#include "gema/scoring.hpp"

namespace gema {

inline constexpr std::string_view kFormatVersion = "gema-corpus/1";

// ---------------------------------------------------------------------------
// Canonical JSON

inline void dump_canonical(const nlohmann::json& j, std::string& out) {
  using T = nlohmann::json::value_t;
  switch (j.type()) {
    case T::object: {
      out.push_back('{');
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out.push_back(',');
        first = false;
        out += nlohmann::json(it.key()).dump();
        out.push_back(':');
        dump_canonical(it.value(), out);
      }
      out.push_back('}');
      break;
    }
    case T::array: {
      out.push_back('[');
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out.push_back(',');
        dump_canonical(j[i], out);
      }
      out.push_back(']');
      break;
    }
    case T::number_float: {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.6f", j.get<double>());
      std::string_view s(buf);
      if (s == "-0.000000") s = "0.000000";
      out += s;
      break;
    }
    case T::string:
      out += j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
      break;
    default: out += j.dump(); break;
  }
}

inline std::string dump_canonical(const nlohmann::json& j) {
  std::string out;
  dump_canonical(j, out);
  return out;
}

struct OutputManifest {
  std::filesystem::path path;
  std::size_t record_count = 0;
  std::string sha256;
};

inline OutputManifest write_lines(const std::filesystem::path& path,
                                  const std::vector<std::string>& lines) {
  std::string content;
  for (const auto& l : lines) {
    content += l;
    content.push_back('\n');
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write failed: " + path.string());
  return {path, lines.size(), sha256_hex(content)};
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

// ---------------------------------------------------------------------------
// Corpus

struct CorpusManifest {
  std::string format_version{kFormatVersion};
  std::size_t pair_count = 0;
  std::filesystem::path source_path;
  std::map<Modality, std::size_t> modality_counts;
};

struct LineError {
  std::size_t line = 0;
  std::string message;
};

struct Corpus {
  std::vector<ReportPair> pairs;
  CorpusManifest manifest;
  std::vector<LineError> errors;  // lenient mode only
};

inline ReportPair report_pair_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidArgument("line is not a JSON object");
  auto string_field = [&](const char* key) -> std::string {
    auto it = j.find(key);
    if (it == j.end()) throw InvalidArgument(std::string("missing \"") + key + "\"");
    if (!it->is_string()) throw InvalidArgument(std::string("\"") + key + "\" must be a string");
    return it->get<std::string>();
  };
  ReportPair p;
  p.study_id = string_field("study_id");
  if (j.contains("modality") && !j["modality"].is_null()) {
    if (!j["modality"].is_string()) throw InvalidArgument("\"modality\" must be a string");
    auto m = parse_modality(j["modality"].get<std::string>());
    if (!m) throw InvalidArgument("unknown modality \"" + j["modality"].get<std::string>() + "\"");
    p.modality = *m;
  }
  p.reference_text = string_field("reference");
  p.candidate_text = string_field("candidate");
  validate_report_pair(p);
  return p;
}

inline nlohmann::json to_json(const ReportPair& p) {
  return {{"study_id", p.study_id},
          {"modality", std::string(to_string(p.modality))},
          {"reference", p.reference_text},
          {"candidate", p.candidate_text}};
}

// One ReportPair per JSONL line. Blank lines are skipped. Duplicate study
// ids always fail; other malformed lines fail in strict mode and are
// collected with their line number otherwise.
inline Corpus load_corpus(const std::filesystem::path& path, bool strict = false) {
  Corpus corpus;
  corpus.manifest.source_path = path;
  std::set<std::string> seen;
  auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& line = lines[i];
    if (normalize_text(line).empty()) continue;
    ReportPair pair;
    try {
      pair = report_pair_from_json(nlohmann::json::parse(line));
    } catch (const std::exception& e) {
      if (strict) throw CorpusError(e.what(), i + 1);
      corpus.errors.push_back({i + 1, e.what()});
      continue;
    }
    if (!seen.insert(pair.study_id).second)
      throw CorpusError("duplicate study_id " + pair.study_id, i + 1);
    ++corpus.manifest.modality_counts[pair.modality];
    corpus.pairs.push_back(std::move(pair));
  }
  corpus.manifest.pair_count = corpus.pairs.size();
  return corpus;
}

inline OutputManifest write_corpus(const std::vector<ReportPair>& pairs,
                                   const std::filesystem::path& path) {
  std::vector<std::string> lines;
  for (const auto& p : pairs) lines.push_back(dump_canonical(to_json(p)));
  return write_lines(path, lines);
}

// ---------------------------------------------------------------------------
// Extraction fixtures: {"study_id", "role", "entities": [...]}

inline ExtractionFixtures load_extraction_fixtures(const std::filesystem::path& path) {
  ExtractionFixtures fixtures;
  auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (normalize_text(lines[i]).empty()) continue;
    try {
      auto j = nlohmann::json::parse(lines[i]);
      auto study = j.at("study_id").get<std::string>();
      auto role = parse_role(j.at("role").get<std::string>());
      if (!role) throw InvalidArgument("role must be reference or candidate");
      const auto& entities = j.at("entities");
      if (!entities.is_array()) throw InvalidArgument("\"entities\" must be an array");
      auto set = validate_entity_set(raw_entities_from_json(entities), *role);
      set.structural_error_count += j.value("structural_errors", std::size_t{0});
      if (!fixtures.emplace(FixtureKey{study, *role}, std::move(set)).second)
        throw InvalidArgument("duplicate fixture for " + study + "/" +
                              std::string(to_string(*role)));
    } catch (const CorpusError&) {
      throw;
    } catch (const std::exception& e) {
      throw CorpusError(e.what(), i + 1);
    }
  }
  return fixtures;
}

inline std::string fixture_line(const std::string& study_id, Role role, const EntitySet& set) {
  nlohmann::json j = {{"study_id", study_id},
                      {"role", std::string(to_string(role))},
                      {"entities", entities_to_json(set.entities)}};
  // Records already dropped by validation are only visible through the count.
  if (set.structural_error_count) j["structural_errors"] = set.structural_error_count;
  return dump_canonical(j);
}

inline OutputManifest write_extraction_fixtures(const ExtractionFixtures& fixtures,
                                                const std::filesystem::path& path) {
  std::vector<std::string> lines;
  for (const auto& [key, set] : fixtures) lines.push_back(fixture_line(key.first, key.second, set));
  return write_lines(path, lines);
}

// ---------------------------------------------------------------------------
// Annotations CSV: study_id,rater_id,significant_errors,insignificant_errors[,type:*]

inline std::vector<std::string> split_csv_row(std::string_view row) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < row.size(); ++i) {
    char c = row[i];
    if (quoted) {
      if (c == '"' && i + 1 < row.size() && row[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

inline std::int64_t parse_count(std::string_view field, std::size_t line, std::string_view column) {
  auto s = normalize_text(field);
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    throw CorpusError("non-integer count in column " + std::string(column) + ": '" +
                          std::string(field) + "'",
                      line);
  if (value < 0) throw CorpusError("negative count in column " + std::string(column), line);
  return value;
}

inline std::vector<AnnotationRecord> load_annotations(const std::filesystem::path& path) {
  auto lines = read_lines(path);
  std::vector<AnnotationRecord> records;
  if (lines.empty()) throw CorpusError("annotation file has no header");
  auto header = split_csv_row(lines.front());
  for (auto& h : header) h = normalize_text(h);
  std::map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.size(); ++i) column[header[i]] = i;
  for (const char* required :
       {"study_id", "rater_id", "significant_errors", "insignificant_errors"})
    if (!column.count(required))
      throw CorpusError(std::string("missing required column ") + required, 1);

  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (normalize_text(lines[i]).empty()) continue;
    auto fields = split_csv_row(lines[i]);
    if (fields.size() != header.size())
      throw CorpusError("expected " + std::to_string(header.size()) + " fields, got " +
                            std::to_string(fields.size()),
                        i + 1);
    AnnotationRecord r;
    r.study_id = fields[column["study_id"]];
    r.rater_id = fields[column["rater_id"]];
    if (r.study_id.empty()) throw CorpusError("empty study_id", i + 1);
    r.significant_errors =
        parse_count(fields[column["significant_errors"]], i + 1, "significant_errors");
    r.insignificant_errors =
        parse_count(fields[column["insignificant_errors"]], i + 1, "insignificant_errors");
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (header[c].rfind("type:", 0) != 0) continue;
      if (normalize_text(fields[c]).empty()) continue;
      r.per_type_counts[header[c].substr(5)] = parse_count(fields[c], i + 1, header[c]);
    }
    records.push_back(std::move(r));
  }
  return records;
}

inline OutputManifest write_annotations(const std::vector<AnnotationRecord>& records,
                                        const std::filesystem::path& path) {
  std::set<std::string> types;
  for (const auto& r : records)
    for (const auto& [t, _] : r.per_type_counts) types.insert(t);
  std::vector<std::string> lines;
  std::string header = "study_id,rater_id,significant_errors,insignificant_errors";
  for (const auto& t : types) header += ",type:" + t;
  lines.push_back(header);
  for (const auto& r : records) {
    std::string row = r.study_id + "," + r.rater_id + "," + std::to_string(r.significant_errors) +
                      "," + std::to_string(r.insignificant_errors);
    for (const auto& t : types) {
      auto it = r.per_type_counts.find(t);
      row += "," + (it == r.per_type_counts.end() ? std::string() : std::to_string(it->second));
    }
    lines.push_back(row);
  }
  return write_lines(path, lines);
}

// ---------------------------------------------------------------------------
// Score records

inline nlohmann::json to_json(const ScoreBreakdown& b) {
  nlohmann::json per_dim = nlohmann::json::object();
  nlohmann::json counts = nlohmann::json::object();
  nlohmann::json notes = nlohmann::json::object();
  for (auto d : kDimensions) {
    std::string key(to_string(d));
    per_dim[key] = b.s_obj_per_dimension[d];
    counts[key] = {{"tp", b.counts[d].tp}, {"fp", b.counts[d].fp}, {"fn", b.counts[d].fn}};
    notes[key] = b.explanation.per_dimension_notes[d];
  }
  nlohmann::json per_aspect = nlohmann::json::object();
  nlohmann::json log = nlohmann::json::object();
  for (auto a : kAspects) {
    std::string key(to_string(a));
    per_aspect[key] = b.s_sub_per_aspect[a];
    log[key] = b.explanation.subjective_error_log[a];
  }
  return {{"study_id", b.study_id},
          {"gema", b.gema},
          {"s_obj", b.s_obj},
          {"s_sub", b.s_sub},
          {"s_obj_per_dimension", per_dim},
          {"s_sub_per_aspect", per_aspect},
          {"st_gt", b.st_gt},
          {"st_pred", b.st_pred},
          {"counts", counts},
          {"structural_errors", b.structural_errors},
          {"extraction_template_id", b.extraction_template_id},
          {"subjective_template_id", b.subjective_template_id},
          {"explanation",
           {{"false_predictions", entities_to_json(b.explanation.false_predictions)},
            {"omissions", entities_to_json(b.explanation.omissions)},
            {"per_dimension_notes", notes},
            {"subjective_error_log", log}}}};
}

inline std::vector<ClinicalEntity> entities_from_json(const nlohmann::json& array) {
  std::vector<ClinicalEntity> out;
  for (const auto& j : array) {
    ClinicalEntity e;
    e.disease = j.at("disease").get<std::string>();
    auto opt = [&](const char* key, std::optional<std::string>& field) {
      if (j.contains(key) && j[key].is_string()) field = j[key].get<std::string>();
    };
    opt("location", e.location);
    opt("severity", e.severity);
    opt("uncertainty", e.uncertainty);
    opt("raw_span", e.raw_span);
    out.push_back(std::move(e));
  }
  return out;
}

inline ScoreBreakdown score_from_json(const nlohmann::json& j) {
  ScoreBreakdown b;
  b.study_id = j.at("study_id").get<std::string>();
  b.gema = j.at("gema").get<double>();
  b.s_obj = j.at("s_obj").get<double>();
  b.s_sub = j.at("s_sub").get<double>();
  b.st_gt = j.value("st_gt", std::size_t{0});
  b.st_pred = j.value("st_pred", std::size_t{0});
  b.structural_errors = j.value("structural_errors", std::size_t{0});
  b.extraction_template_id = j.value("extraction_template_id", std::string());
  b.subjective_template_id = j.value("subjective_template_id", std::string());
  for (auto d : kDimensions) {
    std::string key(to_string(d));
    b.s_obj_per_dimension[d] = j.at("s_obj_per_dimension").at(key).get<double>();
    if (j.contains("counts")) {
      const auto& c = j["counts"].at(key);
      b.counts[d] = {c.at("tp").get<std::size_t>(), c.at("fp").get<std::size_t>(),
                     c.at("fn").get<std::size_t>()};
    }
  }
  for (auto a : kAspects)
    b.s_sub_per_aspect[a] = j.at("s_sub_per_aspect").at(std::string(to_string(a))).get<double>();
  if (j.contains("explanation")) {
    const auto& ex = j["explanation"];
    b.explanation.false_predictions = entities_from_json(ex.value("false_predictions", nlohmann::json::array()));
    b.explanation.omissions = entities_from_json(ex.value("omissions", nlohmann::json::array()));
    for (auto d : kDimensions)
      b.explanation.per_dimension_notes[d] =
          ex.at("per_dimension_notes").value(std::string(to_string(d)), std::string());
    for (auto a : kAspects)
      b.explanation.subjective_error_log[a] =
          ex.at("subjective_error_log")
              .value(std::string(to_string(a)), std::vector<std::string>{});
  }
  return b;
}

inline std::string score_line(const ScoreBreakdown& b) { return dump_canonical(to_json(b)); }

inline OutputManifest write_scores(const std::vector<ScoreBreakdown>& breakdowns,
                                   const std::filesystem::path& path) {
  std::vector<std::string> lines;
  lines.reserve(breakdowns.size());
  for (const auto& b : breakdowns) lines.push_back(score_line(b));
  return write_lines(path, lines);
}

inline std::vector<ScoreBreakdown> read_scores(const std::filesystem::path& path) {
  std::vector<ScoreBreakdown> out;
  auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (normalize_text(lines[i]).empty()) continue;
    try {
      out.push_back(score_from_json(nlohmann::json::parse(lines[i])));
    } catch (const std::exception& e) {
      throw CorpusError(e.what(), i + 1);
    }
  }
  return out;
}

}  // namespace gema
