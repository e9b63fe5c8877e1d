#pragma once

// Domain types shared across the scoring pipeline.

#include <array>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gema/error.hpp"

namespace gema {

enum class Dimension : std::uint8_t { disease, location, severity, uncertainty };
enum class Aspect : std::uint8_t { fluency, grammar, terminology };
enum class Modality : std::uint8_t { xray, ct, other };
enum class Role : std::uint8_t { reference, candidate };

inline constexpr std::array<Dimension, 4> kDimensions = {
    Dimension::disease, Dimension::location, Dimension::severity,
    Dimension::uncertainty};
inline constexpr std::array<Aspect, 3> kAspects = {
    Aspect::fluency, Aspect::grammar, Aspect::terminology};

// Fixed-size map keyed by a dense enum.
template <typename Enum, typename T, std::size_t N>
struct EnumArray {
  std::array<T, N> values{};

  constexpr T& operator[](Enum key) { return values[static_cast<std::size_t>(key)]; }
  constexpr const T& operator[](Enum key) const {
    return values[static_cast<std::size_t>(key)];
  }
  static constexpr EnumArray filled(const T& value) {
    EnumArray out;
    out.values.fill(value);
    return out;
  }
  friend bool operator==(const EnumArray&, const EnumArray&) = default;
};

template <typename T>
using PerDimension = EnumArray<Dimension, T, 4>;
template <typename T>
using PerAspect = EnumArray<Aspect, T, 3>;

inline constexpr std::string_view to_string(Dimension d) {
  constexpr std::array<std::string_view, 4> names = {"disease", "location",
                                                     "severity", "uncertainty"};
  return names[static_cast<std::size_t>(d)];
}
inline constexpr std::string_view to_string(Aspect a) {
  constexpr std::array<std::string_view, 3> names = {"fluency", "grammar",
                                                     "terminology"};
  return names[static_cast<std::size_t>(a)];
}
inline constexpr std::string_view to_string(Modality m) {
  constexpr std::array<std::string_view, 3> names = {"xray", "ct", "other"};
  return names[static_cast<std::size_t>(m)];
}
inline constexpr std::string_view to_string(Role r) {
  return r == Role::reference ? "reference" : "candidate";
}

inline std::optional<Dimension> parse_dimension(std::string_view s) {
  for (auto d : kDimensions)
    if (to_string(d) == s) return d;
  return std::nullopt;
}
inline std::optional<Aspect> parse_aspect(std::string_view s) {
  for (auto a : kAspects)
    if (to_string(a) == s) return a;
  return std::nullopt;
}
inline std::optional<Modality> parse_modality(std::string_view s) {
  for (auto m : {Modality::xray, Modality::ct, Modality::other})
    if (to_string(m) == s) return m;
  return std::nullopt;
}
inline std::optional<Role> parse_role(std::string_view s) {
  if (s == "reference") return Role::reference;
  if (s == "candidate") return Role::candidate;
  return std::nullopt;
}

// Lowercase (ASCII), trim, collapse internal whitespace runs to one space.
inline std::string normalize_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

struct ReportPair {
  std::string study_id;
  Modality modality = Modality::other;
  std::string reference_text;
  std::string candidate_text;  // may be empty

  friend bool operator==(const ReportPair&, const ReportPair&) = default;
};

inline void validate_report_pair(const ReportPair& pair) {
  if (pair.study_id.empty()) throw InvalidArgument("study_id must be non-empty");
  if (pair.reference_text.empty())
    throw InvalidArgument(pair.study_id + ": reference text must be non-empty");
}

struct ClinicalEntity {
  std::string disease;
  std::optional<std::string> location;
  std::optional<std::string> severity;
  std::optional<std::string> uncertainty;
  std::optional<std::string> raw_span;  // not part of identity

  const std::optional<std::string>& field(Dimension d) const {
    switch (d) {
      case Dimension::location: return location;
      case Dimension::severity: return severity;
      case Dimension::uncertainty: return uncertainty;
      case Dimension::disease: break;
    }
    static const std::optional<std::string> none;
    return none;
  }

  bool has(Dimension d) const { return d == Dimension::disease || field(d).has_value(); }

  std::string_view value(Dimension d) const {
    if (d == Dimension::disease) return disease;
    const auto& f = field(d);
    return f ? std::string_view(*f) : std::string_view();
  }

  // Identity over the four tuple fields.
  bool same_tuple(const ClinicalEntity& o) const {
    return disease == o.disease && location == o.location &&
           severity == o.severity && uncertainty == o.uncertainty;
  }

  friend bool operator==(const ClinicalEntity&, const ClinicalEntity&) = default;
};

// An entity record as emitted by an extractor, before validation.
// `well_formed` is false when a field had the wrong JSON type.
struct RawEntity {
  std::optional<std::string> disease;
  std::optional<std::string> location;
  std::optional<std::string> severity;
  std::optional<std::string> uncertainty;
  std::optional<std::string> raw_span;
  bool well_formed = true;
};

inline RawEntity to_raw(const ClinicalEntity& e) {
  return {e.disease, e.location, e.severity, e.uncertainty, e.raw_span, true};
}

struct EntitySet {
  std::vector<ClinicalEntity> entities;
  Role source = Role::reference;
  std::size_t structural_error_count = 0;

  std::size_t size() const { return entities.size(); }
  bool empty() const { return entities.empty(); }
  std::size_t count_with(Dimension d) const {
    std::size_t n = 0;
    for (const auto& e : entities) n += e.has(d) ? 1 : 0;
    return n;
  }

  friend bool operator==(const EntitySet&, const EntitySet&) = default;
};

// Keeps valid, distinct entities. Every input record is either kept or
// counted in structural_error_count (rejected or collapsed as a duplicate).
// Empty optional fields are treated as absent, not as errors.
inline EntitySet validate_entity_set(std::span<const RawEntity> raw,
                                     Role source = Role::reference) {
  EntitySet out;
  out.source = source;
  auto optional_field = [](const std::optional<std::string>& f)
      -> std::optional<std::string> {
    if (!f) return std::nullopt;
    auto n = normalize_text(*f);
    if (n.empty()) return std::nullopt;
    return n;
  };
  for (const auto& r : raw) {
    if (!r.well_formed || !r.disease) {
      ++out.structural_error_count;
      continue;
    }
    ClinicalEntity e;
    e.disease = normalize_text(*r.disease);
    if (e.disease.empty()) {
      ++out.structural_error_count;
      continue;
    }
    e.location = optional_field(r.location);
    e.severity = optional_field(r.severity);
    e.uncertainty = optional_field(r.uncertainty);
    if (r.raw_span && !r.raw_span->empty()) e.raw_span = r.raw_span;
    bool duplicate = false;
    for (const auto& kept : out.entities) {
      if (kept.same_tuple(e)) {
        duplicate = true;
        break;
      }
    }
    if (duplicate) {
      ++out.structural_error_count;
      continue;
    }
    out.entities.push_back(std::move(e));
  }
  return out;
}

inline EntitySet validate_entity_set(const std::vector<RawEntity>& raw,
                                     Role source = Role::reference) {
  return validate_entity_set(std::span<const RawEntity>(raw), source);
}

struct DimensionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  friend bool operator==(const DimensionCounts&, const DimensionCounts&) = default;
};

struct AnnotationRecord {
  std::string study_id;
  std::string rater_id;
  std::int64_t significant_errors = 0;
  std::int64_t insignificant_errors = 0;
  std::map<std::string, std::int64_t> per_type_counts;

  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

inline constexpr std::array<std::string_view, 4> kErrorTypes = {
    "false_positive_finding", "missed_finding", "wrong_location",
    "wrong_severity"};

struct Explanation {
  std::vector<ClinicalEntity> false_predictions;
  std::vector<ClinicalEntity> omissions;
  PerDimension<std::string> per_dimension_notes;
  PerAspect<std::vector<std::string>> subjective_error_log;

  friend bool operator==(const Explanation&, const Explanation&) = default;
};

struct ScoreBreakdown {
  std::string study_id;
  PerDimension<double> s_obj_per_dimension = PerDimension<double>::filled(0.0);
  double s_obj = 0.0;
  PerAspect<double> s_sub_per_aspect = PerAspect<double>::filled(0.0);
  double s_sub = 0.0;
  double gema = 0.0;
  Explanation explanation;

  // Match ledger summary (st_gt, st_pred and per-dimension counts).
  std::size_t st_gt = 0;
  std::size_t st_pred = 0;
  PerDimension<DimensionCounts> counts;
  std::size_t structural_errors = 0;
  std::string extraction_template_id;
  std::string subjective_template_id;

  friend bool operator==(const ScoreBreakdown&, const ScoreBreakdown&) = default;
};

}  // namespace gema
