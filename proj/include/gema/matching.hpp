#pragma once

// Type-specific entity comparison and the one-to-one match ledger that the
// objective score and the distributional analyses are built on.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gema/core_model.hpp"
#include "gema/error.hpp"
#include "gema/llm_gateway.hpp"

namespace gema {

// Groups of interchangeable terms. Two terms are equivalent when they are
// equal after normalization or share a group, so the relation is symmetric
// by construction.
class SynonymLexicon {
 public:
  void add_pair(std::string_view canonical, std::string_view synonym) {
    auto c = normalize_text(canonical);
    auto s = normalize_text(synonym);
    if (c.empty() || s.empty()) throw InvalidArgument("lexicon terms must be non-empty");
    auto [it, inserted] = group_of_canonical_.try_emplace(c, groups_.size());
    if (inserted) {
      groups_.emplace_back();
      groups_.back().insert(c);
      member_groups_[c].insert(it->second);
    }
    groups_[it->second].insert(s);
    member_groups_[s].insert(it->second);
  }

  // CSV with columns canonical,synonym. A leading header row is skipped.
  static SynonymLexicon from_csv(std::string_view csv) {
    SynonymLexicon lex;
    std::istringstream in{std::string(csv)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (normalize_text(line).empty() || line.front() == '#') continue;
      auto comma = line.find(',');
      if (comma == std::string::npos)
        throw CorpusError("lexicon row needs canonical,synonym", line_no);
      auto canonical = line.substr(0, comma);
      auto synonym = line.substr(comma + 1);
      if (line_no == 1 && normalize_text(canonical) == "canonical" &&
          normalize_text(synonym) == "synonym")
        continue;
      if (normalize_text(canonical).empty() || normalize_text(synonym).empty())
        throw CorpusError("empty lexicon term", line_no);
      lex.add_pair(canonical, synonym);
    }
    return lex;
  }

  static SynonymLexicon from_file(const std::filesystem::path& path) {
    return from_csv(read_file(path));
  }

  bool equivalent(std::string_view a, std::string_view b) const {
    auto na = normalize_text(a);
    auto nb = normalize_text(b);
    if (na == nb) return true;
    auto ia = member_groups_.find(na);
    auto ib = member_groups_.find(nb);
    if (ia == member_groups_.end() || ib == member_groups_.end()) return false;
    for (auto g : ia->second)
      if (ib->second.count(g)) return true;
    return false;
  }

  // Every term equivalent to `term`, excluding itself.
  std::set<std::string> synonyms_of(std::string_view term) const {
    std::set<std::string> out;
    auto n = normalize_text(term);
    auto it = member_groups_.find(n);
    if (it == member_groups_.end()) return out;
    for (auto g : it->second)
      for (const auto& t : groups_[g])
        if (t != n) out.insert(t);
    return out;
  }

  std::vector<std::string> terms() const {
    std::vector<std::string> out;
    for (const auto& [t, _] : member_groups_) out.push_back(t);
    return out;
  }

  const std::vector<std::set<std::string>>& groups() const { return groups_; }
  bool empty() const { return groups_.empty(); }

 private:
  std::map<std::string, std::size_t> group_of_canonical_;
  std::vector<std::set<std::string>> groups_;
  std::map<std::string, std::set<std::size_t>> member_groups_;
};

inline constexpr std::string_view kDefaultLexiconCsv = R"(canonical,synonym
opacity,infiltrate
opacity,opacification
opacity,airspace disease
pleural effusion,effusion
pleural effusion,pleural fluid
cardiomegaly,enlarged cardiac silhouette
cardiomegaly,cardiac enlargement
atelectasis,atelectatic change
atelectasis,subsegmental collapse
pneumothorax,ptx
pulmonary edema,pulmonary oedema
pulmonary edema,interstitial edema
consolidation,airspace consolidation
nodule,nodular opacity
emphysema,hyperinflation
fracture,cortical break
hiatal hernia,hiatus hernia
left lower lobe,lll
left lower lobe,left base
right lower lobe,rll
right lower lobe,right base
left upper lobe,lul
right upper lobe,rul
right middle lobe,rml
bilateral,both lungs
mediastinum,mediastinal
heart,cardiac
)";

inline const SynonymLexicon& default_lexicon() {
  static const SynonymLexicon lex = SynonymLexicon::from_csv(kDefaultLexiconCsv);
  return lex;
}

// Ranked descriptor categories (e.g. mild < moderate < severe).
class OrdinalScale {
 public:
  OrdinalScale() = default;
  explicit OrdinalScale(std::vector<std::vector<std::string>> categories) {
    for (std::size_t rank = 0; rank < categories.size(); ++rank)
      for (const auto& term : categories[rank]) rank_[normalize_text(term)] = static_cast<int>(rank);
    size_ = categories.size();
  }

  std::optional<int> rank(std::string_view term) const {
    auto it = rank_.find(normalize_text(term));
    if (it == rank_.end()) return std::nullopt;
    return it->second;
  }
  std::size_t size() const { return size_; }

 private:
  std::map<std::string, int> rank_;
  std::size_t size_ = 0;
};

inline const OrdinalScale& default_severity_scale() {
  static const OrdinalScale s({{"mild", "minimal", "slight", "small", "trace"},
                               {"moderate", "moderate-sized", "mild to moderate"},
                               {"severe", "large", "marked", "extensive", "massive"}});
  return s;
}

inline const OrdinalScale& default_uncertainty_scale() {
  static const OrdinalScale s(
      {{"possible", "possibly", "questionable", "may represent", "cannot be excluded"},
       {"probable", "probably", "likely", "suspected", "suggestive of"},
       {"definite", "definitely", "consistent with", "present", "certain"}});
  return s;
}

enum class MatchMode { exact, lexicon, lexicon_then_similarity };

struct MatchPolicy {
  SynonymLexicon synonym_lexicon = default_lexicon();
  double string_similarity_threshold = 1.0;
  PerDimension<MatchMode> dimension_rules = PerDimension<MatchMode>::filled(MatchMode::lexicon);
  OrdinalScale severity_scale = default_severity_scale();
  OrdinalScale uncertainty_scale = default_uncertainty_scale();
  int ordinal_tolerance = 0;  // 0 = exact category

  static MatchPolicy exact() {
    MatchPolicy p;
    p.synonym_lexicon = SynonymLexicon{};
    p.severity_scale = OrdinalScale{};
    p.uncertainty_scale = OrdinalScale{};
    p.dimension_rules = PerDimension<MatchMode>::filled(MatchMode::exact);
    return p;
  }
};

// Levenshtein distance over bytes, scaled to [0,1] (1 = identical).
inline double string_similarity(std::string_view a, std::string_view b) {
  if (a.empty() && b.empty()) return 1.0;
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return 1.0 - static_cast<double>(prev[b.size()]) /
                   static_cast<double>(std::max(a.size(), b.size()));
}

inline bool values_match(std::string_view a, std::string_view b, Dimension d,
                         const MatchPolicy& policy) {
  auto na = normalize_text(a);
  auto nb = normalize_text(b);
  if (na == nb) return true;
  const OrdinalScale* scale = d == Dimension::severity      ? &policy.severity_scale
                              : d == Dimension::uncertainty ? &policy.uncertainty_scale
                                                            : nullptr;
  if (scale) {
    auto ra = scale->rank(na);
    auto rb = scale->rank(nb);
    if (ra && rb) return std::abs(*ra - *rb) <= policy.ordinal_tolerance;
  }
  switch (policy.dimension_rules[d]) {
    case MatchMode::exact: return false;
    case MatchMode::lexicon: return policy.synonym_lexicon.equivalent(na, nb);
    case MatchMode::lexicon_then_similarity:
      return policy.synonym_lexicon.equivalent(na, nb) ||
             string_similarity(na, nb) >= policy.string_similarity_threshold;
  }
  return false;
}

// Anchored comparison: non-disease dimensions only match when the diseases
// match and both entities carry the dimension.
inline bool entity_match(const ClinicalEntity& ref, const ClinicalEntity& cand, Dimension d,
                         const MatchPolicy& policy) {
  if (!values_match(ref.disease, cand.disease, Dimension::disease, policy)) return false;
  if (d == Dimension::disease) return true;
  if (!ref.has(d) || !cand.has(d)) return false;
  return values_match(ref.value(d), cand.value(d), d, policy);
}

struct MatchedPair {
  std::size_t reference_index = 0;
  std::size_t candidate_index = 0;
  PerDimension<bool> agrees = PerDimension<bool>::filled(false);

  friend bool operator==(const MatchedPair&, const MatchedPair&) = default;
};

struct MatchResult {
  PerDimension<DimensionCounts> per_dimension;
  std::vector<MatchedPair> matched_pairs;
  std::vector<std::size_t> unmatched_reference;
  std::vector<std::size_t> unmatched_candidate;
  std::size_t st_gt = 0;
  std::size_t st_pred = 0;

  friend bool operator==(const MatchResult&, const MatchResult&) = default;
};

// Greedy one-to-one assignment. Candidates are visited in input order; each
// takes the unassigned disease-matching reference that agrees on the most
// dependent dimensions (first in input order on ties).
inline MatchResult match_entities(const EntitySet& reference, const EntitySet& candidate,
                                  const MatchPolicy& policy) {
  MatchResult r;
  r.st_gt = reference.size();
  r.st_pred = candidate.size();
  std::vector<bool> ref_taken(reference.size(), false);
  std::vector<bool> cand_taken(candidate.size(), false);

  for (std::size_t j = 0; j < candidate.size(); ++j) {
    const auto& c = candidate.entities[j];
    std::optional<std::size_t> best;
    int best_agreement = -1;
    for (std::size_t i = 0; i < reference.size(); ++i) {
      if (ref_taken[i] || !entity_match(reference.entities[i], c, Dimension::disease, policy))
        continue;
      int agreement = 0;
      for (auto d : {Dimension::location, Dimension::severity, Dimension::uncertainty})
        agreement += entity_match(reference.entities[i], c, d, policy) ? 1 : 0;
      if (agreement > best_agreement) {
        best = i;
        best_agreement = agreement;
      }
    }
    if (!best) continue;
    ref_taken[*best] = true;
    cand_taken[j] = true;
    MatchedPair pair{*best, j, {}};
    for (auto d : kDimensions)
      pair.agrees[d] = entity_match(reference.entities[*best], c, d, policy);
    r.matched_pairs.push_back(pair);
  }

  for (std::size_t i = 0; i < reference.size(); ++i)
    if (!ref_taken[i]) r.unmatched_reference.push_back(i);
  for (std::size_t j = 0; j < candidate.size(); ++j)
    if (!cand_taken[j]) r.unmatched_candidate.push_back(j);

  for (auto d : kDimensions) {
    auto& counts = r.per_dimension[d];
    for (const auto& p : r.matched_pairs) {
      bool ref_has = reference.entities[p.reference_index].has(d);
      bool cand_has = candidate.entities[p.candidate_index].has(d);
      if (ref_has && cand_has) {
        if (p.agrees[d]) {
          ++counts.tp;
        } else {
          ++counts.fp;
          ++counts.fn;
        }
      } else if (ref_has) {
        ++counts.fn;
      } else if (cand_has) {
        ++counts.fp;
      }
    }
    for (auto i : r.unmatched_reference) counts.fn += reference.entities[i].has(d) ? 1 : 0;
    for (auto j : r.unmatched_candidate) counts.fp += candidate.entities[j].has(d) ? 1 : 0;
  }
  return r;
}

inline nlohmann::json to_json(const MatchResult& r) {
  nlohmann::json dims = nlohmann::json::object();
  for (auto d : kDimensions) {
    const auto& c = r.per_dimension[d];
    dims[std::string(to_string(d))] = {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}};
  }
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : r.matched_pairs) {
    nlohmann::json flags = nlohmann::json::object();
    for (auto d : kDimensions) flags[std::string(to_string(d))] = p.agrees[d];
    pairs.push_back({{"reference_index", p.reference_index},
                     {"candidate_index", p.candidate_index},
                     {"agrees", flags}});
  }
  return {{"st_gt", r.st_gt},
          {"st_pred", r.st_pred},
          {"per_dimension", dims},
          {"matched_pairs", pairs},
          {"unmatched_reference", r.unmatched_reference},
          {"unmatched_candidate", r.unmatched_candidate}};
}

}  // namespace gema
