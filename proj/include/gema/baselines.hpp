#pragma once

// Overlap baselines: BLEU-1, ROUGE-L and a simplified METEOR (exact + stem
// alignment stages, no synonym/paraphrase stage).

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace gema {

struct TokenSequence {
  std::vector<std::string> tokens;

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

// Lowercase and split on runs of non-alphanumeric ASCII. Bytes >= 0x80 are
// kept inside tokens so UTF-8 words survive intact.
inline TokenSequence tokenize(std::string_view text) {
  TokenSequence out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.tokens.push_back(std::move(cur));
  return out;
}

inline double bleu1(const TokenSequence& reference, const TokenSequence& candidate) {
  if (candidate.empty()) return 0.0;
  std::map<std::string_view, std::size_t> ref_counts;
  for (const auto& t : reference.tokens) ++ref_counts[t];
  std::map<std::string_view, std::size_t> cand_counts;
  for (const auto& t : candidate.tokens) ++cand_counts[t];
  std::size_t clipped = 0;
  for (const auto& [tok, n] : cand_counts) {
    auto it = ref_counts.find(tok);
    if (it != ref_counts.end()) clipped += std::min(n, it->second);
  }
  double c = static_cast<double>(candidate.size());
  double r = static_cast<double>(reference.size());
  double precision = static_cast<double>(clipped) / c;
  double brevity = c < r ? std::exp(1.0 - r / c) : 1.0;
  return precision * brevity;
}

inline std::size_t lcs_length(const std::vector<std::string>& a,
                              const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

struct RougeL {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
  std::size_t lcs = 0;
};

inline RougeL rouge_l_detail(const TokenSequence& reference, const TokenSequence& candidate) {
  RougeL out;
  out.lcs = lcs_length(reference.tokens, candidate.tokens);
  if (out.lcs == 0) return out;
  out.precision = static_cast<double>(out.lcs) / static_cast<double>(candidate.size());
  out.recall = static_cast<double>(out.lcs) / static_cast<double>(reference.size());
  out.f = 2.0 * out.precision * out.recall / (out.precision + out.recall);
  return out;
}

inline double rouge_l(const TokenSequence& reference, const TokenSequence& candidate) {
  return rouge_l_detail(reference, candidate).f;
}

// Suffix-stripping stemmer for the METEOR stem stage.
inline std::string stem(std::string_view word) {
  std::string w(word);
  auto strip = [&](std::string_view suffix, std::string_view replacement,
                   std::size_t min_stem) {
    if (w.size() < suffix.size() + min_stem) return false;
    if (w.compare(w.size() - suffix.size(), suffix.size(), suffix) != 0) return false;
    w.resize(w.size() - suffix.size());
    w.append(replacement);
    return true;
  };
  if (strip("ies", "y", 2)) return w;
  if (strip("ing", "", 3)) return w;
  if (strip("edly", "", 3)) return w;
  if (strip("ed", "", 3)) return w;
  if (strip("ly", "", 3)) return w;
  if (strip("es", "", 3) && !w.empty() && (w.back() == 's' || w.back() == 'x' || w.back() == 'h'))
    return w;
  w = std::string(word);
  if (w.size() > 3 && w.back() == 's' && w[w.size() - 2] != 's') w.pop_back();
  return w;
}

struct MeteorAlignment {
  std::vector<std::pair<std::size_t, std::size_t>> matches;  // (candidate, reference)
  std::size_t chunks = 0;
};

inline MeteorAlignment meteor_align(const TokenSequence& reference,
                                    const TokenSequence& candidate) {
  MeteorAlignment out;
  std::vector<bool> ref_used(reference.size(), false);
  std::vector<bool> cand_used(candidate.size(), false);
  auto stage = [&](auto key) {
    for (std::size_t i = 0; i < candidate.size(); ++i) {
      if (cand_used[i]) continue;
      auto k = key(candidate.tokens[i]);
      for (std::size_t j = 0; j < reference.size(); ++j) {
        if (ref_used[j] || key(reference.tokens[j]) != k) continue;
        ref_used[j] = cand_used[i] = true;
        out.matches.emplace_back(i, j);
        break;
      }
    }
  };
  stage([](const std::string& t) { return t; });
  stage([](const std::string& t) { return stem(t); });
  std::sort(out.matches.begin(), out.matches.end());
  for (std::size_t k = 0; k < out.matches.size(); ++k) {
    bool continues = k > 0 && out.matches[k].first == out.matches[k - 1].first + 1 &&
                     out.matches[k].second == out.matches[k - 1].second + 1;
    if (!continues) ++out.chunks;
  }
  return out;
}

// F_mean = 10PR/(R+9P); penalty = 0.5 (chunks/matches)^3.
inline double meteor(const TokenSequence& reference, const TokenSequence& candidate) {
  auto alignment = meteor_align(reference, candidate);
  if (alignment.matches.empty()) return 0.0;
  double m = static_cast<double>(alignment.matches.size());
  double p = m / static_cast<double>(candidate.size());
  double r = m / static_cast<double>(reference.size());
  double f_mean = 10.0 * p * r / (r + 9.0 * p);
  double penalty = 0.5 * std::pow(static_cast<double>(alignment.chunks) / m, 3.0);
  return f_mean * (1.0 - penalty);
}

struct BaselineScores {
  double bleu1 = 0.0;
  double rouge_l = 0.0;
  double meteor = 0.0;
};

inline BaselineScores baseline_scores(std::string_view reference, std::string_view candidate) {
  auto ref = tokenize(reference);
  auto cand = tokenize(candidate);
  return {bleu1(ref, cand), rouge_l(ref, cand), meteor(ref, cand)};
}

}  // namespace gema
