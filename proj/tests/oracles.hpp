#pragma once

// Brute-force reference implementations. Deliberately naive and written
// independently of the library code they check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "gema/core_model.hpp"

namespace gema::oracle {

inline int sign(double v) { return (v > 0) - (v < 0); }

// Kendall tau-b from explicit pair classification.
inline double kendall_tau_b(const std::vector<double>& x, const std::vector<double>& y) {
  double concordant = 0, discordant = 0, tied_x_only = 0, tied_y_only = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      int sx = sign(x[i] - x[j]);
      int sy = sign(y[i] - y[j]);
      if (sx == 0 && sy == 0) continue;
      if (sx == 0) {
        ++tied_x_only;
      } else if (sy == 0) {
        ++tied_y_only;
      } else if (sx == sy) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  double base = concordant + discordant;
  return (concordant - discordant) / std::sqrt((base + tied_x_only) * (base + tied_y_only));
}

// Pearson from raw power sums.
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

// Average ranks by counting: rank = #smaller + (#equal + 1) / 2.
inline std::vector<double> counting_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double smaller = 0, equal = 0;
    for (double w : v) {
      smaller += w < v[i];
      equal += w == v[i];
    }
    r[i] = smaller + (equal + 1.0) / 2.0;
  }
  return r;
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson(counting_ranks(x), counting_ranks(y));
}

inline std::size_t recursive_lcs(const std::vector<std::string>& a, std::size_t i,
                                 const std::vector<std::string>& b, std::size_t j) {
  if (i == a.size() || j == b.size()) return 0;
  if (a[i] == b[j]) return 1 + recursive_lcs(a, i + 1, b, j + 1);
  return std::max(recursive_lcs(a, i + 1, b, j), recursive_lcs(a, i, b, j + 1));
}

inline std::size_t recursive_lcs(const std::vector<std::string>& a,
                                 const std::vector<std::string>& b) {
  return recursive_lcs(a, 0, b, 0);
}

// Largest one-to-one assignment of candidates to references under `eligible`,
// by exhaustive search over every partial injection.
inline std::size_t maximum_matching(std::size_t refs, std::size_t cands,
                                    const std::function<bool(std::size_t, std::size_t)>& eligible) {
  std::vector<bool> used(refs, false);
  std::function<std::size_t(std::size_t)> go = [&](std::size_t c) -> std::size_t {
    if (c == cands) return 0;
    std::size_t best = go(c + 1);
    for (std::size_t r = 0; r < refs; ++r) {
      if (used[r] || !eligible(r, c)) continue;
      used[r] = true;
      best = std::max(best, 1 + go(c + 1));
      used[r] = false;
    }
    return best;
  };
  return go(0);
}

}  // namespace gema::oracle
