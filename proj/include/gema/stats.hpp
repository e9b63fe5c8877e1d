#pragma once

// Correlation statistics with p-values, correlation matrices and histogram
// summaries used to validate metrics against human annotations.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gema/error.hpp"

namespace gema::stats {

struct PairedSamples {
  std::vector<double> x;
  std::vector<double> y;

  PairedSamples() = default;
  PairedSamples(std::vector<double> xs, std::vector<double> ys)
      : x(std::move(xs)), y(std::move(ys)) {
    if (x.size() != y.size()) throw InvalidArgument("paired samples differ in length");
    if (x.size() < 2) throw DegenerateInputError("need at least 2 paired samples");
    for (std::size_t i = 0; i < x.size(); ++i)
      if (std::isnan(x[i]) || std::isnan(y[i]))
        throw InvalidArgument("paired samples contain NaN");
  }

  std::size_t size() const { return x.size(); }
};

enum class Method { kendall_b, spearman, pearson };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::kendall_b: return "kendall_b";
    case Method::spearman: return "spearman";
    case Method::pearson: break;
  }
  return "pearson";
}

struct CorrelationResult {
  double coefficient = 0.0;
  std::optional<double> p_value;  // undefined for too few samples
  std::size_t n = 0;
  Method method = Method::pearson;
};

// ---------------------------------------------------------------------------
// Distribution tails

namespace detail {

// Continued fraction for the incomplete beta function (modified Lentz).
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIterations = 100000;
  constexpr double kEpsilon = 1e-15;
  constexpr double kTiny = 1e-300;
  double qab = a + b;
  double qap = a + 1.0;
  double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEpsilon) return h;
  }
  throw Error("incomplete beta continued fraction did not converge");
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b).
inline double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw InvalidArgument("beta parameters must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                     b * std::log1p(-x);
  if (x < (a + 1.0) / (a + b + 2.0))
    return std::exp(log_front) * detail::beta_continued_fraction(a, b, x) / a;
  return 1.0 - std::exp(log_front) * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

// P(|T| >= |t|) for Student's t with `df` degrees of freedom.
inline double student_t_two_sided_p(double t, double df) {
  if (std::isinf(t)) return 0.0;
  double x = df / (df + t * t);
  return std::clamp(regularized_incomplete_beta(df / 2.0, 0.5, x), 0.0, 1.0);
}

inline double normal_two_sided_p(double z) {
  return std::clamp(std::erfc(std::abs(z) / std::sqrt(2.0)), 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Product-moment and rank correlations

namespace detail {

inline std::optional<double> correlation_t_test_p(double r, std::size_t n) {
  if (n < 3) return std::nullopt;
  if (std::abs(r) >= 1.0) return 0.0;
  double df = static_cast<double>(n) - 2.0;
  double t = r * std::sqrt(df / (1.0 - r * r));
  return student_t_two_sided_p(t, df);
}

inline double pearson_coefficient(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double dx = x[i] - mx;
    double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DegenerateInputError("zero variance: correlation undefined");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace detail

inline CorrelationResult pearson_r(const PairedSamples& s) {
  CorrelationResult out;
  out.method = Method::pearson;
  out.n = s.size();
  out.coefficient = detail::pearson_coefficient(s.x, s.y);
  out.p_value = detail::correlation_t_test_p(out.coefficient, out.n);
  return out;
}

// Average ranks (1-based) with ties sharing their mean rank.
inline std::vector<double> midranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

inline CorrelationResult spearman_rho(const PairedSamples& s) {
  CorrelationResult out;
  out.method = Method::spearman;
  out.n = s.size();
  auto rx = midranks(s.x);
  auto ry = midranks(s.y);
  out.coefficient = detail::pearson_coefficient(rx, ry);
  out.p_value = detail::correlation_t_test_p(out.coefficient, out.n);
  return out;
}

namespace detail {

// Number of strict inversions in v (sorted ascending afterwards).
inline std::uint64_t count_inversions(std::vector<double>& v) {
  std::vector<double> buffer(v.size());
  std::uint64_t inversions = 0;
  for (std::size_t width = 1; width < v.size(); width *= 2) {
    for (std::size_t lo = 0; lo < v.size(); lo += 2 * width) {
      std::size_t mid = std::min(lo + width, v.size());
      std::size_t hi = std::min(lo + 2 * width, v.size());
      std::size_t i = lo, j = mid, k = lo;
      while (i < mid && j < hi) {
        if (v[j] < v[i]) {
          inversions += mid - i;
          buffer[k++] = v[j++];
        } else {
          buffer[k++] = v[i++];
        }
      }
      while (i < mid) buffer[k++] = v[i++];
      while (j < hi) buffer[k++] = v[j++];
    }
    std::swap(v, buffer);
  }
  return inversions;
}

struct TieSums {
  double pairs = 0.0;     // sum t(t-1)/2
  double cubic = 0.0;     // sum t(t-1)(2t+5)
  double triples = 0.0;   // sum t(t-1)(t-2)
};

// Tie group statistics over a sorted sequence.
inline TieSums tie_sums(const std::vector<double>& sorted) {
  TieSums out;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
    double t = static_cast<double>(j - i + 1);
    if (t > 1.0) {
      out.pairs += t * (t - 1.0) / 2.0;
      out.cubic += t * (t - 1.0) * (2.0 * t + 5.0);
      out.triples += t * (t - 1.0) * (t - 2.0);
    }
    i = j + 1;
  }
  return out;
}

}  // namespace detail

struct KendallCounts {
  double s = 0.0;  // concordant minus discordant
  double n0 = 0.0;
  double x_ties = 0.0;
  double y_ties = 0.0;
};

// Knight's O(n log n) counting of concordant minus discordant pairs.
inline KendallCounts kendall_counts(const PairedSamples& samples) {
  const std::size_t n = samples.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) {
    if (samples.x[a] != samples.x[b]) return samples.x[a] < samples.x[b];
    return samples.y[a] < samples.y[b];
  });

  double joint_ties = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && samples.x[order[j + 1]] == samples.x[order[i]] &&
           samples.y[order[j + 1]] == samples.y[order[i]])
      ++j;
    double t = static_cast<double>(j - i + 1);
    joint_ties += t * (t - 1.0) / 2.0;
    i = j + 1;
  }

  std::vector<double> xs(n), ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = samples.x[order[i]];
    ys[i] = samples.y[order[i]];
  }
  auto x_tie = detail::tie_sums(xs);
  double discordant = static_cast<double>(detail::count_inversions(ys));
  auto y_tie = detail::tie_sums(ys);  // ys is sorted now

  KendallCounts out;
  out.n0 = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  out.x_ties = x_tie.pairs;
  out.y_ties = y_tie.pairs;
  out.s = out.n0 - x_tie.pairs - y_tie.pairs + joint_ties - 2.0 * discordant;
  return out;
}

// Tie-corrected tau-b; p-value from the normal approximation with the full
// tie-adjusted variance of S.
inline CorrelationResult kendall_tau_b(const PairedSamples& samples) {
  auto counts = kendall_counts(samples);
  double denom_x = counts.n0 - counts.x_ties;
  double denom_y = counts.n0 - counts.y_ties;
  if (denom_x <= 0.0 || denom_y <= 0.0)
    throw DegenerateInputError("constant column: Kendall tau-b undefined");

  CorrelationResult out;
  out.method = Method::kendall_b;
  out.n = samples.size();
  out.coefficient = std::clamp(counts.s / std::sqrt(denom_x * denom_y), -1.0, 1.0);

  std::vector<double> xs = samples.x, ys = samples.y;
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  auto tx = detail::tie_sums(xs);
  auto ty = detail::tie_sums(ys);
  const double n = static_cast<double>(samples.size());
  const double m = n * (n - 1.0);
  double variance = (m * (2.0 * n + 5.0) - tx.cubic - ty.cubic) / 18.0 +
                    2.0 * tx.pairs * ty.pairs / m;
  if (samples.size() > 2) variance += tx.triples * ty.triples / (9.0 * m * (n - 2.0));
  out.p_value = variance > 0.0 ? normal_two_sided_p(counts.s / std::sqrt(variance)) : 1.0;
  return out;
}

// Exact two-sided permutation p-value for tau-b: the fraction of the n!
// reorderings of y whose |S| is at least the observed |S|. Limited to n <= 10.
inline double kendall_exact_p(const PairedSamples& samples) {
  const std::size_t n = samples.size();
  if (n > 10) throw InvalidArgument("exact Kendall permutation test limited to n <= 10");
  auto s_of = [&](const std::vector<double>& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        double dx = samples.x[i] - samples.x[j];
        double dy = y[i] - y[j];
        s += (dx > 0 ? 1 : dx < 0 ? -1 : 0) * (dy > 0 ? 1 : dy < 0 ? -1 : 0);
      }
    return s;
  };
  double observed = std::abs(s_of(samples.y));
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::vector<double> y(n);
  std::uint64_t total = 0, extreme = 0;
  do {
    for (std::size_t i = 0; i < n; ++i) y[i] = samples.y[perm[i]];
    ++total;
    if (std::abs(s_of(y)) >= observed - 1e-9) ++extreme;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(extreme) / static_cast<double>(total);
}

inline CorrelationResult correlate(const PairedSamples& s, Method method) {
  switch (method) {
    case Method::kendall_b: return kendall_tau_b(s);
    case Method::spearman: return spearman_rho(s);
    case Method::pearson: break;
  }
  return pearson_r(s);
}

// ---------------------------------------------------------------------------
// Correlation matrix

struct NamedColumn {
  std::string name;
  std::vector<double> values;
};

struct CorrelationMatrix {
  std::vector<std::string> names;
  Method method = Method::pearson;
  // cells[i][j] is empty when the correlation is undefined.
  std::vector<std::vector<std::optional<CorrelationResult>>> cells;

  std::size_t size() const { return names.size(); }
};

inline CorrelationMatrix correlation_matrix(const std::vector<NamedColumn>& columns,
                                            Method method) {
  CorrelationMatrix out;
  out.method = method;
  const std::size_t k = columns.size();
  for (const auto& c : columns) {
    if (c.values.size() != columns.front().values.size())
      throw InvalidArgument("column " + c.name + " length differs");
    out.names.push_back(c.name);
  }
  out.cells.assign(k, std::vector<std::optional<CorrelationResult>>(k));
  const std::size_t n = k ? columns.front().values.size() : 0;
  for (std::size_t i = 0; i < k; ++i) {
    out.cells[i][i] = CorrelationResult{1.0, 0.0, n, method};
    for (std::size_t j = i + 1; j < k; ++j) {
      try {
        auto r = correlate(PairedSamples(columns[i].values, columns[j].values), method);
        out.cells[i][j] = r;
        out.cells[j][i] = r;
      } catch (const DegenerateInputError&) {
      }
    }
  }
  return out;
}

inline nlohmann::json to_json(const CorrelationResult& r) {
  return {{"coefficient", r.coefficient},
          {"abs_coefficient", std::abs(r.coefficient)},
          {"p_value", r.p_value ? nlohmann::json(*r.p_value) : nlohmann::json()},
          {"n", r.n},
          {"method", std::string(to_string(r.method))}};
}

inline nlohmann::json to_json(const CorrelationMatrix& m) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& row : m.cells) {
    nlohmann::json out_row = nlohmann::json::array();
    for (const auto& cell : row) out_row.push_back(cell ? to_json(*cell) : nlohmann::json());
    cells.push_back(out_row);
  }
  return {{"method", std::string(to_string(m.method))}, {"names", m.names}, {"cells", cells}};
}

// Coefficients only; undefined cells are written as "undefined".
inline std::string to_csv(const CorrelationMatrix& m) {
  std::ostringstream out;
  out.precision(6);
  out << std::fixed;
  out << "metric";
  for (const auto& n : m.names) out << "," << n;
  out << "\n";
  for (std::size_t i = 0; i < m.size(); ++i) {
    out << m.names[i];
    for (std::size_t j = 0; j < m.size(); ++j) {
      out << ",";
      if (m.cells[i][j])
        out << m.cells[i][j]->coefficient;
      else
        out << "undefined";
    }
    out << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Histogram with Gaussian kernel density

struct Histogram {
  std::vector<double> bin_edges;
  std::vector<std::size_t> counts;
  std::vector<double> kde_grid;
  std::vector<double> kde_values;
  double bandwidth = 0.0;
};

inline constexpr std::size_t kKdeGridPoints = 128;

// Silverman's rule: 0.9 min(sd, IQR/1.34) n^(-1/5).
inline double silverman_bandwidth(std::span<const double> values) {
  const double n = static_cast<double>(values.size());
  if (values.size() < 2) return 1.0;
  double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  double sd = std::sqrt(ss / (n - 1.0));
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double q) {
    double pos = q * (n - 1.0);
    auto lo = static_cast<std::size_t>(std::floor(pos));
    auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
  };
  double iqr = quantile(0.75) - quantile(0.25);
  double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  double h = 0.9 * spread * std::pow(n, -0.2);
  return h > 0.0 ? h : 1.0;
}

// Equal-width bins over [min, max] (last bin closed). A constant sample gets
// a unit-width range centred on the value.
inline Histogram distribution_summary(std::span<const double> values, std::size_t bin_count) {
  if (values.empty()) throw InvalidArgument("distribution_summary needs values");
  if (bin_count == 0) throw InvalidArgument("bin_count must be positive");
  for (double v : values)
    if (!std::isfinite(v)) throw InvalidArgument("distribution_summary needs finite values");
  auto [min_it, max_it] = std::minmax_element(values.begin(), values.end());
  double lo = *min_it, hi = *max_it;
  if (lo == hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  Histogram h;
  double width = (hi - lo) / static_cast<double>(bin_count);
  for (std::size_t i = 0; i <= bin_count; ++i)
    h.bin_edges.push_back(i == bin_count ? hi : lo + width * static_cast<double>(i));
  h.counts.assign(bin_count, 0);
  for (double v : values) {
    auto bin = static_cast<std::size_t>(std::floor((v - lo) / width));
    ++h.counts[std::min(bin, bin_count - 1)];
  }
  h.bandwidth = silverman_bandwidth(values);
  double grid_lo = *min_it - 3.0 * h.bandwidth;
  double grid_hi = *max_it + 3.0 * h.bandwidth;
  const double n = static_cast<double>(values.size());
  const double norm = 1.0 / (n * h.bandwidth * std::sqrt(2.0 * M_PI));
  for (std::size_t g = 0; g < kKdeGridPoints; ++g) {
    double x = grid_lo + (grid_hi - grid_lo) * static_cast<double>(g) /
                             static_cast<double>(kKdeGridPoints - 1);
    double density = 0.0;
    for (double v : values) {
      double u = (x - v) / h.bandwidth;
      density += std::exp(-0.5 * u * u);
    }
    h.kde_grid.push_back(x);
    h.kde_values.push_back(density * norm);
  }
  return h;
}

inline nlohmann::json to_json(const Histogram& h) {
  return {{"bin_edges", h.bin_edges},
          {"counts", h.counts},
          {"kde_grid", h.kde_grid},
          {"kde_values", h.kde_values},
          {"bandwidth", h.bandwidth}};
}

}  // namespace gema::stats
