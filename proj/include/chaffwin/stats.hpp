#pragma once

// Small hypothesis-test toolkit used by the adversary harness and the statistical tests.

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace chaffwin::stats {

inline double chi_square_sf(double statistic, double df) {
  if (df <= 0) return 1.0;
  boost::math::chi_squared dist(df);
  return boost::math::cdf(boost::math::complement(dist, std::max(0.0, statistic)));
}

struct ChiSquareResult {
  double statistic = 0.0;
  double df = 0.0;
  double p_value = 1.0;
};

// Goodness of fit against equal cell probabilities.
inline ChiSquareResult chi_square_uniform(std::span<const std::uint64_t> counts) {
  ChiSquareResult r;
  double total = 0;
  for (auto c : counts) total += static_cast<double>(c);
  if (counts.size() < 2 || total == 0) return r;
  double expected = total / static_cast<double>(counts.size());
  for (auto c : counts) r.statistic += (static_cast<double>(c) - expected) * (static_cast<double>(c) - expected) / expected;
  r.df = static_cast<double>(counts.size() - 1);
  r.p_value = chi_square_sf(r.statistic, r.df);
  return r;
}

// Two-sample homogeneity over matching categories. Categories whose pooled count is
// below `min_pooled` are lumped into one residual cell.
inline ChiSquareResult chi_square_homogeneity(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b,
                                              std::uint64_t min_pooled = 10) {
  std::vector<std::pair<double, double>> cells;
  std::pair<double, double> residual{0, 0};
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    if (a[i] + b[i] >= min_pooled) {
      cells.emplace_back(static_cast<double>(a[i]), static_cast<double>(b[i]));
    } else {
      residual.first += static_cast<double>(a[i]);
      residual.second += static_cast<double>(b[i]);
    }
  }
  if (residual.first + residual.second > 0) cells.push_back(residual);
  ChiSquareResult r;
  double na = 0, nb = 0;
  for (auto [x, y] : cells) {
    na += x;
    nb += y;
  }
  if (cells.size() < 2 || na == 0 || nb == 0) return r;
  double n = na + nb;
  for (auto [x, y] : cells) {
    double pooled = x + y;
    double ea = pooled * na / n, eb = pooled * nb / n;
    r.statistic += (x - ea) * (x - ea) / ea + (y - eb) * (y - eb) / eb;
  }
  r.df = static_cast<double>(cells.size() - 1);
  r.p_value = chi_square_sf(r.statistic, r.df);
  return r;
}

// Two-sided exact binomial test, P = min(1, 2 min(P[X <= k], P[X >= k])).
inline double binomial_two_sided_p(std::uint64_t successes, std::uint64_t trials, double p = 0.5) {
  if (trials == 0) return 1.0;
  boost::math::binomial dist(static_cast<double>(trials), p);
  double k = static_cast<double>(successes);
  double lower = boost::math::cdf(dist, k);
  double upper = k == 0 ? 1.0 : boost::math::cdf(boost::math::complement(dist, k - 1));
  return std::min(1.0, 2.0 * std::min(lower, upper));
}

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

// Asymptotic Kolmogorov distribution tail, Q(lambda) = 2 sum (-1)^(j-1) exp(-2 j^2 lambda^2).
inline double kolmogorov_sf(double lambda) {
  if (lambda < 1e-3) return 1.0;
  double sum = 0.0, sign = 1.0;
  for (int j = 1; j <= 200; ++j) {
    double term = sign * std::exp(-2.0 * j * j * lambda * lambda);
    sum += term;
    if (std::fabs(term) < 1e-12) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  KsResult r;
  if (a.empty() || b.empty()) return r;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  while (i < a.size() && j < b.size()) {
    double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    r.statistic = std::max(r.statistic, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  double ne = std::sqrt(na * nb / (na + nb));
  r.p_value = kolmogorov_sf((ne + 0.12 + 0.11 / ne) * r.statistic);
  return r;
}

}  // namespace chaffwin::stats
