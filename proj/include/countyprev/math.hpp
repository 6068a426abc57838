/*
 * Copyright (C) 2026 countyprev contributors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#ifndef COUNTYPREV_MATH_HPP
#define COUNTYPREV_MATH_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace countyprev {

inline constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

/// Numerically stable inverse logit, exact on both tails.
template <typename S>
S inv_logit(S x) {
  if (x >= S(0)) {
    return S(1) / (S(1) + std::exp(-x));
  }
  const S e = std::exp(x);
  return e / (S(1) + e);
}

template <typename S>
S logit(S p) {
  return std::log(p) - std::log1p(-p);
}

/// log(1 + e^x) without overflow.
template <typename S>
S log1p_exp(S x) {
  if (x > S(0)) {
    return x + std::log1p(std::exp(-x));
  }
  return std::log1p(std::exp(x));
}

/// log(e^a + e^b).
template <typename S>
S log_add_exp(S a, S b) {
  if (a == -std::numeric_limits<S>::infinity()) return b;
  if (b == -std::numeric_limits<S>::infinity()) return a;
  const S m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

/// Normal(mu, sd^2) log density.
inline double log_normal_pdf(double x, double mu, double sd) {
  const double z = (x - mu) / sd;
  return -0.5 * kLogTwoPi - std::log(sd) - 0.5 * z * z;
}

/// Half-Normal(scale) log density on x >= 0.
inline double log_half_normal_pdf(double x, double scale) {
  if (x < 0.0) return -std::numeric_limits<double>::infinity();
  const double z = x / scale;
  return std::log(2.0) - 0.5 * kLogTwoPi - std::log(scale) - 0.5 * z * z;
}

/// Half-Cauchy(scale) log density on x >= 0.
inline double log_half_cauchy_pdf(double x, double scale) {
  if (x < 0.0) return -std::numeric_limits<double>::infinity();
  return std::log(2.0 / M_PI) + std::log(scale) - std::log(scale * scale + x * x);
}

/// Poisson(lambda) log pmf at k >= 0.
inline double log_poisson_pmf(long long k, double lambda) {
  if (k < 0) return -std::numeric_limits<double>::infinity();
  if (lambda <= 0.0) {
    return k == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  }
  return static_cast<double>(k) * std::log(lambda) - lambda - std::lgamma(static_cast<double>(k) + 1.0);
}

/// Log of the Poisson CDF P(X <= c).
///
/// Direct summation of pmf terms; exact for the suppression thresholds this
/// model uses (c <= 9 by default). A Chernoff bound short-circuits the case
/// where the upper tail beyond c is negligible, so arbitrarily large c is
/// cheap, and a central-limit fallback covers huge lambda with huge c.
inline double log_poisson_cdf(long long c, double lambda) {
  if (c < 0) return -std::numeric_limits<double>::infinity();
  if (lambda <= 0.0) return 0.0;
  const double a = static_cast<double>(c) + 1.0;
  if (a > lambda) {
    // P(X >= a) <= exp(-lambda) (e lambda / a)^a
    const double log_tail_bound = -lambda + a * (1.0 + std::log(lambda) - std::log(a));
    if (log_tail_bound < -40.0) {
      return std::log1p(-std::exp(log_tail_bound));
    }
  }
  if (lambda <= 500.0) {
    double term = std::exp(-lambda);
    double cum = term;
    for (long long k = 1; k <= c; ++k) {
      term *= lambda / static_cast<double>(k);
      cum += term;
    }
    return std::log(std::min(cum, 1.0));
  }
  if (c <= 10000000) {
    double lse = -std::numeric_limits<double>::infinity();
    double lt = -lambda;
    lse = lt;
    for (long long k = 1; k <= c; ++k) {
      lt += std::log(lambda) - std::log(static_cast<double>(k));
      lse = log_add_exp(lse, lt);
    }
    return std::min(lse, 0.0);
  }
  // lambda > 500 and c within O(sqrt(lambda)) of it: CLT with continuity correction.
  const double z = (static_cast<double>(c) + 0.5 - lambda) / std::sqrt(lambda);
  return std::log(0.5 * std::erfc(-z / std::sqrt(2.0)));
}

/// d/d(lambda) of log_poisson_cdf = -pmf(c)/CDF(c), returned directly.
inline double dlog_poisson_cdf_dlambda(long long c, double lambda) {
  if (c < 0 || lambda <= 0.0) return 0.0;
  return -std::exp(log_poisson_pmf(c, lambda) - log_poisson_cdf(c, lambda));
}

/// Binomial(n, p) log pmf at k.
inline double log_binomial_pmf(long long k, long long n, double p) {
  if (k < 0 || k > n) return -std::numeric_limits<double>::infinity();
  const double nk = static_cast<double>(n), kk = static_cast<double>(k);
  const double lchoose = std::lgamma(nk + 1.0) - std::lgamma(kk + 1.0) - std::lgamma(nk - kk + 1.0);
  double lp = lchoose;
  if (k > 0) lp += kk * std::log(p);
  if (k < n) lp += (nk - kk) * std::log1p(-p);
  return lp;
}

struct LognormalParams {
  double u;
  double v_sq;
};

/// Location/scale of the lognormal whose mean and sd are exactly as requested.
inline LognormalParams lognormal_moment_params(double mean, double sd) {
  if (!(mean > 0.0)) {
    throw std::domain_error("lognormal_moment_params: mean must be positive");
  }
  const double ratio = sd / mean;
  const double v_sq = std::log1p(ratio * ratio);
  return {std::log(mean) - 0.5 * v_sq, v_sq};
}

/// Lognormal(u, v_sq) log density at y > 0.
inline double log_lognormal_pdf(double y, double u, double v_sq) {
  if (!(y > 0.0) || !(v_sq > 0.0)) return -std::numeric_limits<double>::infinity();
  const double w = std::log(y) - u;
  return -std::log(y) - 0.5 * (kLogTwoPi + std::log(v_sq)) - 0.5 * w * w / v_sq;
}

/// Standard normal CDF.
inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

double inverse_normal_cdf(double p);

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

/// Two-sided p-value of a t statistic with df degrees of freedom.
double student_t_two_sided_pvalue(double t, double df);

/// Type-7 (linear interpolation) quantile of a sorted sample, q in [0, 1].
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  const std::size_t n = sorted.size();
  if (n == 0) return std::numeric_limits<double>::quiet_NaN();
  if (n == 1) return sorted[0];
  const double h = q * static_cast<double>(n - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= n) return sorted[n - 1];
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

inline double quantile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  return quantile_sorted(values, q);
}

}  // namespace countyprev

#endif  // COUNTYPREV_MATH_HPP
