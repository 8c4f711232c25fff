#pragma once

// Special functions behind every stopping rule: log-factorials, exact
// binomial/Poisson/hypergeometric tails, the large-deviation rate functions
// M, M_B, M_I, M_P, Chen's hypergeometric tail bound, Clopper-Pearson
// limits, a standard-normal quantile, and the Gamma tail sample size.
//
// All tail sums run in log space starting from the requested end of the
// support, with early exit once terms stop contributing; -inf is the branch
// value every rate function returns outside its domain (it compares below
// all finite values, which is exactly what the stopping predicates need).

#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <vector>

#include "seqplan/common.hpp"
#include "seqplan/numerics.hpp"

namespace seqplan {

// ---------------------------------------------------------------------------
// log n!

/// Stirling series bracket: lower < ln(n!) < lower + 1/(1260 n^5), n >= 1.
inline BoundPair stirling_log_factorial_bounds(double n) {
  double base = std::log(std::sqrt(2.0 * M_PI * n)) + n * std::log(n) - n + 1.0 / (12.0 * n) -
                1.0 / (360.0 * n * n * n);
  return {base, base + 1.0 / (1260.0 * std::pow(n, 5))};
}

namespace detail {
// Double-double value and the error-free transforms needed to accumulate
// ln(n!) without the O(n eps) drift a plain running sum would pick up. The
// cancellation in ln C(n, k) = lf(n) - lf(k) - lf(n-k) happens against
// magnitudes ~1e7 at n ~ 1e6, so the table carries ~2e-28 of headroom.
struct DoubleDouble {
  double hi = 0.0, lo = 0.0;
};

inline DoubleDouble two_sum(double a, double b) {
  double s = a + b;
  double bb = s - a;
  return {s, (a - (s - bb)) + (b - bb)};
}

inline DoubleDouble dd_add(DoubleDouble a, DoubleDouble b) {
  DoubleDouble s = two_sum(a.hi, b.hi);
  s.lo += a.lo + b.lo;
  DoubleDouble r = two_sum(s.hi, s.lo);
  return r;
}

inline DoubleDouble dd_from_long_double(long double x) {
  double hi = (double)x;
  return {hi, (double)(x - (long double)hi)};
}
}  // namespace detail

/// Table of ln(n!) built once by the recurrence ln((n+1)!) = ln(n+1) + ln(n!),
/// accumulated in compensated double-double so binomial coefficients up to
/// the cap come out with absolute log error far below 1e-12.
class LogFactorialTable {
 public:
  explicit LogFactorialTable(std::int64_t cap = default_cap) : entries_((std::size_t)cap + 1) {
    entries_[0] = {0.0, 0.0};
    detail::DoubleDouble acc{0.0, 0.0};
    for (std::int64_t n = 1; n <= cap; ++n) {
      acc = detail::dd_add(acc, detail::dd_from_long_double(logl((long double)n)));
      entries_[(std::size_t)n] = acc;
    }
  }

  static constexpr std::int64_t default_cap = std::int64_t(1) << 20;

  std::int64_t cap() const { return (std::int64_t)entries_.size() - 1; }

  double operator()(std::int64_t n) const {
    if (n < 0) throw std::invalid_argument("log_factorial: n < 0");
    if (n <= cap()) {
      const auto& e = entries_[(std::size_t)n];
      return e.hi + e.lo;
    }
    BoundPair b = stirling_log_factorial_bounds((double)n);
    return 0.5 * (b.lower + b.upper);
  }

  /// lf(n) - lf(k) - lf(n - k) with the cancellation done in double-double.
  double log_choose(std::int64_t n, std::int64_t k) const {
    if (k < 0 || k > n || n < 0) return neg_inf;
    if (n <= cap()) {
      const auto& en = entries_[(std::size_t)n];
      const auto& ek = entries_[(std::size_t)k];
      const auto& em = entries_[(std::size_t)(n - k)];
      detail::DoubleDouble r = detail::dd_add(en, {-ek.hi, -ek.lo});
      r = detail::dd_add(r, {-em.hi, -em.lo});
      return r.hi + r.lo;
    }
    return (*this)(n) - (*this)(k) - (*this)(n - k);
  }

 private:
  std::vector<detail::DoubleDouble> entries_;
};

inline const LogFactorialTable& log_factorial_table() {
  static const LogFactorialTable table;
  return table;
}

inline double log_factorial(std::int64_t n) { return log_factorial_table()(n); }

/// ln C(n, k); 0 choices outside the support map to -inf.
inline double log_choose(std::int64_t n, std::int64_t k) {
  return log_factorial_table().log_choose(n, k);
}

// ---------------------------------------------------------------------------
// binomial

inline double binom_log_pmf(std::int64_t k, std::int64_t n, double theta) {
  if (k < 0 || k > n) return neg_inf;
  if (theta <= 0.0) return k == 0 ? 0.0 : neg_inf;
  if (theta >= 1.0) return k == n ? 0.0 : neg_inf;
  // long double keeps k*ln(theta) from drowning the 1e-12 tail budget
  long double v = (long double)log_choose(n, k) + (long double)k * logl((long double)theta) +
                  (long double)(n - k) * log1pl(-(long double)theta);
  return (double)v;
}

namespace detail {
// Sum of pmf over a <= i <= b walking from the heavier endpoint toward the
// lighter one so the early exit fires on the decaying side.
template <typename LogPmf>
inline double pmf_interval_sum(const LogPmf& lp, std::int64_t a, std::int64_t b, bool from_b) {
  if (a > b) return 0.0;
  double sum = 0.0;
  if (from_b) {
    for (std::int64_t i = b; i >= a; --i) {
      double t = std::exp(lp(i));
      sum += t;
      if (t < sum * 1e-18 && t < 1e-300) break;
    }
  } else {
    for (std::int64_t i = a; i <= b; ++i) {
      double t = std::exp(lp(i));
      sum += t;
      if (t < sum * 1e-18 && t < 1e-300) break;
    }
  }
  return std::min(1.0, sum);
}
}  // namespace detail

/// S_B(k, n, theta): P{K <= k} with the notation's out-of-range branches
/// (theta < 0 -> 1, theta > 1 -> 0).
inline double binom_cdf(std::int64_t k, std::int64_t n, double theta) {
  if (theta < 0.0) return 1.0;
  if (theta > 1.0) return 0.0;
  if (k < 0) return 0.0;
  if (k >= n) return 1.0;
  auto lp = [&](std::int64_t i) { return binom_log_pmf(i, n, theta); };
  double mode = theta * (double)(n + 1);
  if ((double)k < mode) return detail::pmf_interval_sum(lp, 0, k, /*from_b=*/true);
  return 1.0 - detail::pmf_interval_sum(lp, k + 1, n, /*from_b=*/false);
}

/// P{K >= k} = 1 - S_B(k-1, n, theta), summed from the upper tail.
inline double binom_sf(std::int64_t k, std::int64_t n, double theta) {
  if (theta < 0.0) return 0.0;
  if (theta > 1.0) return 1.0;
  if (k <= 0) return 1.0;
  if (k > n) return 0.0;
  auto lp = [&](std::int64_t i) { return binom_log_pmf(i, n, theta); };
  double mode = theta * (double)(n + 1);
  if ((double)k > mode) return detail::pmf_interval_sum(lp, k, n, /*from_b=*/false);
  return 1.0 - detail::pmf_interval_sum(lp, 0, k - 1, /*from_b=*/true);
}

// ---------------------------------------------------------------------------
// Poisson

inline double poisson_log_pmf(std::int64_t k, double lambda) {
  if (k < 0) return neg_inf;
  if (lambda <= 0.0) return k == 0 ? 0.0 : neg_inf;
  long double v = (long double)k * logl((long double)lambda) - (long double)lambda -
                  (long double)log_factorial(k);
  return (double)v;
}

/// S_P(k, lambda): P{K <= k}; lambda < 0 -> 0 per the notation.
inline double poisson_cdf(std::int64_t k, double lambda) {
  if (lambda < 0.0) return 0.0;
  if (k < 0) return 0.0;
  if (lambda == 0.0) return 1.0;
  auto lp = [&](std::int64_t i) { return poisson_log_pmf(i, lambda); };
  if ((double)k < lambda) return detail::pmf_interval_sum(lp, 0, k, true);
  // upper tail: walk until terms die out
  double sum = 0.0;
  for (std::int64_t i = k + 1;; ++i) {
    double t = std::exp(lp(i));
    sum += t;
    if ((double)i > lambda && (t < sum * 1e-18 || t < 1e-320)) break;
  }
  return 1.0 - std::min(1.0, sum);
}

inline double poisson_sf(std::int64_t k, double lambda) {
  if (lambda < 0.0) return 1.0;  // complement of the S_P branch
  if (k <= 0) return 1.0;
  if (lambda == 0.0) return 0.0;
  auto lp = [&](std::int64_t i) { return poisson_log_pmf(i, lambda); };
  if ((double)k > lambda) {
    double sum = 0.0;
    for (std::int64_t i = k;; ++i) {
      double t = std::exp(lp(i));
      sum += t;
      if ((double)i > lambda && (t < sum * 1e-18 || t < 1e-320)) break;
    }
    return std::min(1.0, sum);
  }
  return 1.0 - detail::pmf_interval_sum(lp, 0, k - 1, true);
}

// ---------------------------------------------------------------------------
// hypergeometric

namespace detail {
inline std::int64_t require_lattice(double x, const char* what) {
  double r = std::round(x);
  if (std::abs(x - r) > 1e-9 * std::max(1.0, std::abs(x)) + 1e-9)
    throw std::invalid_argument(std::string(what) + " is not an integer count");
  return (std::int64_t)r;
}
}  // namespace detail

inline double hyper_log_pmf(std::int64_t i, std::int64_t n, std::int64_t M, std::int64_t N) {
  return log_choose(M, i) + log_choose(N - M, n - i) - log_choose(N, n);
}

/// S_N(k, n, p) with p = M/N on the population lattice; rejects off-lattice p.
inline double hyper_cdf(std::int64_t k, std::int64_t n, double p, std::int64_t N) {
  if (p < 0.0) return 1.0;
  if (p > 1.0) return 0.0;
  std::int64_t M = detail::require_lattice(p * (double)N, "p*N");
  if (n < 0 || n > N) throw std::invalid_argument("hyper_cdf: n outside [0, N]");
  std::int64_t lo = std::max<std::int64_t>(0, n - (N - M));
  std::int64_t hi = std::min<std::int64_t>(n, M);
  if (k < lo) return 0.0;
  if (k >= hi) return 1.0;
  auto lp = [&](std::int64_t i) { return hyper_log_pmf(i, n, M, N); };
  double mean = (double)n * p;
  if ((double)k < mean) return detail::pmf_interval_sum(lp, lo, k, true);
  return 1.0 - detail::pmf_interval_sum(lp, k + 1, hi, false);
}

inline double hyper_sf(std::int64_t k, std::int64_t n, double p, std::int64_t N) {
  if (p < 0.0) return 0.0;
  if (p > 1.0) return 1.0;
  return 1.0 - hyper_cdf(k - 1, n, p, N);
}

// ---------------------------------------------------------------------------
// rate functions (branch tables per the notation; -inf outside the domain)

namespace detail {
// log1p(u) - u without cancellation; series below the crossover.
inline double log1p_minus(double u) {
  if (std::abs(u) > 0.1) return std::log1p(u) - u;
  double acc = 0.0, term = u * u;
  for (int m = 2; m <= 24; ++m) {
    double contrib = (m % 2 == 0 ? -term : term) / (double)m;
    acc += contrib;
    term *= u;
    if (std::abs(contrib) < std::abs(acc) * 1e-18) break;
  }
  return acc;
}

// ln(a/b): log1p((a-b)/b) near a/b = 1 (where the quotient form cancels),
// plain log elsewhere (where log1p's derivative amplifies rounding).
inline double log_ratio(double a, double b) {
  double u = (a - b) / b;
  if (std::abs(u) < 0.5) return std::log1p(u);
  return std::log(a / b);
}
}  // namespace detail

// The rate functions are written on log1p throughout: stopping predicates
// compare them against ln(zeta delta)/n at stages where the increment per
// lattice step is ~1e-15 of the value, which the textbook forms lose to
// cancellation.

/// M_B(z, theta) = z ln(theta/z) + (1-z) ln((1-theta)/(1-z)).
inline double mb(double z, double theta) {
  if (!(theta > 0.0 && theta < 1.0)) return neg_inf;
  if (z == 0.0) return std::log1p(-theta);
  if (z == 1.0) return std::log(theta);
  if (!(z > 0.0 && z < 1.0)) return neg_inf;
  return z * detail::log_ratio(theta, z) + (1.0 - z) * detail::log_ratio(1.0 - theta, 1.0 - z);
}

/// M_I(z, theta) = ln(theta/z) + (1/z - 1) ln((1-theta)/(1-z)).
inline double mi(double z, double theta) {
  if (!(theta > 0.0 && theta < 1.0)) return neg_inf;
  if (z == 0.0) return neg_inf;
  if (z == 1.0) return std::log(theta);
  if (!(z > 0.0 && z < 1.0)) return neg_inf;
  return detail::log_ratio(theta, z) +
         (1.0 / z - 1.0) * detail::log_ratio(1.0 - theta, 1.0 - z);
}

/// M_P(z, theta) = z - theta + z ln(theta/z) = z (log1p(u) - u), u = (theta-z)/z.
inline double mp(double z, double theta) {
  if (theta <= 0.0 || z < 0.0) return neg_inf;
  if (z == 0.0) return -theta;
  return z * detail::log1p_minus((theta - z) / z);
}

/// Massart's M(z, theta) = 9(z-theta)^2 / (2(z+2theta)(z+2theta-3)).
inline double mfun(double z, double theta) {
  if (!(z >= 0.0 && z <= 1.0)) return neg_inf;
  if (!(theta > 0.0 && theta < 1.0)) return neg_inf;
  return 9.0 * (z - theta) * (z - theta) / (2.0 * (z + 2.0 * theta) * (z + 2.0 * theta - 3.0));
}

// ---------------------------------------------------------------------------
// Chen's hypergeometric tail bound, eq. (defc)

inline double chen_hyper_bound(double z, double p, std::int64_t n, std::int64_t N) {
  std::int64_t M = detail::require_lattice(p * (double)N, "p*N");
  std::int64_t k = detail::require_lattice(z * (double)n, "z*n");
  if (k < 0 || k > n) throw std::invalid_argument("chen_hyper_bound: nz outside [0, n]");
  if (k == n) return std::exp(log_choose(M, n) - log_choose(N, n));
  std::int64_t q = (std::int64_t)std::floor((double)(N + 1) * z);
  double ln = log_choose(M, k) + log_choose(N - M, n - k) - log_choose(q, k) -
              log_choose(N - q, n - k);
  return std::exp(ln);
}

// ---------------------------------------------------------------------------
// Clopper-Pearson limits

/// (L, U) at one-sided level alpha: L = largest p <= k/n with
/// P{K >= k | p} <= alpha (0 at k = 0); U = smallest p >= k/n with
/// P{K <= k | p} <= alpha (1 at k = n). Monotone bisection to 1e-10.
inline std::pair<double, double> clopper_pearson(std::int64_t k, std::int64_t n, double alpha) {
  if (k < 0 || k > n || n <= 0) throw std::invalid_argument("clopper_pearson: bad k, n");
  constexpr double tol = 1e-10;
  double phat = (double)k / (double)n;
  double L = 0.0, U = 1.0;
  if (k > 0) {
    auto g = [&](double p) { return binom_sf(k, n, p); };  // increasing in p
    L = g(phat) <= alpha ? phat : bisect_monotone(g, 0.0, phat, alpha, tol);
  }
  if (k < n) {
    auto f = [&](double p) { return binom_cdf(k, n, p); };  // decreasing in p
    U = f(phat) <= alpha ? phat : bisect_monotone(f, phat, 1.0, alpha, tol);
  }
  return {L, U};
}

// ---------------------------------------------------------------------------
// standard-normal quantile (plumbing for the finite-population
// normal-approximation rule): returns z with Phi(z) = 1 - alpha.

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double normal_upper_quantile(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("normal_upper_quantile: alpha outside (0,1)");
  double p = 1.0 - alpha;
  // Acklam's rational approximation, then one Halley step.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1.0 - plow;
  double x;
  if (p < plow) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= phigh) {
    double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  double e = normal_cdf(x) - p;
  double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

// ---------------------------------------------------------------------------
// regularized incomplete gamma and the Gamma-scale sample size (section on
// Gamma scale estimation)

namespace detail {

// P(a, x) by power series, for x < a + 1.
inline double gamma_p_series(double a, double x) {
  if (x <= 0.0) return 0.0;
  double ap = a, sum = 1.0 / a, del = sum;
  for (int i = 0; i < 10000; ++i) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Q(a, x) by modified Lentz continued fraction, for x >= a + 1.
inline double gamma_q_cf(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i < 10000; ++i) {
    double an = -(double)i * ((double)i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace detail

/// Regularized lower incomplete gamma P(a, x).
inline double gamma_p(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_p: bad arguments");
  if (x < a + 1.0) return detail::gamma_p_series(a, x);
  return 1.0 - detail::gamma_q_cf(a, x);
}

/// Regularized upper incomplete gamma Q(a, x).
inline double gamma_q(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_q: bad arguments");
  if (x < a + 1.0) return 1.0 - detail::gamma_p_series(a, x);
  return detail::gamma_q_cf(a, x);
}

/// Two-sided Gamma tail mass outside ((1-eps) n k, (1+eps) n k) for shape nk.
inline double gamma_rel_tail(std::int64_t n, double k, double eps) {
  double a = (double)n * k;
  return gamma_q(a, (1.0 + eps) * a) + gamma_p(a, (1.0 - eps) * a);
}

/// Smallest n with the two-sided Gamma tail mass at most delta, found by
/// doubling then integer bisection (the tail is decreasing in n).
inline std::int64_t gamma_rel_sample_size(double k, double eps, double delta) {
  if (!(k > 0.0) || !(eps > 0.0 && eps < 1.0) || !(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("gamma_rel_sample_size: arguments out of range");
  if (gamma_rel_tail(1, k, eps) <= delta) return 1;
  std::int64_t lo = 1, hi = 2;
  while (gamma_rel_tail(hi, k, eps) > delta) {
    lo = hi;
    hi *= 2;
    if (hi > (std::int64_t)1 << 40) throw std::runtime_error("gamma_rel_sample_size: diverged");
  }
  while (hi - lo > 1) {
    std::int64_t mid = lo + (hi - lo) / 2;
    (gamma_rel_tail(mid, k, eps) > delta ? lo : hi) = mid;
  }
  return hi;
}

}  // namespace seqplan
