#include "seqplan/distributions.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace seqplan;

TEST(LogFactorial, TableInvariants) {
  const auto& table = log_factorial_table();
  ASSERT_GE(table.cap(), LogFactorialTable::default_cap);
  EXPECT_EQ(log_factorial(0), 0.0);
  EXPECT_EQ(log_factorial(1), 0.0);
  // entries[n] - entries[n-1] = ln n to relative tolerance 1e-14 of the entry
  for (std::int64_t n : {2, 3, 10, 999, 4096, 65537, 1 << 20}) {
    double diff = table(n) - table(n - 1);
    EXPECT_NEAR(diff, std::log((double)n), 1e-14 * std::max(1.0, table(n)));
  }
  EXPECT_NEAR(log_factorial(10), std::log(3628800.0), 1e-6);
}

TEST(LogFactorial, StirlingBracketOnTableAndBeyond) {
  // The bracket width 1/(1260 n^5) drops below one ulp of ln(n!) near
  // n ~ 200, so the strict containment is checked up to representation.
  for (std::int64_t n = 1; n <= 20000; ++n) {
    BoundPair b = stirling_log_factorial_bounds((double)n);
    double v = log_factorial(n);
    double ulp = 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, v);
    EXPECT_GT(v, b.lower - ulp) << n;
    EXPECT_LT(v, b.upper + ulp) << n;
  }
  // above the table cap the Stirling midpoint is used; must stay in bracket
  std::int64_t big = (std::int64_t(1) << 20) + 12345;
  BoundPair b = stirling_log_factorial_bounds((double)big);
  double v = log_factorial(big);
  EXPECT_GT(v, b.lower - 1e-9);
  EXPECT_LT(v, b.upper + 1e-9);
}

TEST(Binomial, CdfExamples) {
  EXPECT_NEAR(binom_cdf(1, 2, 0.5), 0.75, 1e-15);
  EXPECT_EQ(binom_cdf(7, 7, 0.3), 1.0);
  EXPECT_EQ(binom_cdf(-1, 5, 0.4), 0.0);
  // out-of-range theta branches of S_B
  EXPECT_EQ(binom_cdf(2, 5, -0.1), 1.0);
  EXPECT_EQ(binom_cdf(2, 5, 1.1), 0.0);
}

TEST(Binomial, NormalizationAgainstDirectSum) {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> uth(0.0, 1.0);
  for (std::int64_t n : {1, 2, 17, 400, 10000}) {
    double theta = uth(gen);
    for (int rep = 0; rep < 4; ++rep) {
      std::int64_t k = (std::int64_t)(uth(gen) * (double)(n + 1));
      double total = binom_cdf(k, n, theta) + binom_sf(k + 1, n, theta);
      EXPECT_NEAR(total, 1.0, 1e-12) << "n=" << n << " k=" << k << " theta=" << theta;
    }
  }
}

TEST(Binomial, CdfMatchesKahanDirectSumSmall) {
  // direct reference sum at modest n
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> uth(0.01, 0.99);
  for (int rep = 0; rep < 40; ++rep) {
    std::int64_t n = 1 + (std::int64_t)(uth(gen) * 300);
    double theta = uth(gen);
    std::int64_t k = (std::int64_t)(uth(gen) * (double)(n + 1));
    long double acc = 0.0L;
    for (std::int64_t i = 0; i <= k && i <= n; ++i)
      acc += std::exp((long double)binom_log_pmf(i, n, theta));
    EXPECT_NEAR(binom_cdf(k, n, theta), (double)std::min(1.0L, acc), 1e-13);
  }
}

TEST(Poisson, CdfExamples) {
  EXPECT_NEAR(poisson_cdf(0, 1.0), std::exp(-1.0), 1e-15);
  EXPECT_NEAR(poisson_cdf(2, 2.0), 5.0 * std::exp(-2.0), 1e-14);
  EXPECT_EQ(poisson_cdf(3, 0.0), 1.0);
  EXPECT_EQ(poisson_cdf(2, -1.0), 0.0);
  EXPECT_NEAR(poisson_cdf(10, 3.0) + poisson_sf(11, 3.0), 1.0, 1e-13);
}

TEST(Hypergeometric, CdfExamples) {
  EXPECT_NEAR(hyper_cdf(0, 2, 0.5, 4), 1.0 / 6.0, 1e-14);
  EXPECT_EQ(hyper_cdf(3, 3, 0.5, 10), 1.0);
  EXPECT_EQ(hyper_cdf(-1, 2, 0.5, 4), 0.0);
  EXPECT_THROW(hyper_cdf(1, 2, 0.37, 4), std::invalid_argument);
}

TEST(RateFunctions, BranchTables) {
  EXPECT_EQ(mb(0.5, 0.5), 0.0);
  EXPECT_NEAR(mb(0.0, 0.5), std::log(0.5), 1e-15);
  EXPECT_NEAR(mb(0.3, 0.5), 0.3 * std::log(5.0 / 3.0) + 0.7 * std::log(5.0 / 7.0), 1e-15);
  EXPECT_NEAR(mb(0.3, 0.5), -0.082282, 1e-6);
  EXPECT_NEAR(mi(1.0, 0.5), -std::log(2.0), 1e-15);
  EXPECT_EQ(mp(0.0, 2.0), -2.0);
  EXPECT_EQ(mfun(0.4, 1.5), neg_inf);
  EXPECT_EQ(mfun(0.4, 0.0), neg_inf);
  EXPECT_EQ(mb(0.4, -0.2), neg_inf);
  EXPECT_EQ(mi(0.0, 0.5), neg_inf);
  EXPECT_EQ(mp(1.0, -2.0), neg_inf);
  // the sentinel orders below every finite value
  EXPECT_FALSE(-1e300 <= neg_inf);
  EXPECT_TRUE(neg_inf <= -1e300);
}

TEST(RateFunctions, MbNonpositiveAndDirectFormula) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(1e-6, 1.0 - 1e-6);
  for (int i = 0; i < 2000; ++i) {
    double z = u(gen), th = u(gen);
    long double zl = z, tl = th;
    double direct =
        (double)(zl * logl(tl / zl) + (1.0L - zl) * logl((1.0L - tl) / (1.0L - zl)));
    EXPECT_NEAR(mb(z, th), direct, 1e-13 * std::max(1.0, std::abs(direct)));
    EXPECT_LE(mb(z, th), 0.0);
  }
  EXPECT_EQ(mb(0.25, 0.25), 0.0);
  EXPECT_LT(mb(0.250001, 0.25), 0.0);
}

TEST(RateFunctions, ChernoffDomination) {
  // S_B(k,n,p) <= exp(n mb(k/n, p)) for k <= np; mirrored above (Lemma-style
  // domination, random grid)
  std::mt19937_64 gen(17);
  std::uniform_real_distribution<double> u(0.02, 0.98);
  for (int i = 0; i < 400; ++i) {
    std::int64_t n = 2 + (std::int64_t)(u(gen) * 400);
    double p = u(gen);
    // equality holds at k = 0 and k = n, so allow ulp-level slack
    std::int64_t klo = (std::int64_t)std::floor((double)n * p);
    auto slack = [](double bound) { return bound * 1e-12 + 1e-15; };
    for (std::int64_t k = 0; k <= klo; k += std::max<std::int64_t>(1, klo / 7 + 1)) {
      double bound = std::exp((double)n * mb((double)k / (double)n, p));
      EXPECT_LE(binom_cdf(k, n, p), bound + slack(bound));
    }
    for (std::int64_t k = (std::int64_t)std::ceil((double)n * p); k <= n;
         k += std::max<std::int64_t>(1, (n - klo) / 7 + 1)) {
      double bound = std::exp((double)n * mb((double)k / (double)n, p));
      EXPECT_LE(binom_sf(k, n, p), bound + slack(bound));
    }
  }
}

TEST(RateFunctions, HoeffdingDominatedByMassart) {
  // mb(z, mu) <= mfun(z, mu) wherever both are finite
  std::mt19937_64 gen(29);
  std::uniform_real_distribution<double> u(1e-4, 1.0 - 1e-4);
  for (int i = 0; i < 20000; ++i) {
    double z = u(gen), mu = u(gen);
    double h = mb(z, mu), m = mfun(z, mu);
    if (std::isfinite(h) && std::isfinite(m)) EXPECT_LE(h, m + 1e-15);
  }
}

TEST(RateFunctions, MonotonicityLemmas) {
  // mi(z, z/(1+eps)) and mb(z, z/(1+eps)) strictly decreasing on (0,1);
  // mp(z, z+eps) strictly increasing on z > 0
  for (double eps : {0.05, 0.2, 0.5}) {
    double prev_mi = pos_inf, prev_mb = pos_inf, prev_mp = neg_inf;
    for (int i = 1; i <= 60; ++i) {
      double z = i / 61.0;
      double vi = mi(z, z / (1.0 + eps));
      double vb = mb(z, z / (1.0 + eps));
      double vp = mp(z, z + eps);
      EXPECT_LT(vi, prev_mi);
      EXPECT_LT(vb, prev_mb);
      EXPECT_GT(vp, prev_mp);
      prev_mi = vi;
      prev_mb = vb;
      prev_mp = vp;
    }
  }
}

TEST(ChenBound, ExamplesAndDomination) {
  double c = chen_hyper_bound(1.0, 0.5, 3, 10);
  EXPECT_NEAR(c, (5.0 * 4.0 * 3.0) / (10.0 * 9.0 * 8.0), 1e-14);  // C(5,3)/C(10,3)
  EXPECT_NEAR(chen_hyper_bound(1.0, 1.0, 3, 10), 1.0, 1e-14);
  EXPECT_THROW(chen_hyper_bound(0.4, 0.5, 3, 10), std::invalid_argument);

  // tail domination by enumeration over N <= 20
  for (std::int64_t N = 2; N <= 20; ++N)
    for (std::int64_t n = 1; n <= N; ++n)
      for (std::int64_t M = 0; M <= N; ++M) {
        double p = (double)M / (double)N;
        for (std::int64_t k = 0; k <= n; ++k) {
          double z = (double)k / (double)n;
          double bound = chen_hyper_bound(z, p, n, N);
          if (z >= p) EXPECT_LE(hyper_sf(k, n, p, N), bound + 1e-12);
          if (z <= p) EXPECT_LE(hyper_cdf(k, n, p, N), bound + 1e-12);
        }
      }
}

TEST(ClopperPearson, Examples) {
  auto [l0, u0] = clopper_pearson(0, 10, 0.025);
  EXPECT_EQ(l0, 0.0);
  EXPECT_NEAR(u0, 1.0 - std::pow(0.025, 0.1), 1e-9);
  auto [l1, u1] = clopper_pearson(10, 10, 0.025);
  EXPECT_NEAR(l1, std::pow(0.025, 0.1), 1e-9);
  EXPECT_EQ(u1, 1.0);
  auto [l2, u2] = clopper_pearson(0, 1, 1.0);
  EXPECT_EQ(l2, 0.0);
  EXPECT_NEAR(u2, 0.0, 1e-12);
}

TEST(ClopperPearson, LimitsSatisfyDefiningInequalities) {
  std::mt19937_64 gen(41);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 60; ++rep) {
    std::int64_t n = 1 + (std::int64_t)(u(gen) * 80);
    std::int64_t k = (std::int64_t)(u(gen) * (double)(n + 1));
    double alpha = 0.001 + 0.2 * u(gen);
    auto [L, U] = clopper_pearson(k, n, alpha);
    EXPECT_LE(L, (double)k / (double)n + 1e-12);
    EXPECT_GE(U, (double)k / (double)n - 1e-12);
    if (k > 0) {
      EXPECT_LE(binom_sf(k, n, L), alpha + 1e-7);
      EXPECT_GE(binom_sf(k, n, std::min(1.0, L + 1e-6)), alpha - 1e-7);
    }
    if (k < n) {
      EXPECT_LE(binom_cdf(k, n, U), alpha + 1e-7);
      EXPECT_GE(binom_cdf(k, n, std::max(0.0, U - 1e-6)), alpha - 1e-7);
    }
  }
}

TEST(NormalQuantile, RoundTrip) {
  for (double a : {0.5, 0.25, 0.1, 0.05, 0.025, 1e-3, 1e-6, 0.7, 0.99}) {
    double z = normal_upper_quantile(a);
    EXPECT_NEAR(normal_cdf(z), 1.0 - a, 1e-13);
  }
  EXPECT_NEAR(normal_upper_quantile(0.025), 1.959963984540054, 1e-9);
}

// Oracle for the Gamma tail: piecewise chord/tangent bounds on the density,
// split at the inflection points and refined on a fixed grid. Independent of
// the incomplete-gamma code path.
namespace {
BoundPair gamma_tail_oracle(std::int64_t n, double k, double eps) {
  double a = (double)n * k;
  auto f = [&](double x) { return std::exp((a - 1.0) * std::log(x) - x - std::lgamma(a)); };
  auto fp = [&](double x) { return f(x) * ((a - 1.0) / x - 1.0); };
  // density is concave between the inflection points a-1 +- sqrt(a-1)
  double i1 = a - 1.0 - std::sqrt(std::max(0.0, a - 1.0));
  double i2 = a - 1.0 + std::sqrt(std::max(0.0, a - 1.0));
  auto piece_shape = [&](double lo, double hi) {
    double mid = 0.5 * (lo + hi);
    return (mid > i1 && mid < i2) ? Shape::concave : Shape::convex;
  };
  auto integral_bounds = [&](double lo, double hi) {
    BoundPair total{0.0, 0.0};
    const int pieces = 400;
    std::vector<double> cuts{lo};
    for (double c : {i1, i2})
      if (c > lo && c < hi) cuts.push_back(c);
    cuts.push_back(hi);
    std::sort(cuts.begin(), cuts.end());
    for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
      double l = cuts[s], h = cuts[s + 1], step = (h - l) / pieces;
      for (int q = 0; q < pieces; ++q) {
        BoundPair b =
            split_integral_bounds(f, fp, l + q * step, l + (q + 1) * step, piece_shape(l, h));
        total.lower += b.lower;
        total.upper += b.upper;
      }
    }
    return total;
  };
  double far = a + 60.0 * std::sqrt(a) + 60.0;
  BoundPair lower_tail = integral_bounds(1e-12, (1.0 - eps) * a);
  BoundPair mass_to_far = integral_bounds((1.0 + eps) * a, far);
  // the mass beyond `far` is below 1e-300 at these scales; fold into slack
  return {lower_tail.lower + mass_to_far.lower, lower_tail.upper + mass_to_far.upper + 1e-15};
}
}  // namespace

TEST(GammaScale, TailMatchesIntegralOracle) {
  for (std::int64_t n : {1, 2, 5, 11}) {
    BoundPair oracle = gamma_tail_oracle(n, 1.0, 0.5);
    double tail = gamma_rel_tail(n, 1.0, 0.5);
    EXPECT_GE(tail, oracle.lower - 1e-9);
    EXPECT_LE(tail, oracle.upper + 1e-9);
  }
}

TEST(GammaScale, SampleSizeAgainstOracle) {
  // smallest n with two-sided tail <= delta, certified by the integral oracle
  double k = 1.0, eps = 0.5, delta = 0.05;
  std::int64_t n_star = gamma_rel_sample_size(k, eps, delta);
  BoundPair at = gamma_tail_oracle(n_star, k, eps);
  EXPECT_LE(at.lower, delta);
  if (n_star > 1) {
    BoundPair before = gamma_tail_oracle(n_star - 1, k, eps);
    EXPECT_GT(before.upper, delta);
  }
}

TEST(GammaScale, MonotoneAndVacuousEdges) {
  EXPECT_GE(gamma_rel_sample_size(1.0, 0.3, 0.05), gamma_rel_sample_size(1.0, 0.5, 0.05));
  EXPECT_EQ(gamma_rel_sample_size(1.0, 0.5, 0.999999), 1);
}
