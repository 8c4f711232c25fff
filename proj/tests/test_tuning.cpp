#include "seqplan/tuning.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support.hpp"

using namespace seqplan;
using seqplan::testing::make_custom_binomial_plan;
using seqplan::testing::random_small_plan;

TEST(Amca, PassesWhenBoundTiny) {
  // a plan whose complement is identically small over the range
  Plan plan = make_custom_binomial_plan({6}, {{}}, ErrorSpec::absolute(0.9, 0.1));
  AmcaResult r = amca_check(plan, 0.1, 0.01, 0.99);
  EXPECT_TRUE(r.pass);
  EXPECT_FALSE(r.certificate.empty());
  // certified intervals tile [lo, hi] right to left
  EXPECT_NEAR(r.certificate.front().b, 0.99, 1e-12);
  EXPECT_NEAR(r.certificate.back().a, 0.01, 1e-12);
  for (std::size_t i = 1; i < r.certificate.size(); ++i)
    EXPECT_NEAR(r.certificate[i].b, r.certificate[i - 1].a, 1e-12);
}

TEST(Amca, FailsWhenBoundExceedsDelta) {
  // complement near 1 everywhere: single stage, tiny interval margin
  Plan plan = make_custom_binomial_plan({6}, {{}}, ErrorSpec::absolute(0.01, 0.1));
  AmcaResult r = amca_check(plan, 0.1, 0.3, 0.7, 1e-9);
  EXPECT_FALSE(r.pass);
}

TEST(Amca, AgreesWithDenseGridOnSmallPlans) {
  std::mt19937_64 gen(555);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int checked = 0;
  for (int rep = 0; rep < 10; ++rep) {
    Plan plan = random_small_plan(gen, 3, 10);
    // wide margins on even reps so some instances genuinely pass
    if (rep % 2 == 0) plan.spec.eps_a = 0.6 + 0.3 * u(gen);
    double delta = 0.05 + 0.4 * u(gen);
    double lo = 0.02, hi = 0.98;
    AmcaResult r = amca_check(plan, delta, lo, hi, 1e-12);
    // dense exact grid
    CoverageEvaluator ev(plan, 0.0);
    bool violation = false;
    for (int g = 0; g <= 10000; ++g) {
      double th = lo + (hi - lo) * (double)g / 10000.0;
      if (!(ev.complement(th).complement.lower < delta)) {
        violation = true;
        break;
      }
    }
    if (r.pass) {
      EXPECT_FALSE(violation) << "spurious AMCA pass, rep " << rep;
      ++checked;
    }
    if (violation) EXPECT_FALSE(r.pass) << "missed violation, rep " << rep;
  }
  EXPECT_GT(checked, 0);
}

TEST(InitialZeta, FamilyValues) {
  ErrorSpec abs = ErrorSpec::absolute(0.1, 0.05);
  Schedule fin = build_schedule(Family::binomial_abs, Rule::chernoff, abs, 0.2);
  InitialZeta a = initial_zeta(Family::binomial_abs, fin);
  EXPECT_DOUBLE_EQ(a.zeta_safe, 1.0 / 6.0);
  EXPECT_DOUBLE_EQ(a.zeta_0, 0.5);

  ErrorSpec rel = ErrorSpec::relative(0.2, 0.05);
  Schedule inf = build_schedule(Family::binomial_rel, Rule::chernoff, rel, 0.1);
  InitialZeta b = initial_zeta(Family::binomial_rel, inf);
  EXPECT_DOUBLE_EQ(b.zeta_safe, 1.0 / (2.0 * (double)(inf.tau + 1)));
}

TEST(BisectionTune, BinomialAbsEndToEnd) {
  ErrorSpec spec = ErrorSpec::absolute(0.15, 0.1);
  TuneOptions opts;
  TuneResult r = bisection_tune(Family::binomial_abs, Rule::chernoff, spec, opts);
  Schedule sch = build_schedule(Family::binomial_abs, Rule::chernoff, spec, r.zeta_star);
  EXPECT_GE(r.zeta_star, zeta_safe(Family::binomial_abs, sch) - 1e-12);
  EXPECT_TRUE(r.certificate.pass);
  EXPECT_TRUE(r.plan.tuned);
  // bracket invariant: every recorded pass zeta <= every recorded fail zeta
  double max_pass = 0.0, min_fail = pos_inf;
  for (auto& [z, ok] : r.bracket_history)
    (ok ? max_pass : min_fail) = ok ? std::max(max_pass, z) : std::min(min_fail, z);
  EXPECT_LE(max_pass, min_fail);
  // min exact coverage over the certified range stays above 1 - delta
  CoverageEvaluator ev(r.plan, 0.0);
  for (int g = 0; g <= 2000; ++g) {
    double th = 1e-3 + (1.0 - 2e-3) * (double)g / 2000.0;
    EXPECT_LT(ev.complement(th).complement.lower, spec.delta) << th;
  }
  // the first failing bracket zeta really does violate somewhere
  ASSERT_GT(r.first_failing_zeta, 0.0);
  Plan bad = build_plan(Family::binomial_abs, Rule::chernoff, spec, r.first_failing_zeta);
  CoverageEvaluator evb(bad, 0.0);
  double worst = 0.0;
  for (int g = 0; g <= 4000; ++g) {
    double th = 1e-3 + (1.0 - 2e-3) * (double)g / 4000.0;
    worst = std::max(worst, evb.complement(th).complement.lower);
  }
  auto lat = evb.lattice(1e-9, 1.0 - 1e-9);
  for (double th : lat) worst = std::max(worst, evb.complement(th).complement.lower);
  EXPECT_GT(worst, spec.delta);
}

TEST(BisectionTune, BracketStartsAtCapAndStaysBelowIt) {
  // the first probe is the cap (1 - 1e-12)/delta; a real plan degenerates
  // there, so the tuner must bracket strictly below it
  ErrorSpec spec = ErrorSpec::absolute(0.2, 0.1);
  TuneResult r = bisection_tune(Family::binomial_abs, Rule::chernoff, spec);
  ASSERT_FALSE(r.bracket_history.empty());
  EXPECT_NEAR(r.bracket_history.front().first, (1.0 - 1e-12) / spec.delta, 1e-9);
  EXPECT_FALSE(r.bracket_history.front().second);
  EXPECT_LT(r.zeta_star, (1.0 - 1e-12) / spec.delta);
}

TEST(BisectionTune, FinitePopulationLatticeSweep) {
  ErrorSpec spec = ErrorSpec::absolute(0.2, 0.1);
  TuneOptions opts;
  opts.plan_opts.population = 20;
  TuneResult r = bisection_tune(Family::finite_pop_abs, Rule::cdf, spec, opts);
  EXPECT_TRUE(r.certificate.pass);
  CoverageEvaluator ev(r.plan, 0.0);
  for (std::int64_t m = 0; m <= 20; ++m) {
    double p = (double)m / 20.0;
    EXPECT_LT(ev.complement(p).complement.upper, spec.delta) << m;
  }
}

TEST(PoissonCertificates, RelUpperAndLower) {
  ErrorSpec spec = ErrorSpec::relative(0.25, 0.1);
  PlanOptions popts;
  popts.lambda_bar = 6.0;
  Plan plan = build_plan(Family::poisson_rel, Rule::chernoff, spec,
                         1.0 / (2.0 * 8.0), popts);
  EXPECT_TRUE(poisson_rel_upper_certificate(plan, 50.0));
  double llow = poisson_rel_lower_certificate(plan, 1e-8);
  EXPECT_GT(llow, 0.0);
  // below the certified point the materialized-horizon computation can only
  // bound the complement from below; the certificate covers the rest
  CoverageEvaluator ev(plan);
  EXPECT_LT(ev.complement(llow / 2.0).complement.lower, spec.delta);
}
