#include "seqplan/sim.hpp"

#include <gtest/gtest.h>

#include "support.hpp"

using namespace seqplan;
using seqplan::testing::make_custom_binomial_plan;

TEST(Simulate, DegenerateThetaZero) {
  Plan plan = make_custom_binomial_plan({3, 6}, {{{1, 2}}, {}}, ErrorSpec::absolute(0.25, 0.1));
  SimReport rep = simulate(plan, 0.0, 500, 42);
  // all paths have K = 0: stop at stage 1 (0 outside {1,2}), interval
  // (-0.25, 0.25) covers theta = 0
  EXPECT_EQ(rep.stop_stage_histogram[0], 500);
  EXPECT_EQ(rep.complement, 0.0);
  EXPECT_EQ(rep.asn, 3.0);
}

TEST(Simulate, ReproducibleAndSeedSensitive) {
  Plan plan = make_custom_binomial_plan({3, 6}, {{{1, 2}}, {}}, ErrorSpec::absolute(0.2, 0.1));
  SimReport a = simulate(plan, 0.37, 2000, 7);
  SimReport b = simulate(plan, 0.37, 2000, 7);
  EXPECT_EQ(a.complement, b.complement);
  EXPECT_EQ(a.asn, b.asn);
  EXPECT_EQ(a.stop_stage_histogram, b.stop_stage_histogram);
  SimReport c = simulate(plan, 0.37, 2000, 8);
  EXPECT_NE(a.asn, c.asn);  // different stream
  std::int64_t total = 0;
  for (auto h : a.stop_stage_histogram) total += h;
  EXPECT_EQ(total, a.trials);
}

TEST(Simulate, MatchesExactWithinFourSe) {
  Plan plan = make_custom_binomial_plan({4, 9}, {{{1, 3}}, {}}, ErrorSpec::absolute(0.22, 0.1));
  for (double theta : {0.25, 0.55}) {
    CoverageReport exact = exact_complement(plan, theta, 0.0);
    SimReport rep = simulate(plan, theta, 100000, 1234);
    double se_c = std::max(rep.complement_se, 1e-4);
    EXPECT_NEAR(rep.complement, exact.complement.lower, 4.0 * se_c) << theta;
    double se_n = std::max(rep.asn_se, 1e-4);
    EXPECT_NEAR(rep.asn, exact.asn.lower, 4.0 * se_n) << theta;
  }
}

TEST(Simulate, PoissonAndFiniteFamilies) {
  // Poisson mixed plan: empirical against exact
  ErrorSpec pm = ErrorSpec::mixed(0.3, 0.3, 0.1);
  Plan pp = build_plan(Family::poisson_mix, Rule::chernoff, pm, 0.2);
  double lam = 0.8;
  CoverageReport exact = exact_complement(pp, lam, 1e-10);
  SimReport rep = simulate(pp, lam, 40000, 99);
  EXPECT_NEAR(rep.complement, exact.complement.lower,
              4.0 * std::max(rep.complement_se, 1e-4));
  EXPECT_NEAR(rep.asn, exact.asn.lower, 4.0 * std::max(rep.asn_se, 0.05));

  // finite population urn draws
  ErrorSpec fs = ErrorSpec::absolute(0.2, 0.1);
  PlanOptions opts;
  opts.population = 20;
  Plan fp;
  fp.family = Family::finite_pop_abs;
  fp.rule = Rule::cdf;
  fp.spec = fs;
  fp.zeta = 0.2;
  fp.opts = opts;
  fp.schedule.values = {4, 8};
  fp.schedule.tau = 2;
  fp.schedule.delta = fs.delta;
  StageBoundary b1;
  b1.stage = 1;
  b1.continue_set = {{1, 3}};
  StageBoundary b2;
  b2.stage = 2;
  b2.forced_stop = true;
  fp.boundaries = {b1, b2};
  double p = 7.0 / 20.0;
  CoverageReport fex = exact_complement(fp, p, 0.0);
  SimReport frep = simulate(fp, p, 50000, 31);
  EXPECT_NEAR(frep.complement, fex.complement.lower,
              4.0 * std::max(frep.complement_se, 1e-4));
  EXPECT_NEAR(frep.asn, fex.asn.lower, 4.0 * std::max(frep.asn_se, 0.05));
}

TEST(Simulate, InverseWaldIdentity) {
  ErrorSpec spec = ErrorSpec::relative(0.3, 0.1);
  Plan plan = build_plan(Family::binomial_rel_inverse, Rule::chernoff, spec, 0.2);
  double p = 0.4;
  SimReport rep = simulate(plan, p, 50000, 2718);
  // E[n] * p ~= E[gamma] (Wald)
  double lhs = rep.asn * p;
  EXPECT_NEAR(lhs, rep.mean_gamma, 4.0 * rep.asn_se * p + 1e-9);
  // and against the exact recursion
  BoundPair exact_asn = asn(plan, p, 1e-12);
  EXPECT_NEAR(rep.asn, exact_asn.lower, 4.0 * std::max(rep.asn_se, 0.05));
}
