#pragma once

// Domain types for multistage sampling plans: the precision target, the
// stage schedule, per-stage stopping boundaries, and the assembled plan.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "seqplan/common.hpp"

namespace seqplan {

enum class Family {
  binomial_abs,
  binomial_rel_inverse,
  binomial_rel,  // noninverse, infinitely many stages
  binomial_mix,
  poisson_abs,
  poisson_rel,
  poisson_mix,
  bounded_mean_abs,
  bounded_mean_rel,  // inverse sampling with real thresholds
  bounded_mean_mix,
  finite_pop_abs,
  finite_pop_rel,
  finite_pop_mix,
  bwci_cp,
  bwci_fishman,
  bwci_explicit,
};

enum class Rule {
  cdf,
  chernoff,
  massart,
  normal_approx,  // finite population only
  chen_bound,     // finite population only
  asymptotic,     // simplified displays; excluded from coverage guarantees
};

enum class ErrorKind { absolute, relative, mixed, fixed_width };

/// The precision target: margins and confidence parameter.
struct ErrorSpec {
  ErrorKind kind = ErrorKind::absolute;
  double eps_a = 0.0;  // absolute margin (also the fixed-width half-width)
  double eps_r = 0.0;  // relative margin
  double delta = 0.0;

  static ErrorSpec absolute(double eps, double delta) {
    return {ErrorKind::absolute, eps, 0.0, delta};
  }
  static ErrorSpec relative(double eps, double delta) {
    return {ErrorKind::relative, 0.0, eps, delta};
  }
  static ErrorSpec mixed(double eps_a, double eps_r, double delta) {
    return {ErrorKind::mixed, eps_a, eps_r, delta};
  }
  static ErrorSpec fixed_width(double eps, double delta) {
    return {ErrorKind::fixed_width, eps, 0.0, delta};
  }
};

enum class ScheduleKind { sizes, thresholds };

/// Stage schedule: strictly increasing sizes n_ell (or thresholds gamma_ell),
/// the geometric ratio sequence C_ell = rho^-ell behind them, tau, and the
/// per-stage confidence shares.
struct Schedule {
  ScheduleKind kind = ScheduleKind::sizes;
  std::vector<std::int64_t> values;
  double rho = 2.0;
  int tau = 0;
  bool infinite = false;       // materialized through the horizon below
  int horizon = 0;             // ell* for infinite designs (= stages())
  bool single_stage = false;   // tau collapsed to 0; flagged per contract
  double delta = 0.0;

  int stages() const { return (int)values.size(); }

  double c(int ell) const { return std::pow(rho, -(double)ell); }

  /// Confidence share of stage ell (1-based): constant for finite designs,
  /// delta * 2^(tau - ell) beyond tau for infinite designs.
  double delta_ell(int ell) const {
    if (!infinite || ell <= tau) return delta;
    return delta * std::pow(2.0, (double)(tau - ell));
  }
};

/// Continue-set of one stage: integer intervals over the sample sum K (or
/// over the sample count for inverse sampling). Empty set means sure stop.
struct StageBoundary {
  int stage = 0;  // 1-based
  std::vector<IntInterval> continue_set;
  bool unbounded_above = false;  // last interval extends without bound
  bool forced_stop = false;      // final stage of a finite-s design
  bool lo_clamped = false;
  bool hi_clamped = false;

  bool continues(std::int64_t k) const {
    if (forced_stop) return false;
    for (const auto& iv : continue_set)
      if (iv.contains(k)) return true;
    return false;
  }
};

/// Configuration the paper leaves open: ratio rho, design anchors for the
/// infinite-stage schedules, population/bounded-range parameters, horizon
/// residual.
struct PlanOptions {
  double rho = 2.0;
  double design_point = 0.5;   // p* for the noninverse relative schedule
  double lambda_bar = 10.0;    // Poisson parameter-range top (also lambda*)
  double lambda_low = 0.0;     // 0 = auto: min(1, lambda_bar / 8)
  std::int64_t population = 0; // N, finite-population families
  double bounded_lo = 0.0;     // [a, b] for general bounded-variable plans
  double bounded_hi = 1.0;
  double eta_horizon = 1e-8;   // tail residual for materialized stages
  int tau_override = 0;        // finite-pop normal-approx schedules
};

/// Fully instantiated design.
struct Plan {
  Family family = Family::binomial_abs;
  Rule rule = Rule::chernoff;
  ErrorSpec spec;
  double zeta = 0.5;
  PlanOptions opts;
  Schedule schedule;
  std::vector<StageBoundary> boundaries;
  bool tuned = false;

  int stages() const { return schedule.stages(); }
  std::int64_t stage_value(int ell) const { return schedule.values[(std::size_t)ell - 1]; }
  double ln_zd(int ell) const { return std::log(zeta * schedule.delta_ell(ell)); }

  bool inverse_sampling() const {
    return family == Family::binomial_rel_inverse || family == Family::bounded_mean_rel;
  }
  bool infinite_design() const { return schedule.infinite; }
};

// ---------------------------------------------------------------------------
// string maps (CLI and plan documents)

inline const char* to_string(Family f) {
  switch (f) {
    case Family::binomial_abs: return "binomial-abs";
    case Family::binomial_rel_inverse: return "binomial-rel-inverse";
    case Family::binomial_rel: return "binomial-rel";
    case Family::binomial_mix: return "binomial-mix";
    case Family::poisson_abs: return "poisson-abs";
    case Family::poisson_rel: return "poisson-rel";
    case Family::poisson_mix: return "poisson-mix";
    case Family::bounded_mean_abs: return "bounded-mean-abs";
    case Family::bounded_mean_rel: return "bounded-mean-rel";
    case Family::bounded_mean_mix: return "bounded-mean-mix";
    case Family::finite_pop_abs: return "finite-pop-abs";
    case Family::finite_pop_rel: return "finite-pop-rel";
    case Family::finite_pop_mix: return "finite-pop-mix";
    case Family::bwci_cp: return "bw-ci-cp";
    case Family::bwci_fishman: return "bw-ci-fishman";
    case Family::bwci_explicit: return "bw-ci-explicit";
  }
  return "?";
}

inline const char* to_string(Rule r) {
  switch (r) {
    case Rule::cdf: return "cdf";
    case Rule::chernoff: return "chernoff";
    case Rule::massart: return "massart";
    case Rule::normal_approx: return "normal-approx";
    case Rule::chen_bound: return "chen-bound";
    case Rule::asymptotic: return "asymptotic";
  }
  return "?";
}

inline Family family_from_string(const std::string& s) {
  for (Family f : {Family::binomial_abs, Family::binomial_rel_inverse, Family::binomial_rel,
                   Family::binomial_mix, Family::poisson_abs, Family::poisson_rel,
                   Family::poisson_mix, Family::bounded_mean_abs, Family::bounded_mean_rel,
                   Family::bounded_mean_mix, Family::finite_pop_abs, Family::finite_pop_rel,
                   Family::finite_pop_mix, Family::bwci_cp, Family::bwci_fishman,
                   Family::bwci_explicit})
    if (s == to_string(f)) return f;
  throw std::invalid_argument("unknown family: " + s);
}

inline Rule rule_from_string(const std::string& s) {
  for (Rule r : {Rule::cdf, Rule::chernoff, Rule::massart, Rule::normal_approx, Rule::chen_bound,
                 Rule::asymptotic})
    if (s == to_string(r)) return r;
  throw std::invalid_argument("unknown rule: " + s);
}

// ---------------------------------------------------------------------------
// spec validation

/// Checks the margins against the family's hypotheses; throws
/// std::invalid_argument naming the violated inequality.
inline void validate_spec(Family family, Rule rule, const ErrorSpec& spec) {
  auto fail = [](const std::string& msg) { throw std::invalid_argument(msg); };
  if (!(spec.delta > 0.0 && spec.delta < 1.0)) fail("requires 0 < delta < 1");

  bool mix = family == Family::binomial_mix || family == Family::poisson_mix ||
             family == Family::bounded_mean_mix || family == Family::finite_pop_mix;
  bool rel = family == Family::binomial_rel_inverse || family == Family::binomial_rel ||
             family == Family::poisson_rel || family == Family::bounded_mean_rel ||
             family == Family::finite_pop_rel;
  bool bwci = family == Family::bwci_cp || family == Family::bwci_fishman ||
              family == Family::bwci_explicit;

  if (mix) {
    if (!(spec.eps_a > 0.0)) fail("requires eps_a > 0");
    if (!(spec.eps_r > 0.0 && spec.eps_r < 1.0)) fail("requires 0 < eps_r < 1");
    if (family == Family::binomial_mix && (rule == Rule::cdf || rule == Rule::chernoff)) {
      if (!(spec.eps_a < 35.0 / 94.0)) fail("requires eps_a < 35/94");
      if (!(spec.eps_r > 70.0 * spec.eps_a / (35.0 - 24.0 * spec.eps_a)))
        fail("requires eps_r > 70*eps_a/(35-24*eps_a)");
    }
    if ((family == Family::binomial_mix || family == Family::bounded_mean_mix) &&
        rule == Rule::massart) {
      if (!(spec.eps_a < 3.0 / 8.0)) fail("requires eps_a < 3/8");
      if (!(spec.eps_r > 6.0 * spec.eps_a / (3.0 - 2.0 * spec.eps_a)))
        fail("requires eps_r > 6*eps_a/(3-2*eps_a)");
    }
    if (family == Family::bounded_mean_mix && rule == Rule::chernoff) {
      if (!(spec.eps_a < 35.0 / 94.0)) fail("requires eps_a < 35/94");
      if (!(spec.eps_r > 70.0 * spec.eps_a / (35.0 - 24.0 * spec.eps_a)))
        fail("requires eps_r > 70*eps_a/(35-24*eps_a)");
    }
  } else if (rel) {
    if (!(spec.eps_r > 0.0 && spec.eps_r < 1.0)) fail("requires 0 < eps_r < 1");
  } else if (bwci) {
    double cap = family == Family::bwci_explicit ? 0.75 : 0.5;
    if (!(spec.eps_a > 0.0 && spec.eps_a < cap))
      fail(std::string("requires 0 < eps < ") + (family == Family::bwci_explicit ? "3/4" : "1/2"));
  } else {  // absolute error
    bool binom_like = family == Family::binomial_abs || family == Family::bounded_mean_abs ||
                      family == Family::finite_pop_abs;
    if (binom_like) {
      if (!(spec.eps_a > 0.0 && spec.eps_a < 0.5)) fail("requires 0 < eps < 1/2");
    } else if (!(spec.eps_a > 0.0)) {
      fail("requires eps > 0");
    }
  }
}

}  // namespace seqplan
