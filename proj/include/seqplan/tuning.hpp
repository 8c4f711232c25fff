#pragma once

// Coverage tuning: the adaptive maximum checking algorithm (backward sweep
// with doubling/halving step), guaranteed-safe starting values of the
// coverage tuning parameter, and the bisection search for the largest
// feasible zeta. Feasibility always compares complementary coverage against
// delta (never coverage itself).

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "seqplan/coverage.hpp"
#include "seqplan/rules.hpp"

namespace seqplan {

struct AmcaInterval {
  double a = 0.0, b = 0.0;
  double bound = 0.0;  // certified upper bound of the complement on [a, b]
};

struct AmcaResult {
  bool pass = false;
  std::vector<AmcaInterval> certificate;
  double stalled_at = 0.0;  // right endpoint where the step underflowed
};

/// Backward AMCA over [lo, hi]: certify [b-d, b], double d and step left on
/// success, halve on failure, declare fail when d < eta_step. A positive
/// lattice_unit snaps interval endpoints to the parameter lattice (finite
/// population) and acts as the step floor.
inline AmcaResult amca_check(const Plan& plan, double delta, double lo, double hi,
                             double eta_step = 1e-15, double lattice_unit = 0.0) {
  if (!(lo < hi)) throw std::invalid_argument("amca_check: lo >= hi");
  CoverageEvaluator ev(plan);
  AmcaResult res;
  double span = hi - lo;
  double floor_step = lattice_unit > 0.0 ? lattice_unit : eta_step;
  double d = span / 8.0;
  if (lattice_unit > 0.0) d = std::max(d, lattice_unit);
  double b = hi;
  long guard = 1000000;
  while (guard-- > 0) {
    if (d < floor_step) {
      res.pass = false;
      res.stalled_at = b;
      return res;
    }
    double a = std::max(lo, b - d);
    if (lattice_unit > 0.0) {
      a = lo + std::round((a - lo) / lattice_unit) * lattice_unit;
      if (a >= b) a = b - lattice_unit;
      if (a < lo) a = lo;
    }
    bool ok = false;
    double bound = 1.0;
    try {
      bound = ev.interval_bounds(a, b).upper;
      ok = bound < delta;
    } catch (const TooWideInterval&) {
      ok = false;
    }
    if (ok) {
      res.certificate.push_back({a, b, bound});
      b = a;
      if (b <= lo + 1e-300) {
        res.pass = true;
        return res;
      }
      d = std::min(2.0 * d, span);
    } else {
      d /= 2.0;
    }
  }
  throw std::runtime_error("amca_check: iteration guard exceeded");
}

/// Exact sweep over every lattice point of a finite-population plan.
inline AmcaResult lattice_sweep_check(const Plan& plan, double delta, double lo, double hi) {
  std::int64_t N = plan.opts.population;
  AmcaResult res;
  res.pass = true;
  CoverageEvaluator ev(plan);
  std::int64_t mlo = (std::int64_t)std::ceil(lo * (double)N - 1e-9);
  std::int64_t mhi = (std::int64_t)std::floor(hi * (double)N + 1e-9);
  for (std::int64_t m = std::max<std::int64_t>(0, mlo); m <= std::min(N, mhi); ++m) {
    double p = (double)m / (double)N;
    double c = ev.complement(p).complement.upper;
    res.certificate.push_back({p, p, c});
    if (!(c < delta)) {
      res.pass = false;
      res.stalled_at = p;
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Poisson parameter-range certificates (the theorems' ovl/udl-lambda
// conditions that extend a swept range to the whole half-line)

/// Certifies the complement stays below delta on (lambda_bar, inf) for a
/// Poisson absolute-error plan: lambda_bar above every stop threshold from
/// stage tau on, and the threshold tail sum below delta - eta.
inline bool poisson_abs_upper_certificate(const Plan& plan, double lambda_bar, double eta) {
  double eps = plan.spec.eps_a;
  int ls = plan.stages();
  double sum = 0.0;
  for (int ell = 1; ell <= ls; ++ell) {
    double n = (double)plan.stage_value(ell);
    double t = plan.ln_zd(ell) / n;
    if (t >= 0.0 || t <= -eps) return false;  // no interior threshold
    auto f = [&](double z) { return mp(z, z + eps); };
    double zhi = 4.0;
    while (f(zhi) < t) zhi *= 2.0;
    double z = bisect_monotone(f, 0.0, zhi, t, 1e-12);
    if (ell >= plan.schedule.tau && !(lambda_bar > z)) return false;
    sum += std::exp(n * mp(z, lambda_bar));
  }
  return sum < plan.spec.delta - eta;
}

/// Certifies (lambda_bar, inf) for a Poisson relative-error plan via the
/// first-stage condition 2 exp(n1 M_P((1+eps)L, L)) + exp(n1 M_P(z1, L)) < delta.
inline bool poisson_rel_upper_certificate(const Plan& plan, double lambda_bar) {
  double eps = plan.spec.eps_r;
  double n1 = (double)plan.stage_value(1);
  double z1 = plan.ln_zd(1) / n1 * (1.0 + eps) / (eps - (1.0 + eps) * std::log(1.0 + eps));
  if (!(lambda_bar > z1)) return false;
  double v = 2.0 * std::exp(n1 * mp((1.0 + eps) * lambda_bar, lambda_bar)) +
             std::exp(n1 * mp(z1, lambda_bar));
  return v < plan.spec.delta;
}

/// Certifies (0, lambda_low) for a Poisson relative-error plan: lambda_low
/// under every stop threshold from stage tau on, threshold tail sum below
/// delta - eta. Returns the largest power-of-two-scan value that certifies,
/// or 0 when none does.
inline double poisson_rel_lower_certificate(const Plan& plan, double eta) {
  double eps = plan.spec.eps_r;
  int ls = plan.stages();
  double zmin = pos_inf;
  std::vector<double> z((std::size_t)ls + 1, 0.0);
  for (int ell = 1; ell <= ls; ++ell) {
    double n = (double)plan.stage_value(ell);
    z[(std::size_t)ell] =
        plan.ln_zd(ell) / n * (1.0 + eps) / (eps - (1.0 + eps) * std::log(1.0 + eps));
    if (ell >= plan.schedule.tau) zmin = std::min(zmin, z[(std::size_t)ell]);
  }
  double cand = zmin * 0.999;
  for (int tries = 0; tries < 60; ++tries) {
    double sum = 0.0;
    for (int ell = 1; ell <= ls; ++ell)
      sum += std::exp((double)plan.stage_value(ell) * mp(z[(std::size_t)ell], cand));
    if (sum < plan.spec.delta - eta) return cand;
    cand /= 2.0;
  }
  return 0.0;
}

/// The mixed-criterion range top: the unique root of
/// sum_ell exp(n_ell M_P(L(1+eps_r), L)) = delta/2; the theorem certifies
/// every lambda beyond it.
inline double poisson_mix_range_top(const Plan& plan) {
  auto f = [&](double L) {
    double sum = 0.0;
    for (int ell = 1; ell <= plan.stages(); ++ell)
      sum += std::exp((double)plan.stage_value(ell) *
                      mp(L * (1.0 + plan.spec.eps_r), L));
    return sum;
  };
  double hi = 1.0;
  while (f(hi) > plan.spec.delta / 2.0) hi *= 2.0;
  double lo = hi / 2.0;
  while (f(lo) < plan.spec.delta / 2.0 && lo > 1e-12) lo /= 2.0;
  return bisect_monotone(f, lo, hi, plan.spec.delta / 2.0, 1e-10);
}

// ---------------------------------------------------------------------------
// initial zeta and bisection tuning

struct InitialZeta {
  double zeta_safe = 0.0;
  double zeta_0 = 0.0;
};

/// The family's guaranteed value (coverage holds with no computation) and
/// the bracketing start.
inline InitialZeta initial_zeta(Family family, const Schedule& schedule) {
  InitialZeta out;
  out.zeta_safe = zeta_safe(family, schedule);
  double cap = (1.0 - 1e-12) / schedule.delta;
  out.zeta_0 = std::min(std::max(out.zeta_safe, 0.5), cap);
  return out;
}

struct TuneOptions {
  double rel_tol = 1e-3;
  double range_lo = -1.0;  // -1 = family default
  double range_hi = -1.0;
  double eta_step = 1e-15;
  PlanOptions plan_opts;
};

struct TuneResult {
  double zeta_star = 0.0;
  Plan plan;  // rebuilt at zeta_star
  AmcaResult certificate;
  int iterations = 0;
  std::vector<std::pair<double, bool>> bracket_history;  // (zeta, feasible)
  double first_failing_zeta = 0.0;                       // 0 when none recorded
};

struct TuneRange {
  double lo = 1e-9, hi = 1.0 - 1e-9;
  double lattice_unit = 0.0;  // 0 for continuous spaces
};

inline TuneRange default_tune_range(Family family, const PlanOptions& popts) {
  TuneRange r;
  if (detail::poisson_family(family)) {
    r.hi = popts.lambda_bar;
  } else if (detail::finite_family(family)) {
    r.lo = 0.0;
    r.hi = 1.0;
    r.lattice_unit = 1.0 / (double)popts.population;
  }
  return r;
}

/// Family-appropriate feasibility check of a built plan over the range:
/// lattice sweep for finite populations, AMCA plus the half-line
/// certificates for Poisson, plain AMCA otherwise.
inline AmcaResult check_plan_coverage(const Plan& plan, double delta, const TuneRange& range,
                                      double eta_step = 1e-15) {
  if (detail::finite_family(plan.family))
    return lattice_sweep_check(plan, delta, range.lo, range.hi);
  if (plan.family == Family::poisson_abs) {
    // guarantee scoped to the declared range (0, lambda_bar]; the
    // (lambda_bar, inf) certificate needs lambda_bar above every horizon
    // threshold and is left to callers who want that statement
    return amca_check(plan, delta, range.lo, range.hi, eta_step);
  }
  if (plan.family == Family::poisson_rel) {
    double llow = poisson_rel_lower_certificate(plan, plan.opts.eta_horizon);
    if (llow <= 0.0 || !poisson_rel_upper_certificate(plan, range.hi)) return AmcaResult{};
    return amca_check(plan, delta, std::max(range.lo, llow), range.hi, eta_step);
  }
  if (plan.family == Family::poisson_mix) {
    double top = poisson_mix_range_top(plan);
    return amca_check(plan, delta, range.lo, std::max(top, range.lo * 2.0), eta_step);
  }
  return amca_check(plan, delta, range.lo, range.hi, eta_step, range.lattice_unit);
}

namespace detail {

inline bool tune_feasible(Family family, Rule rule, const ErrorSpec& spec, double zeta,
                          const TuneOptions& opts, const TuneRange& range,
                          AmcaResult* cert_out) {
  Plan plan = build_plan(family, rule, spec, zeta, opts.plan_opts);
  AmcaResult res = check_plan_coverage(plan, spec.delta, range, opts.eta_step);
  bool pass = res.pass;
  if (cert_out) *cert_out = std::move(res);
  return pass;
}

}  // namespace detail

/// Largest feasible zeta by bracketing (zeta_0 2^-i feasible, zeta_0 2^j
/// infeasible) and geometric bisection; never returns below zeta_safe, and
/// the returned zeta is re-verified from a fresh plan build.
inline TuneResult bisection_tune(Family family, Rule rule, const ErrorSpec& spec,
                                 const TuneOptions& opts = {}) {
  validate_spec(family, rule, spec);
  TuneRange range = default_tune_range(family, opts.plan_opts);
  if (opts.range_lo >= 0.0) range.lo = opts.range_lo;
  if (opts.range_hi >= 0.0) range.hi = opts.range_hi;
  Schedule seed = build_schedule(family, rule, spec, 0.5, opts.plan_opts);
  InitialZeta init = initial_zeta(family, seed);
  double cap = (1.0 - 1e-12) / spec.delta;

  TuneResult out;
  auto feasible = [&](double zeta) {
    AmcaResult cert;
    bool ok = detail::tune_feasible(family, rule, spec, zeta, opts, range, &cert);
    out.bracket_history.emplace_back(zeta, ok);
    if (!ok && (out.first_failing_zeta == 0.0 || zeta < out.first_failing_zeta))
      out.first_failing_zeta = zeta;
    ++out.iterations;
    return ok;
  };

  double lo = 0.0, hi = 0.0;
  if (feasible(cap)) {
    lo = cap;
  } else {
    double z0 = std::min(init.zeta_0, cap / 2.0);
    if (feasible(z0)) {
      lo = z0;
      hi = cap;
      double probe = z0;
      while (probe * 2.0 < cap) {
        probe *= 2.0;
        if (feasible(probe))
          lo = probe;
        else {
          hi = probe;
          break;
        }
      }
    } else {
      hi = z0;
      double probe = z0;
      while (probe / 2.0 > init.zeta_safe) {
        probe /= 2.0;
        if (feasible(probe)) {
          lo = probe;
          break;
        }
        hi = probe;
      }
      if (lo == 0.0) {
        if (!feasible(init.zeta_safe))
          throw std::runtime_error(
              "bisection_tune: infeasible even at the guaranteed zeta_safe = " +
              std::to_string(init.zeta_safe) + "; the bound oracle is inconsistent");
        lo = init.zeta_safe;
      }
    }
  }

  if (hi > 0.0) {
    while (hi / lo > 1.0 + opts.rel_tol) {
      double mid = std::sqrt(lo * hi);
      (feasible(mid) ? lo : hi) = mid;
    }
  }

  // monotone-feasibility runtime check: every pass at or below every fail
  double max_pass = 0.0, min_fail = pos_inf;
  for (const auto& [z, ok] : out.bracket_history)
    if (ok)
      max_pass = std::max(max_pass, z);
    else
      min_fail = std::min(min_fail, z);
  if (max_pass > min_fail)
    throw std::runtime_error("bisection_tune: feasibility was not monotone in zeta");

  out.zeta_star = lo;
  out.plan = build_plan(family, rule, spec, lo, opts.plan_opts);
  AmcaResult cert;
  if (!detail::tune_feasible(family, rule, spec, lo, opts, range, &cert))
    throw std::runtime_error("bisection_tune: zeta_star failed re-verification");
  out.certificate = std::move(cert);
  out.plan.tuned = true;
  return out;
}

}  // namespace seqplan
