#pragma once

// Plan synthesis: stage schedules, stopping boundaries, and stop/continue
// evaluation with the terminal random interval, for every supported family.
//
// Boundary construction follows one discipline throughout: endpoints come
// from the boundary theorems' roots (bisection), then every endpoint is
// walked against the stopping-rule display itself so the stored continue-set
// equals direct predicate evaluation exactly, ties resolving to stop.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "seqplan/common.hpp"
#include "seqplan/distributions.hpp"
#include "seqplan/numerics.hpp"
#include "seqplan/plan_types.hpp"

namespace seqplan {

// ---------------------------------------------------------------------------
// random-interval maps

/// Mixed-criterion limits L = min{z - eps_a, z/(1+eps_r)},
/// U = max{z + eps_a, z/(1-eps_r)} (sgn(z) = +1 on our parameter spaces,
/// and at z = 0 the relative branch contributes z itself).
inline double mix_lower(double z, double eps_a, double eps_r) {
  double rel = z == 0.0 ? 0.0 : z / (1.0 + eps_r);
  return std::min(z - eps_a, rel);
}
inline double mix_upper(double z, double eps_a, double eps_r) {
  double rel = z == 0.0 ? 0.0 : z / (1.0 - eps_r);
  return std::max(z + eps_a, rel);
}

/// Finite-population lattice maps: ceil/floor to the 1/N grid with the
/// +-1/N shifts that turn closed lattice events into open-interval coverage.
/// The grid index is clamped to [0, N]; clamping never changes an event on
/// the parameter lattice since only the sign matters past the edges.
inline double finite_lower(double z, ErrorKind kind, double eps_a, double eps_r,
                           std::int64_t N) {
  double g;
  switch (kind) {
    case ErrorKind::absolute: g = z - eps_a; break;
    case ErrorKind::relative: g = z / (1.0 + eps_r); break;
    default: g = std::min(z - eps_a, z / (1.0 + eps_r)); break;
  }
  double m = std::max(0.0, std::ceil((double)N * g));
  return m / (double)N - 1.0 / (double)N;
}
inline double finite_upper(double z, ErrorKind kind, double eps_a, double eps_r,
                           std::int64_t N) {
  double g;
  switch (kind) {
    case ErrorKind::absolute: g = z + eps_a; break;
    case ErrorKind::relative: g = z / (1.0 - eps_r); break;
    default: g = std::max(z + eps_a, z / (1.0 - eps_r)); break;
  }
  double m = std::min((double)N, std::floor((double)N * g));
  return m / (double)N + 1.0 / (double)N;
}

// ---------------------------------------------------------------------------
// bounded-width CI limit maps (per variant, at working level zeta*delta)

inline std::pair<double, double> bwci_limits(Family family, std::int64_t k, std::int64_t n,
                                             double zd) {
  double phat = (double)k / (double)n;
  double lnzd = std::log(zd);
  switch (family) {
    case Family::bwci_cp:
      return clopper_pearson(k, n, zd);
    case Family::bwci_fishman: {
      // roots of mb(phat, .) = ln(zd)/n on each side of phat; the edge
      // estimates have the closed forms (zd)^(1/n)
      double t = lnzd / (double)n;
      double L = 0.0, U = 1.0;
      if (k == n)
        L = std::exp(t);
      else if (k > 0)
        L = bisect_monotone([&](double th) { return mb(phat, th); }, 0.0, phat, t, 1e-12);
      if (k == 0)
        U = 1.0 - std::exp(t);
      else if (k < n)
        U = bisect_monotone([&](double th) { return mb(phat, th); }, phat, 1.0, t, 1e-12);
      return {L, U};
    }
    case Family::bwci_explicit: {
      double r = 1.0 - 9.0 * (double)n / (2.0 * lnzd) * phat * (1.0 - phat);
      double den = 1.0 - 9.0 * (double)n / (8.0 * lnzd);
      double root = std::sqrt(std::max(0.0, r));
      double L = std::max(0.0, phat + 0.75 * (1.0 - 2.0 * phat - root) / den);
      double U = std::min(1.0, phat + 0.75 * (1.0 - 2.0 * phat + root) / den);
      return {L, U};
    }
    default:
      throw std::logic_error("bwci_limits: not a bounded-width family");
  }
}

// ---------------------------------------------------------------------------
// stopping-rule displays (D_ell = 1 predicates), evaluated directly

namespace detail {

struct StageContext {
  Family family;
  Rule rule;
  ErrorSpec spec;
  double zd_ell;          // zeta * delta_ell
  std::int64_t value;     // n_ell (sizes) or gamma_ell (thresholds)
  std::int64_t population = 0;
};

inline bool stop_binomial_abs(const StageContext& c, std::int64_t k) {
  double n = (double)c.value, eps = c.spec.eps_a;
  double phat = (double)k / n;
  double lnzd = std::log(c.zd_ell);
  switch (c.rule) {
    case Rule::cdf:
      return binom_cdf(k, c.value, phat + eps) <= c.zd_ell &&
             binom_sf(k, c.value, phat - eps) <= c.zd_ell;
    case Rule::chernoff: {
      double zf = 0.5 - std::abs(0.5 - phat);
      return mb(zf, zf + eps) <= lnzd / n;
    }
    case Rule::massart: {
      double lhs = std::abs(phat - 0.5) - 2.0 * eps / 3.0;
      return lhs * lhs >= 0.25 + eps * eps * n / (2.0 * lnzd);
    }
    case Rule::asymptotic:
      return n >= phat * (1.0 - phat) * 2.0 * std::log(1.0 / c.zd_ell) / (eps * eps);
    default:
      throw std::logic_error("binomial-abs: unsupported rule");
  }
}

inline bool stop_binomial_mix(const StageContext& c, std::int64_t k) {
  double n = (double)c.value, ea = c.spec.eps_a, er = c.spec.eps_r;
  double phat = (double)k / n;
  double lnzd = std::log(c.zd_ell);
  switch (c.rule) {
    case Rule::cdf:
      return binom_cdf(k, c.value, mix_upper(phat, ea, er)) <= c.zd_ell &&
             binom_sf(k, c.value, mix_lower(phat, ea, er)) <= c.zd_ell;
    case Rule::chernoff:
      return std::max(mb(phat, mix_lower(phat, ea, er)), mb(phat, mix_upper(phat, ea, er))) <=
             lnzd / n;
    case Rule::massart: {
      // D = 0 on the union of two bands; NaN endpoints compare false = stop
      double s = std::sqrt(0.25 + n * ea * ea / (2.0 * lnzd));
      double lo1 = 0.5 - 2.0 * ea / 3.0 - s;
      double hi1 = 6.0 * (1.0 - er) * (3.0 - er) * lnzd /
                   (2.0 * (3.0 - er) * (3.0 - er) * lnzd - 9.0 * n * er * er);
      double lo2 = 0.5 + 2.0 * ea / 3.0 - s;
      double hi2 = 6.0 * (1.0 + er) * (3.0 + er) * lnzd /
                   (2.0 * (3.0 + er) * (3.0 + er) * lnzd - 9.0 * n * er * er);
      bool cont = (phat > lo1 && phat < hi1) || (phat > lo2 && phat < hi2);
      return !cont;
    }
    case Rule::asymptotic: {
      double m = std::max(ea * ea, er * er * phat * phat);
      return n >= phat * (1.0 - phat) * 2.0 * std::log(1.0 / c.zd_ell) / m;
    }
    default:
      throw std::logic_error("binomial-mix: unsupported rule");
  }
}

// inverse sampling: k is the stage sample count n_ell >= gamma_ell
inline bool stop_binomial_rel_inverse(const StageContext& c, std::int64_t nsamples) {
  double gamma = (double)c.value, eps = c.spec.eps_r;
  double phat = gamma / (double)nsamples;
  double lnzd = std::log(c.zd_ell);
  switch (c.rule) {
    case Rule::cdf:
      return binom_cdf(c.value - 1, nsamples - 1, phat / (1.0 - eps)) <= c.zd_ell &&
             1.0 - binom_cdf(c.value - 1, nsamples, phat / (1.0 + eps)) <= c.zd_ell;
    case Rule::chernoff:
      return mi(phat, phat / (1.0 + eps)) <= lnzd / gamma;
    case Rule::massart:
      return phat >= 1.0 + 2.0 * eps / (3.0 + eps) +
                         9.0 * eps * eps * gamma / (2.0 * (3.0 + eps) * (3.0 + eps) * lnzd);
    case Rule::asymptotic:
      return gamma >= (1.0 - phat) * 2.0 * std::log(1.0 / c.zd_ell) / (eps * eps);
    default:
      throw std::logic_error("binomial-rel-inverse: unsupported rule");
  }
}

inline bool stop_binomial_rel(const StageContext& c, std::int64_t k) {
  double n = (double)c.value, eps = c.spec.eps_r;
  double phat = (double)k / n;
  double lnzd = std::log(c.zd_ell);
  switch (c.rule) {
    case Rule::cdf:
      return binom_cdf(k, c.value, phat / (1.0 - eps)) <= c.zd_ell &&
             binom_sf(k, c.value, phat / (1.0 + eps)) <= c.zd_ell;
    case Rule::chernoff:
      // M_B(z, z/(1+eps)) is defined by its limit 0 at z = 0 (the lemma
      // behind the z_ell roots), so k = 0 never stops
      if (k == 0) return false;
      return mb(phat, phat / (1.0 + eps)) <= lnzd / n;
    case Rule::massart:
      return phat >= 6.0 * (1.0 + eps) * (3.0 + eps) * lnzd /
                         (2.0 * (3.0 + eps) * (3.0 + eps) * lnzd - 9.0 * n * eps * eps);
    default:
      throw std::logic_error("binomial-rel: unsupported rule");
  }
}

inline bool stop_poisson(const StageContext& c, std::int64_t k) {
  double n = (double)c.value;
  double lhat = (double)k / n;
  double lnzd = std::log(c.zd_ell);
  double ea = c.spec.eps_a, er = c.spec.eps_r;
  switch (c.family) {
    case Family::poisson_abs:
      if (c.rule == Rule::cdf) {
        double up = lhat + ea, dn = lhat - ea;
        double F = poisson_cdf(k, n * up);
        double G = dn < 0.0 ? 0.0 : poisson_sf(k, n * dn);
        return F <= c.zd_ell && G <= c.zd_ell;
      }
      return mp(lhat, lhat + ea) <= lnzd / n;
    case Family::poisson_rel:
      if (c.rule == Rule::cdf) {
        double F = poisson_cdf(k, n * lhat / (1.0 - er));
        double G = lhat == 0.0 ? 1.0 : poisson_sf(k, n * lhat / (1.0 + er));
        return F <= c.zd_ell && G <= c.zd_ell;
      }
      return lhat >= lnzd / n * (1.0 + er) / (er - (1.0 + er) * std::log(1.0 + er));
    case Family::poisson_mix:
      if (c.rule == Rule::cdf) {
        double U = mix_upper(lhat, ea, er), L = mix_lower(lhat, ea, er);
        double F = poisson_cdf(k, n * U);
        double G = L < 0.0 ? 0.0 : poisson_sf(k, n * L);
        return F <= c.zd_ell && G <= c.zd_ell;
      }
      if (c.rule == Rule::asymptotic) {
        double m = std::max(ea * ea, er * er * lhat * lhat);
        return n >= lhat * 2.0 * std::log(1.0 / c.zd_ell) / m;
      }
      return std::max(mp(lhat, mix_lower(lhat, ea, er)), mp(lhat, mix_upper(lhat, ea, er))) <=
             lnzd / n;
    default:
      throw std::logic_error("stop_poisson: not a poisson family");
  }
}

inline bool stop_finite_pop(const StageContext& c, std::int64_t k) {
  std::int64_t n = c.value, N = c.population;
  double phat = (double)k / (double)n;
  ErrorKind kind = c.spec.kind;
  double ea = c.spec.eps_a, er = c.spec.eps_r;
  double L = finite_lower(phat, kind, ea, er, N);
  double U = finite_upper(phat, kind, ea, er, N);
  switch (c.rule) {
    case Rule::cdf:
      return hyper_sf(k, n, L, N) <= c.zd_ell && hyper_cdf(k, n, U, N) <= c.zd_ell;
    case Rule::chen_bound: {
      double bl = L < 0.0 ? 0.0 : chen_hyper_bound(phat, L, n, N);
      double bu = U > 1.0 ? 0.0 : chen_hyper_bound(phat, U, n, N);
      return bl <= c.zd_ell && bu <= c.zd_ell;
    }
    case Rule::normal_approx: {
      double z = normal_upper_quantile(c.zd_ell);
      double lhs = z * z * ((double)N / (double)n - 1.0);
      double rhs_scale = (double)(N - 1);
      switch (kind) {
        case ErrorKind::absolute:
          return lhs * phat * (1.0 - phat) <= rhs_scale * ea * ea;
        case ErrorKind::relative:
          return lhs * (1.0 - phat) <= rhs_scale * er * er * phat;
        default:
          return lhs * phat * (1.0 - phat) <=
                 rhs_scale * std::max(ea * ea, er * er * phat * phat);
      }
    }
    default:
      throw std::logic_error("finite-pop: unsupported rule");
  }
}

inline bool stop_bwci(const StageContext& c, std::int64_t k) {
  if (c.family == Family::bwci_explicit) {
    double n = (double)c.value, eps = c.spec.eps_a;
    double phat = (double)k / n;
    double lnzd = std::log(c.zd_ell);
    double lhs = 1.0 - 9.0 * n / (2.0 * lnzd) * phat * (1.0 - phat);
    double bracket = 4.0 / 3.0 - 3.0 * n / (2.0 * lnzd);
    return lhs <= eps * eps * bracket * bracket;
  }
  auto [L, U] = bwci_limits(c.family, k, c.value, c.zd_ell);
  return U - L <= 2.0 * c.spec.eps_a;
}

inline bool stop_at(const StageContext& c, std::int64_t k) {
  switch (c.family) {
    case Family::binomial_abs: return stop_binomial_abs(c, k);
    case Family::binomial_mix: return stop_binomial_mix(c, k);
    case Family::binomial_rel: return stop_binomial_rel(c, k);
    case Family::binomial_rel_inverse: return stop_binomial_rel_inverse(c, k);
    case Family::poisson_abs:
    case Family::poisson_rel:
    case Family::poisson_mix: return stop_poisson(c, k);
    case Family::finite_pop_abs:
    case Family::finite_pop_rel:
    case Family::finite_pop_mix: return stop_finite_pop(c, k);
    case Family::bwci_cp:
    case Family::bwci_fishman:
    case Family::bwci_explicit: return stop_bwci(c, k);
    default:
      throw std::logic_error("stop_at: bounded-mean plans use bounded_mean_decision");
  }
}

}  // namespace detail

/// Direct evaluation of the stage-ell stopping display at sample sum k (or
/// sample count for inverse plans); bypasses the stored boundary. The final
/// stage of a finite-s design stops surely regardless of the display.
inline bool stop_by_rule(const Plan& plan, int ell, std::int64_t k) {
  if (!plan.infinite_design() && ell >= plan.stages()) return true;
  detail::StageContext c{plan.family, plan.rule, plan.spec,
                         plan.zeta * plan.schedule.delta_ell(ell), plan.stage_value(ell),
                         plan.opts.population};
  return detail::stop_at(c, k);
}

// ---------------------------------------------------------------------------
// bounded-variable mean decisions (no K-interval reduction; the sample mean
// is continuous). mu_hat must lie in the declared range.

struct BoundedDecision {
  bool stop = false;
  double lower = 0.0, upper = 0.0;  // terminal interval when stopping
};

inline BoundedDecision bounded_mean_decision(double mu_hat, std::int64_t n_or_gamma_count,
                                             const ErrorSpec& spec, Family family, Rule rule,
                                             double zd_ell, double lo = 0.0, double hi = 1.0,
                                             std::int64_t gamma = 0) {
  if (!(mu_hat >= lo - 1e-12 && mu_hat <= hi + 1e-12))
    throw std::invalid_argument("bounded_mean_decision: sample mean outside declared range");
  double lnzd = std::log(zd_ell);
  BoundedDecision out;
  switch (family) {
    case Family::bounded_mean_abs: {
      double eps = spec.eps_a, n = (double)n_or_gamma_count;
      if (rule == Rule::massart) {
        double lhs = std::abs(mu_hat - 0.5) - 2.0 * eps / 3.0;
        out.stop = lhs * lhs >= 0.25 + eps * eps * n / (2.0 * lnzd);
      } else {
        double zf = 0.5 - std::abs(0.5 - mu_hat);
        out.stop = mb(zf, zf + eps) <= lnzd / n;
      }
      out.lower = mu_hat - eps;
      out.upper = mu_hat + eps;
      return out;
    }
    case Family::bounded_mean_rel: {
      // inverse sampling: n_or_gamma_count is the running sample count, the
      // threshold gamma is real-valued; both the n and n-1 displays must hold
      double eps = spec.eps_r, n = (double)n_or_gamma_count, g = (double)gamma;
      double z1 = g / n, z2 = g / (n - 1.0);
      if (rule == Rule::massart) {
        out.stop = mfun(std::min(1.0, z1), z1 / (1.0 + eps)) <= lnzd / n &&
                   mfun(std::min(1.0, z2), g / (n * (1.0 - eps))) <= lnzd / (n - 1.0);
      } else {
        out.stop = mb(std::min(1.0, z1), z1 / (1.0 + eps)) <= lnzd / n &&
                   mb(std::min(1.0, z2), g / (n * (1.0 - eps))) <= lnzd / (n - 1.0);
      }
      out.lower = z1 / (1.0 + eps);
      out.upper = z1 / (1.0 - eps);
      return out;
    }
    case Family::bounded_mean_mix: {
      double ea = spec.eps_a, er = spec.eps_r, n = (double)n_or_gamma_count;
      double width = hi - lo;
      // the stated transform for [a, b]-valued variables
      double mt = lo + mu_hat / width;
      double ml = lo + mix_lower(mu_hat, ea, er) / width;
      double mu = lo + mix_upper(mu_hat, ea, er) / width;
      if (lo == 0.0 && hi == 1.0) {
        mt = mu_hat;
        ml = mix_lower(mu_hat, ea, er);
        mu = mix_upper(mu_hat, ea, er);
      }
      if (rule == Rule::massart)
        out.stop = mfun(mt, ml) <= lnzd / n && mfun(mt, mu) <= lnzd / n;
      else
        out.stop = mb(mt, ml) <= lnzd / n && mb(mt, mu) <= lnzd / n;
      out.lower = mix_lower(mu_hat, ea, er);
      out.upper = mix_upper(mu_hat, ea, er);
      return out;
    }
    default:
      throw std::logic_error("bounded_mean_decision: not a bounded-mean family");
  }
}

// ---------------------------------------------------------------------------
// schedules

namespace detail {

struct CSetResult {
  int tau = 0;
  bool single_stage = false;
  std::vector<std::int64_t> values;
};

// Ascending deduplicated {ceil(C_{tau-ell} * base)}; tau = max integer with
// C_{tau-1} >= ratio_lo. extra_stages > 0 extends past tau for infinite
// designs (C_{tau-ell} keeps growing by rho per stage).
inline CSetResult c_set_schedule(double base, double ratio_lo, double rho, int extra_stages) {
  CSetResult r;
  if (!(base > 0.0) || !std::isfinite(base)) throw std::logic_error("schedule base not positive");
  if (ratio_lo > 1.0 || !(ratio_lo > 0.0)) {
    r.tau = ratio_lo > 1.0 ? 0 : 1;
    r.single_stage = true;
    r.values = {(std::int64_t)std::ceil(base - 1e-9)};
    return r;
  }
  r.tau = 1 + (int)std::floor(std::log(1.0 / ratio_lo) / std::log(rho) + 1e-12);
  for (int ell = 1; ell <= r.tau + extra_stages; ++ell) {
    double c = std::pow(rho, (double)(ell - r.tau));
    double v = std::ceil(c * base - 1e-9);
    if (v < 1.0) v = 1.0;
    std::int64_t iv = (std::int64_t)v;
    if (r.values.empty() || iv > r.values.back()) r.values.push_back(iv);
  }
  r.single_stage = r.values.size() == 1;
  return r;
}

// stages materialized past tau: ell* = tau + 1 + ceil(ln(zeta delta / eta)/ln 2)
inline int horizon_extra(double zeta, double delta, double eta) {
  if (eta >= zeta * delta) return 1;
  return 1 + (int)std::ceil(std::log(zeta * delta / eta) / std::log(2.0));
}

}  // namespace detail

// forward declarations used by schedule search
inline std::vector<IntInterval> build_stage_continue_set(const detail::StageContext& c,
                                                         StageBoundary& flags);

namespace detail {

// Smallest n in [1, hint] whose stage continue-set is empty (sure stop for
// every k); binary search with a local linear polish.
inline std::int64_t smallest_sure_stop_n(StageContext c, std::int64_t hint) {
  auto all_stop = [&](std::int64_t n) {
    c.value = n;
    StageBoundary fl;
    return build_stage_continue_set(c, fl).empty();
  };
  std::int64_t hi = std::max<std::int64_t>(1, hint);
  while (!all_stop(hi)) hi *= 2;
  std::int64_t lo = 1;
  while (hi - lo > 1) {
    std::int64_t mid = lo + (hi - lo) / 2;
    (all_stop(mid) ? hi : lo) = mid;
  }
  std::int64_t n = all_stop(lo) ? lo : hi;
  while (n > 1 && all_stop(n - 1)) --n;
  while (!all_stop(n)) ++n;
  return n;
}

// Largest n such that every k continues (the {D_ell = 1} = empty-set side);
// returns 0 when even n = 1 can stop.
inline std::int64_t largest_all_continue_n(StageContext c, std::int64_t cap) {
  auto none_stop = [&](std::int64_t n) {
    c.value = n;
    StageBoundary fl;
    return intervals_count(build_stage_continue_set(c, fl)) >= n + 1;
  };
  std::int64_t n = 0;
  for (std::int64_t cand = 1; cand <= cap; ++cand) {
    if (none_stop(cand))
      n = cand;
    else
      break;
  }
  return n;
}

}  // namespace detail

/// Builds the stage schedule for (family, rule, spec, zeta) with
/// C_ell = rho^-ell. tau comes from the family-specific maximal-integer
/// condition; a collapsed schedule is flagged single_stage.
inline Schedule build_schedule(Family family, Rule rule, const ErrorSpec& spec, double zeta,
                               const PlanOptions& opts = {}) {
  validate_spec(family, rule, spec);
  if (!(zeta > 0.0 && zeta * spec.delta < 1.0))
    throw std::invalid_argument("requires 0 < zeta*delta < 1");
  double zd = zeta * spec.delta;
  double L = std::log(1.0 / zd);  // ln(1/(zeta delta)) > 0
  double rho = opts.rho;

  Schedule sch;
  sch.rho = rho;
  sch.delta = spec.delta;

  double base = 0.0, ratio = 0.0;
  bool infinite = false;

  switch (family) {
    case Family::binomial_abs: {
      double eps = spec.eps_a;
      if (rule == Rule::cdf) {
        detail::StageContext c{family, rule, spec, zd, 0, 0};
        std::int64_t nmax =
            detail::smallest_sure_stop_n(c, (std::int64_t)std::ceil(L / (2 * eps * eps)) + 2);
        double nmin = std::log(zd) / std::log(1.0 - eps);
        base = (double)nmax;
        ratio = nmin / base;
      } else if (rule == Rule::massart) {
        base = L / (2.0 * eps * eps);
        ratio = (24.0 * eps - 16.0 * eps * eps) / 9.0;
      } else if (rule == Rule::asymptotic) {
        base = L / (2.0 * eps * eps);
        ratio = 2.0 * eps;
      } else {  // chernoff
        base = L / (2.0 * eps * eps);
        ratio = 2.0 * eps * eps / std::log(1.0 / (1.0 - eps));
      }
      break;
    }
    case Family::binomial_rel_inverse:
    case Family::bounded_mean_rel: {
      double eps = spec.eps_r;
      sch.kind = ScheduleKind::thresholds;
      if (rule == Rule::massart) {
        base = 2.0 * (1.0 / eps + 1.0) * (1.0 / eps + 1.0 / 3.0) * L;
        ratio = 2.0 * eps / (3.0 * (1.0 + eps));
      } else if (rule == Rule::asymptotic) {
        base = 2.0 * L / (eps * eps);
        ratio = eps / 2.0;
      } else {  // cdf and chernoff share (THolds)
        base = (1.0 + eps) * std::log(zd) / (eps - (1.0 + eps) * std::log(1.0 + eps));
        ratio = 1.0 - eps / ((1.0 + eps) * std::log(1.0 + eps));
      }
      if (family == Family::bounded_mean_rel)  // gamma_1 > 1/eps
        ratio = std::max(ratio, (1.0 / eps + 1.0) / base);
      break;
    }
    case Family::binomial_rel: {
      double eps = spec.eps_r, p = opts.design_point;
      infinite = true;
      base = std::log(zd) / mb(p, p / (1.0 + eps));
      ratio = -mb(p, p / (1.0 + eps)) / std::log(1.0 + eps);
      break;
    }
    case Family::binomial_mix: {
      double ea = spec.eps_a, er = spec.eps_r, ps = ea / er;
      if (rule == Rule::massart) {
        double f = 1.0 / ea - 1.0 / er - 1.0 / 3.0;
        base = 2.0 * f * (1.0 / er + 1.0 / 3.0) * L;
        ratio = (2.0 / 3.0) / f;
      } else if (rule == Rule::asymptotic) {
        if (!(ea < er / 2.0))
          throw std::invalid_argument("requires eps_a < eps_r/2 for the asymptotic rule");
        base = 2.0 * (1.0 / ea - 1.0 / er) * L / er;
        ratio = 1.0 / (2.0 / ea - 2.0 / er);
      } else {
        base = std::log(zd) / mb(ps + ea, ps);
        ratio = -mb(ps + ea, ps) / std::log(1.0 + er);
      }
      break;
    }
    case Family::poisson_abs: {
      infinite = true;
      double ls = opts.lambda_bar;
      base = std::log(zd) / mp(ls, ls + spec.eps_a);
      ratio = -mp(ls, ls + spec.eps_a) / spec.eps_a;
      break;
    }
    case Family::poisson_rel: {
      infinite = true;
      double lo = opts.lambda_low > 0.0 ? opts.lambda_low : std::min(1.0, opts.lambda_bar / 8.0);
      double hi = opts.lambda_bar, er = spec.eps_r;
      base = std::log(zd) / mp(lo, lo / (1.0 + er));
      ratio = mp(lo, lo / (1.0 + er)) / mp(hi, hi / (1.0 + er));
      break;
    }
    case Family::poisson_mix: {
      double ea = spec.eps_a, er = spec.eps_r, ls = ea / er;
      if (rule == Rule::asymptotic) {
        base = 2.0 * L / er;
        ratio = er / 2.0;
      } else {
        base = std::log(zd) / mp(ls + ea, ls);
        ratio = -mp(ls + ea, ls) / ea;
      }
      break;
    }
    case Family::bounded_mean_abs: {
      double eps = spec.eps_a;
      base = L / (2.0 * eps * eps);
      ratio = rule == Rule::massart ? (24.0 * eps - 16.0 * eps * eps) / 9.0
                                    : 2.0 * eps * eps / std::log(1.0 / (1.0 - eps));
      break;
    }
    case Family::bounded_mean_mix: {
      double ea = spec.eps_a, er = spec.eps_r, ps = ea / er;
      double width = opts.bounded_hi - opts.bounded_lo;
      if (width != 1.0) {
        base = width * width * L / (2.0 * ea * ea);
        ratio = 2.0 * ea * ea / (width * width);  // down to n_min ~ L
      } else if (rule == Rule::massart) {
        double f = 1.0 / ea - 1.0 / er - 1.0 / 3.0;
        base = 2.0 * f * (1.0 / er + 1.0 / 3.0) * L;
        ratio = (2.0 / 3.0) / f;
      } else {
        base = std::log(zd) / mb(ps + ea, ps);
        ratio = -mb(ps + ea, ps) / std::log(1.0 + er);
      }
      break;
    }
    case Family::finite_pop_abs:
    case Family::finite_pop_rel:
    case Family::finite_pop_mix: {
      std::int64_t N = opts.population;
      if (N <= 1) throw std::invalid_argument("finite-pop families need population N >= 2");
      if (rule == Rule::normal_approx) {
        double Z = normal_upper_quantile(zd);
        double Nd = (double)N;
        if (family == Family::finite_pop_abs) {
          base = Nd / (1.0 + 4.0 * (Nd - 1.0) * spec.eps_a * spec.eps_a / (Z * Z));
        } else if (family == Family::finite_pop_rel) {
          base = Nd;
        } else {
          double ps = spec.eps_a / spec.eps_r;
          base = Nd * ps * (1.0 - ps) /
                 (ps * (1.0 - ps) + (Nd - 1.0) * spec.eps_a * spec.eps_a / (Z * Z));
        }
        if (opts.tau_override > 0) {
          ratio = std::pow(rho, -(double)(opts.tau_override - 1));
        } else {
          detail::StageContext c{family, rule, spec, zd, 0, N};
          std::int64_t nmin = detail::largest_all_continue_n(c, N) + 1;
          ratio = (double)nmin / base;
        }
      } else {
        detail::StageContext c{family, rule, spec, zd, 0, N};
        std::int64_t nmax = detail::smallest_sure_stop_n(c, N);
        std::int64_t nmin = detail::largest_all_continue_n(c, nmax) + 1;
        base = (double)nmax;
        ratio = (double)nmin / base;
      }
      break;
    }
    case Family::bwci_fishman: {
      double eps = spec.eps_a;
      base = L / (2.0 * eps * eps);
      ratio = 2.0 * eps * eps / std::log(1.0 / (1.0 - 2.0 * eps));
      break;
    }
    case Family::bwci_explicit: {
      double eps = spec.eps_a;
      base = (1.0 / (2.0 * eps * eps) - 8.0 / 9.0) * L;
      ratio = 4.0 * eps / (3.0 + 4.0 * eps);
      break;
    }
    case Family::bwci_cp: {
      double eps = spec.eps_a;
      detail::StageContext c{family, rule, spec, zd, 0, 0};
      std::int64_t nmax =
          detail::smallest_sure_stop_n(c, (std::int64_t)std::ceil(L / (2 * eps * eps)) + 2);
      // narrowest interval over k is the one-sided k = 0 case
      double nmin = std::log(zd) / std::log(1.0 - 2.0 * eps);
      base = (double)nmax;
      ratio = nmin / base;
      break;
    }
  }

  int extra = infinite ? detail::horizon_extra(zeta, spec.delta, opts.eta_horizon) : 0;
  detail::CSetResult cs = detail::c_set_schedule(base, ratio, rho, extra);
  sch.tau = cs.tau;
  sch.single_stage = cs.single_stage;
  sch.values = std::move(cs.values);
  sch.infinite = infinite;
  sch.horizon = infinite ? (int)sch.values.size() : 0;

  // finite-population sizes never exceed N
  if (opts.population > 0)
    for (auto& v : sch.values) v = std::min(v, opts.population);

  return sch;
}

// ---------------------------------------------------------------------------
// boundary construction

namespace detail {

// Walks every candidate endpoint against the display so the returned set is
// exactly {k : D_ell(k) = 0} within [klo, khi].
inline std::vector<IntInterval> fix_boundary(const StageContext& c,
                                             std::vector<IntInterval> cands, std::int64_t klo,
                                             std::int64_t khi) {
  auto cont = [&](std::int64_t k) { return !stop_at(c, k); };
  std::vector<IntInterval> out;
  for (auto iv : cands) {
    iv.lo = std::max(iv.lo, klo);
    iv.hi = std::min(iv.hi, khi);
    if (iv.empty()) {
      // the roots may have collapsed the candidate by a point; reseed from
      // the midpoint if it still continues
      std::int64_t mid = std::clamp((iv.lo + iv.hi) / 2, klo, khi);
      if (!cont(mid)) continue;
      iv = {mid, mid};
    }
    if (!cont(iv.lo) && !cont(iv.hi)) {
      // scan for any surviving point (candidate may be entirely stale)
      std::int64_t found = -1;
      for (std::int64_t k = iv.lo; k <= iv.hi; ++k)
        if (cont(k)) {
          found = k;
          break;
        }
      if (found < 0) continue;
      iv = {found, found};
    }
    if (!cont(iv.lo)) {
      while (iv.lo < iv.hi && !cont(iv.lo)) ++iv.lo;
    } else {
      while (iv.lo > klo && cont(iv.lo - 1)) --iv.lo;
    }
    if (!cont(iv.hi)) {
      while (iv.hi > iv.lo && !cont(iv.hi)) --iv.hi;
    } else {
      while (iv.hi < khi && cont(iv.hi + 1)) ++iv.hi;
    }
    if (cont(iv.lo) && cont(iv.hi)) out.push_back(iv);
  }
  return normalize_intervals(std::move(out));
}

inline IntInterval open_real_to_int(double lo, double hi) {
  // integer points strictly inside (lo, hi)
  return {(std::int64_t)std::floor(lo) + 1, (std::int64_t)std::ceil(hi) - 1};
}

// z* of the binomial absolute-error boundary theorem: the critical point of
// M_B(z, z + eps) on (1/2 - eps, 1/2); g below is its z-derivative.
inline double binom_abs_zstar(double eps) {
  auto g = [&](double z) {
    return std::log((z + eps) * (1.0 - z) / (z * (1.0 - z - eps))) -
           eps / ((z + eps) * (1.0 - z - eps));
  };
  double lo = 0.5 - eps + 1e-13, hi = 0.5 - 1e-13;
  RootResult r = bisect_monotone_clamped(g, lo, hi, 0.0, 1e-13);
  return r.value;
}

inline std::vector<IntInterval> continue_binomial_abs(const StageContext& c, StageBoundary& fl) {
  std::int64_t n = c.value;
  double eps = c.spec.eps_a, t = std::log(c.zd_ell) / (double)n;
  if (c.rule == Rule::cdf) {
    // no closed-form roots: linear scan, runs collected directly
    std::vector<IntInterval> runs;
    for (std::int64_t k = 0; k <= n; ++k) {
      if (!stop_at(c, k)) {
        if (!runs.empty() && runs.back().hi == k - 1)
          runs.back().hi = k;
        else
          runs.push_back({k, k});
      }
    }
    return runs;
  }
  std::vector<IntInterval> cands;
  if (c.rule == Rule::chernoff) {
    // M_B(z, z+eps) rises from ln(1-eps) to its maximum at z*, then falls
    // to -inf at 1-eps; the continue region is where it exceeds t.
    double zs = binom_abs_zstar(eps);
    if (mb(zs, zs + eps) <= t) return {};  // n at or past the cap: sure stop
    auto f = [&](double z) { return mb(z, z + eps); };
    RootResult zl = bisect_monotone_clamped(f, 0.0, zs, t, 1e-13, 1e-12);
    RootResult zh = bisect_monotone_clamped(f, zs, 1.0 - eps, t, 1e-13, 1e-12);
    fl.lo_clamped = zl.clamped();
    fl.hi_clamped = zh.clamped();
    double zlo = zl.clamped() ? 0.0 : zl.value;       // no left root: continue from k = 0
    double zhi = zh.clamped() ? 1.0 - eps : zh.value;
    double nl = (double)n;
    IntInterval left = open_real_to_int(nl * zlo, nl * zhi);
    IntInterval right = open_real_to_int(nl * (1.0 - zhi), nl * (1.0 - zlo));
    if (zl.clamped()) {  // edges continue too
      left.lo = 0;
      right.hi = n;
    }
    cands.push_back(left);
    cands.push_back(right);
  } else {
    // massart / asymptotic: symmetric bands around 1/2 from the quadratic;
    // both rules share R = 1/4 + eps^2 n / (2 ln(zeta delta))
    double R = 0.25 + eps * eps * (double)n / (2.0 * std::log(c.zd_ell));
    if (R < 0.0) return {};
    double s = std::sqrt(R);
    double off = c.rule == Rule::massart ? 2.0 * eps / 3.0 : 0.0;
    double nl = (double)n;
    if (off - s > 0.0) {
      cands.push_back(open_real_to_int(nl * (0.5 - off - s), nl * (0.5 - off + s)));
      cands.push_back(open_real_to_int(nl * (0.5 + off - s), nl * (0.5 + off + s)));
    } else {
      cands.push_back(open_real_to_int(nl * (0.5 - off - s), nl * (0.5 + off + s)));
    }
  }
  return fix_boundary(c, std::move(cands), 0, n);
}

inline std::vector<IntInterval> continue_binomial_mix(const StageContext& c, StageBoundary& fl) {
  std::int64_t n = c.value;
  double nd = (double)n, ea = c.spec.eps_a, er = c.spec.eps_r, ps = ea / er;
  double lnzd = std::log(c.zd_ell), t = lnzd / nd;
  if (c.rule == Rule::cdf || c.rule == Rule::massart || c.rule == Rule::asymptotic) {
    // closed-form or scan: candidates from the display bands, then fix
    std::vector<IntInterval> cands;
    if (c.rule == Rule::massart) {
      double R = 0.25 + nd * ea * ea / (2.0 * lnzd);
      if (R < 0.0) return {};  // display has no real band: every k stops
      double s = std::sqrt(R);
      double lo1 = 0.5 - 2.0 * ea / 3.0 - s;
      double hi1 = 6.0 * (1.0 - er) * (3.0 - er) * lnzd /
                   (2.0 * (3.0 - er) * (3.0 - er) * lnzd - 9.0 * nd * er * er);
      double lo2 = 0.5 + 2.0 * ea / 3.0 - s;
      double hi2 = 6.0 * (1.0 + er) * (3.0 + er) * lnzd /
                   (2.0 * (3.0 + er) * (3.0 + er) * lnzd - 9.0 * nd * er * er);
      cands.push_back(open_real_to_int(nd * lo1, nd * hi1));
      cands.push_back(open_real_to_int(nd * lo2, nd * hi2));
      return fix_boundary(c, std::move(cands), 0, n);
    }
    // cdf / asymptotic: full scan (cdf has no roots; asymptotic is cheap)
    std::vector<IntInterval> runs;
    for (std::int64_t k = 0; k <= n; ++k) {
      if (!stop_at(c, k)) {
        if (!runs.empty() && runs.back().hi == k - 1)
          runs.back().hi = k;
        else
          runs.push_back({k, k});
      }
    }
    return runs;
  }
  // chernoff: the four-root structure
  std::vector<IntInterval> cands;
  // lower-limit block {n z_a^- < K < n z_r^+}
  {
    auto fa = [&](double z) { return mb(z, z - ea); };      // increasing from -inf
    auto fr = [&](double z) { return mb(z, z / (1.0 + er)); };  // decreasing
    if (mb(ps + ea, ps) > t) {
      RootResult za = bisect_monotone_clamped(fa, ea, ps + ea, t, 1e-13, 1e-12);
      RootResult zr = bisect_monotone_clamped(fr, ps + ea, 1.0, t, 1e-13, 1e-12);
      fl.hi_clamped = zr.clamped();
      IntInterval iv = open_real_to_int(nd * za.value, nd * zr.value);
      if (zr.clamped() && zr.clamp == RootClamp::at_hi) iv.hi = n;
      cands.push_back(iv);
    }
  }
  // upper-limit block, three cases in n
  double n_lo_case = std::log(c.zd_ell) / std::log(1.0 - ea);
  double n_hi_case = std::log(c.zd_ell) / mb(ps - ea, ps);
  if (nd < n_hi_case) {
    auto fr = [&](double z) { return mb(z, z / (1.0 - er)); };  // decreasing to -inf
    RootResult zr = bisect_monotone_clamped(fr, ps - ea, 1.0 - er, t, 1e-13, 1e-12);
    if (nd < n_lo_case) {
      cands.push_back({0, open_real_to_int(0.0, nd * zr.value).hi});
    } else {
      auto fa = [&](double z) { return mb(z, z + ea); };  // decreasing on [0, ps-ea)
      RootResult za = bisect_monotone_clamped(fa, 0.0, ps - ea, t, 1e-13, 1e-12);
      cands.push_back(open_real_to_int(nd * za.value, nd * zr.value));
    }
  }
  return fix_boundary(c, std::move(cands), 0, n);
}

inline std::vector<IntInterval> continue_binomial_rel(const StageContext& c, StageBoundary& fl) {
  std::int64_t n = c.value;
  double nd = (double)n, eps = c.spec.eps_r, t = std::log(c.zd_ell) / nd;
  if (c.rule == Rule::cdf) {
    // the continue-set is the prefix below the first stop; its end stays
    // O(ln(1/zd)) even at horizon stages, so scan upward and snap past any
    // isolated display-noise flips in the verify window
    std::int64_t k = 0;
    while (k <= n && !stop_at(c, k)) ++k;
    for (std::int64_t j = k; j < std::min(n + 1, k + 64); ++j)
      if (!stop_at(c, j)) k = j + 1;
    if (k == 0) return {};
    return {{0, k - 1}};
  }
  double z;
  if (c.rule == Rule::massart) {
    z = 6.0 * (1.0 + eps) * (3.0 + eps) * std::log(c.zd_ell) /
        (2.0 * (3.0 + eps) * (3.0 + eps) * std::log(c.zd_ell) - 9.0 * nd * eps * eps);
  } else {
    // the composition takes its limit 0 at z = 0; decreasing to ln 1/(1+eps)
    auto f = [&](double zz) { return zz == 0.0 ? 0.0 : mb(zz, zz / (1.0 + eps)); };
    RootResult r = bisect_monotone_clamped(f, 0.0, 1.0, t, 1e-13, 1e-12);
    fl.hi_clamped = r.clamped();
    if (r.clamped() && r.clamp == RootClamp::at_hi) return fix_boundary(c, {{0, n}}, 0, n);
    z = r.value;
  }
  std::int64_t hi_cand = std::min<std::int64_t>(n, (std::int64_t)std::ceil(nd * z) - 1);
  return fix_boundary(c, {{0, hi_cand}}, 0, n);
}

// inverse sampling: continue-set over the stage sample count, unbounded above
inline std::vector<IntInterval> continue_binomial_rel_inverse(const StageContext& c,
                                                              StageBoundary& fl) {
  std::int64_t gamma = c.value;
  double g = (double)gamma, eps = c.spec.eps_r, t = std::log(c.zd_ell) / g;
  double z = 0.0;
  if (c.rule == Rule::chernoff) {
    auto f = [&](double zz) { return mi(zz, zz / (1.0 + eps)); };  // decreasing on (0, 1]
    RootResult r = bisect_monotone_clamped(f, 1e-12, 1.0, t, 1e-13, 1e-12);
    if (r.clamp == RootClamp::at_hi) {  // t below the range: rule holds nowhere
      fl.unbounded_above = true;
      return {{gamma, std::numeric_limits<std::int64_t>::max() / 2}};
    }
    if (r.clamp == RootClamp::at_lo) return {};  // t above the range: sure stop
    z = r.value;
  } else if (c.rule == Rule::massart) {
    z = 1.0 + 2.0 * eps / (3.0 + eps) +
        9.0 * eps * eps * g / (2.0 * (3.0 + eps) * (3.0 + eps) * std::log(c.zd_ell));
  } else if (c.rule == Rule::asymptotic) {
    z = 1.0 - eps * eps * g / (2.0 * std::log(1.0 / c.zd_ell));
  } else {  // cdf: scan sample counts from gamma upward for the first continue
    std::int64_t ncur = gamma;
    while (stop_at(c, ncur)) ++ncur;
    fl.unbounded_above = true;
    return {{ncur, std::numeric_limits<std::int64_t>::max() / 2}};
  }
  if (z <= 0.0) return {};  // threshold out of range: stop everywhere
  std::int64_t first = (std::int64_t)std::floor(g / z) + 1;
  first = std::max(first, gamma);
  // walk against the display
  while (first > gamma && !stop_at(c, first - 1)) --first;
  while (stop_at(c, first)) ++first;
  fl.unbounded_above = true;
  return {{first, std::numeric_limits<std::int64_t>::max() / 2}};
}

// bounded upper endpoint walk for rules whose continue-set is [0, hi]
inline std::vector<IntInterval> fix_upper_cap(const StageContext& c, std::int64_t hi_guess) {
  std::int64_t hi = std::max<std::int64_t>(-1, hi_guess);
  while (hi >= 0 && stop_at(c, hi)) --hi;
  while (!stop_at(c, hi + 1)) ++hi;
  if (hi < 0) return {};
  return {{0, hi}};
}

inline std::vector<IntInterval> continue_poisson(const StageContext& c, StageBoundary& fl) {
  std::int64_t n = c.value;
  double nd = (double)n, ea = c.spec.eps_a, er = c.spec.eps_r;
  double lnzd = std::log(c.zd_ell), t = lnzd / nd;
  const std::int64_t kmax_sentinel = std::numeric_limits<std::int64_t>::max() / 2;
  const std::int64_t guard = 64;  // window confirming tail behavior of scans

  switch (c.family) {
    case Family::poisson_abs: {
      // stop for small sample means only; continue-set unbounded above
      std::int64_t first = 0;
      if (c.rule == Rule::cdf) {
        // seed from the Chernoff root: the exact-cdf rule stops at least
        // wherever the bound rule does, so its first continue is not lower
        if (t < 0.0 && t > -ea) {
          auto f = [&](double z) { return mp(z, z + ea); };
          double zhi = 4.0;
          while (f(zhi) < t) zhi *= 2.0;
          double z = bisect_monotone(f, 0.0, zhi, t, 1e-13);
          first = std::max<std::int64_t>(0, (std::int64_t)std::floor(nd * z));
          while (first > 0 && !stop_at(c, first - 1)) --first;
        }
        long steps = 1000000;
        while (stop_at(c, first)) {
          ++first;
          if (--steps == 0)
            throw std::runtime_error("poisson-abs cdf: first continue beyond the scan guard");
        }
      } else {
        // M_P(z, z + eps) increases from -eps to 0; stop iff lhat <= root
        if (t >= 0.0) return {};
        if (t <= -ea) {
          fl.unbounded_above = true;
          return {{0, kmax_sentinel}};
        }
        auto f = [&](double z) { return mp(z, z + ea); };
        double zhi = 4.0;
        while (f(zhi) < t) zhi *= 2.0;
        double z = bisect_monotone(f, 0.0, zhi, t, 1e-13, 1e-12);
        first = (std::int64_t)std::floor(nd * z) + 1;
        while (first > 0 && !stop_at(c, first - 1)) --first;
        while (stop_at(c, first)) ++first;
      }
      for (std::int64_t j = first; j < first + guard; ++j)
        if (stop_at(c, j)) first = j + 1;  // snap past display-noise flips
      fl.unbounded_above = true;
      return {{first, kmax_sentinel}};
    }
    case Family::poisson_rel: {
      // stop for large sample means; continue-set is [0, hi]
      std::int64_t hi;
      if (c.rule == Rule::cdf) {
        std::int64_t k = 0;
        while (!stop_at(c, k)) ++k;
        hi = k - 1;
      } else {
        double z = lnzd / nd * (1.0 + er) / (er - (1.0 + er) * std::log(1.0 + er));
        hi = (std::int64_t)std::ceil(nd * z) - 1;
      }
      auto runs = fix_upper_cap(c, hi);
      std::int64_t end = runs.empty() ? 0 : runs[0].hi + 1;
      for (std::int64_t j = end; j < end + guard; ++j)
        if (!stop_at(c, j)) {
          runs = {{0, j}};  // snap past display-noise flips
          end = j + 1;
        }
      return runs;
    }
    case Family::poisson_mix: {
      // bounded continue-set; cap the scan with the Chernoff z_r^+ root,
      // which dominates the cdf rule's continue region
      double cr_plus = er / (1.0 + er) - std::log(1.0 + er);  // M_P(z, z/(1+er)) = cr * z
      double cap_z = t / cr_plus;
      std::int64_t cap = (std::int64_t)std::ceil(nd * cap_z) + guard;
      if (c.rule == Rule::cdf || c.rule == Rule::asymptotic) {
        std::vector<IntInterval> runs;
        for (std::int64_t k = 0; k <= cap; ++k)
          if (!stop_at(c, k)) {
            if (!runs.empty() && runs.back().hi == k - 1)
              runs.back().hi = k;
            else
              runs.push_back({k, k});
          }
        if (!runs.empty() && runs.back().hi >= cap - 2)
          throw std::logic_error("poisson-mix: continue set exceeded its cap");
        return runs;
      }
      double ls = ea / er;
      std::vector<IntInterval> cands;
      // lower-limit block {n z_a^- < K < n z_r^+}
      if (mp(ls + ea, ls) > t) {
        auto fa = [&](double z) { return mp(z, z - ea); };  // increasing from -inf to 0
        RootResult za = bisect_monotone_clamped(fa, ea, ls + ea, t, 1e-13, 1e-12);
        cands.push_back(open_real_to_int(nd * za.value, nd * cap_z));
      }
      // upper-limit block, three cases in n
      double n_lo_case = std::log(1.0 / c.zd_ell) / ea;
      double n_hi_case = lnzd / mp(ls - ea, ls);
      if (nd < n_hi_case) {
        double cr_minus = 1.0 - 1.0 / (1.0 - er) - std::log(1.0 - er);
        double zr = t / cr_minus;
        if (nd < n_lo_case) {
          cands.push_back({0, open_real_to_int(0.0, nd * zr).hi});
        } else {
          auto fa = [&](double z) { return mp(z, z + ea); };  // increasing
          RootResult za = bisect_monotone_clamped(fa, 0.0, ls - ea, t, 1e-13, 1e-12);
          cands.push_back(open_real_to_int(nd * za.value, nd * zr));
        }
      }
      return fix_boundary(c, std::move(cands), 0, cap + guard);
    }
    default:
      throw std::logic_error("continue_poisson: not a poisson family");
  }
}

inline std::vector<IntInterval> continue_scan_full(const StageContext& c, std::int64_t n) {
  std::vector<IntInterval> runs;
  for (std::int64_t k = 0; k <= n; ++k)
    if (!stop_at(c, k)) {
      if (!runs.empty() && runs.back().hi == k - 1)
        runs.back().hi = k;
      else
        runs.push_back({k, k});
    }
  return runs;
}

inline std::vector<IntInterval> build_stage_continue_set_impl(const StageContext& c,
                                                              StageBoundary& fl) {
  switch (c.family) {
    case Family::binomial_abs: return continue_binomial_abs(c, fl);
    case Family::binomial_mix: return continue_binomial_mix(c, fl);
    case Family::binomial_rel: return continue_binomial_rel(c, fl);
    case Family::binomial_rel_inverse: return continue_binomial_rel_inverse(c, fl);
    case Family::poisson_abs:
    case Family::poisson_rel:
    case Family::poisson_mix: return continue_poisson(c, fl);
    case Family::finite_pop_abs:
    case Family::finite_pop_rel:
    case Family::finite_pop_mix:
    case Family::bwci_cp:
    case Family::bwci_fishman:
    case Family::bwci_explicit: return continue_scan_full(c, c.value);
    default:
      throw std::logic_error("build_stage_continue_set: bounded-mean plans have no K-boundary");
  }
}

}  // namespace detail

inline std::vector<IntInterval> build_stage_continue_set(const detail::StageContext& c,
                                                         StageBoundary& flags) {
  return detail::build_stage_continue_set_impl(c, flags);
}

// ---------------------------------------------------------------------------
// plan assembly

/// Guaranteed-coverage zeta for the family/schedule: 1/(2s) for finite-s
/// designs (complement <= 2 s zeta delta), 1/(2(tau+1)) for infinite ones.
inline double zeta_safe(Family family, const Schedule& schedule) {
  (void)family;
  if (schedule.infinite) return 1.0 / (2.0 * (double)(schedule.tau + 1));
  return 1.0 / (2.0 * (double)schedule.stages());
}

/// Builds boundaries for an already-built schedule (used by plan rebuilding
/// and by designs whose schedule is pinned externally).
inline std::vector<StageBoundary> build_boundaries(Family family, Rule rule,
                                                   const ErrorSpec& spec, double zeta,
                                                   const Schedule& schedule,
                                                   const PlanOptions& opts) {
  std::vector<StageBoundary> out;
  bool bounded_family = family == Family::bounded_mean_abs || family == Family::bounded_mean_rel ||
                        family == Family::bounded_mean_mix;
  for (int ell = 1; ell <= schedule.stages(); ++ell) {
    StageBoundary sb;
    sb.stage = ell;
    if (!bounded_family) {
      detail::StageContext c{family, rule, spec, zeta * schedule.delta_ell(ell),
                             schedule.values[(std::size_t)ell - 1], opts.population};
      sb.continue_set = build_stage_continue_set(c, sb);
    }
    if (!schedule.infinite && ell == schedule.stages()) {
      sb.forced_stop = true;
      sb.continue_set.clear();
      sb.unbounded_above = false;
    }
    out.push_back(std::move(sb));
  }
  return out;
}

inline Plan build_plan(Family family, Rule rule, const ErrorSpec& spec, double zeta,
                       const PlanOptions& opts = {}) {
  Plan p;
  p.family = family;
  p.rule = rule;
  p.spec = spec;
  p.zeta = zeta;
  p.opts = opts;
  p.schedule = build_schedule(family, rule, spec, zeta, opts);
  p.boundaries = build_boundaries(family, rule, spec, zeta, p.schedule, opts);
  return p;
}

// ---------------------------------------------------------------------------
// truncated inverse sampling (single-stage; stop at sum gamma or count m)

struct TruncatedInverseDesign {
  std::int64_t gamma = 0;
  std::int64_t m = 0;  // 0 for statement I (no count truncation)
};

/// Minimal (gamma, m) satisfying the cited sufficient conditions. statement:
/// 1 = relative error, untruncated bound on gamma only; 2 = mixed criterion
/// for [0,1]-valued variables; 3 = mixed criterion, Bernoulli samples.
inline TruncatedInverseDesign truncated_inverse_design(int statement, const ErrorSpec& spec) {
  auto strictly_above = [](double x) {
    // minimal integer strictly greater than x
    double f = std::floor(x);
    return (std::int64_t)f + 1;
  };
  TruncatedInverseDesign out;
  double delta = spec.delta;
  if (statement == 1) {
    double eps = spec.eps_r;
    if (!(eps > 0.0 && eps < 1.0))
      throw std::invalid_argument("statement I requires 0 < eps < 1");
    double denom = (1.0 + eps) * std::log(1.0 + eps) - eps;
    out.gamma = strictly_above((1.0 + eps) * std::log(2.0 / delta) / denom);
    return out;
  }
  double ea = spec.eps_a, er = spec.eps_r;
  if (!(ea > 0.0 && ea < er && er < 1.0))
    throw std::invalid_argument("requires 0 < eps_a < eps_r < 1");
  double ps = ea / er;
  if (!(ps + ea <= 0.5))
    throw std::invalid_argument("requires eps_a/eps_r + eps_a <= 1/2");
  double lnd2 = std::log(delta / 2.0);
  out.m = strictly_above(lnd2 / mb(ps + ea, ps));
  std::int64_t g = strictly_above(lnd2 / mi(ps + ea, ps));
  if (statement == 2) {
    g = std::max(g, strictly_above((1.0 - er) / er));
    // gamma > ln(delta/2) / M_I(gamma (p*-eps_a)/(gamma-1+eps_r), p*) is
    // implicit in gamma; scan upward from the closed-form floor
    auto ok = [&](std::int64_t gg) {
      double z = (double)gg * (ps - ea) / ((double)gg - 1.0 + er);
      double m_ = mi(z, ps);
      return (double)gg > lnd2 / m_;
    };
    while (!ok(g)) ++g;
  } else if (statement != 3) {
    throw std::invalid_argument("statement must be 1, 2 or 3");
  }
  out.gamma = g;
  return out;
}

// ---------------------------------------------------------------------------
// evaluation with the terminal random interval

struct Decision {
  bool stop = false;
  double theta_hat = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

/// Terminal interval (L, U) of a stop at stage ell with sample sum k (or
/// sample count for inverse plans).
inline std::pair<double, double> terminal_interval(const Plan& plan, int ell, std::int64_t k) {
  double theta_hat;
  std::int64_t stage_n = plan.stage_value(ell);
  if (plan.inverse_sampling())
    theta_hat = (double)stage_n / (double)k;
  else
    theta_hat = (double)k / (double)stage_n;

  switch (plan.family) {
    case Family::binomial_abs:
    case Family::poisson_abs:
    case Family::bounded_mean_abs:
      return {theta_hat - plan.spec.eps_a, theta_hat + plan.spec.eps_a};
    case Family::binomial_rel:
    case Family::binomial_rel_inverse:
    case Family::poisson_rel:
    case Family::bounded_mean_rel:
      return {theta_hat / (1.0 + plan.spec.eps_r), theta_hat / (1.0 - plan.spec.eps_r)};
    case Family::binomial_mix:
    case Family::poisson_mix:
    case Family::bounded_mean_mix:
      return {mix_lower(theta_hat, plan.spec.eps_a, plan.spec.eps_r),
              mix_upper(theta_hat, plan.spec.eps_a, plan.spec.eps_r)};
    case Family::finite_pop_abs:
    case Family::finite_pop_rel:
    case Family::finite_pop_mix:
      return {finite_lower(theta_hat, plan.spec.kind, plan.spec.eps_a, plan.spec.eps_r,
                           plan.opts.population),
              finite_upper(theta_hat, plan.spec.kind, plan.spec.eps_a, plan.spec.eps_r,
                           plan.opts.population)};
    case Family::bwci_cp:
    case Family::bwci_fishman:
    case Family::bwci_explicit:
      return bwci_limits(plan.family, k, stage_n, plan.zeta * plan.schedule.delta_ell(ell));
    default:
      throw std::logic_error("terminal_interval: unsupported family");
  }
}

/// Consults the stored stage boundary; on stop returns the estimate and the
/// family's random-interval endpoints.
inline Decision evaluate(const Plan& plan, int ell, std::int64_t k) {
  if (ell < 1 || ell > plan.stages()) throw std::out_of_range("evaluate: stage beyond schedule");
  const StageBoundary& sb = plan.boundaries[(std::size_t)ell - 1];
  Decision d;
  if (sb.continues(k)) return d;
  d.stop = true;
  std::int64_t stage_n = plan.stage_value(ell);
  d.theta_hat = plan.inverse_sampling() ? (double)stage_n / (double)k
                                        : (double)k / (double)stage_n;
  auto [L, U] = terminal_interval(plan, ell, k);
  d.lower = L;
  d.upper = U;
  return d;
}

}  // namespace seqplan
