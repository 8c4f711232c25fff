#pragma once

// Shared test helpers: hand-built plans with explicit boundaries, and
// brute-force oracles that enumerate every sample path. The oracles stay
// independent of the recursion code path they are used to check.

#include <cstdint>
#include <random>
#include <vector>

#include "seqplan/coverage.hpp"
#include "seqplan/rules.hpp"

namespace seqplan::testing {

/// A binomial plan with explicit stage sizes and continue-sets (the last
/// stage always stops). Interval maps come from the family/spec fields.
inline Plan make_custom_binomial_plan(std::vector<std::int64_t> sizes,
                                      std::vector<std::vector<IntInterval>> continue_sets,
                                      ErrorSpec spec, Family family = Family::binomial_abs) {
  Plan p;
  p.family = family;
  p.rule = Rule::chernoff;
  p.spec = spec;
  p.zeta = 0.25;
  p.schedule.kind = ScheduleKind::sizes;
  p.schedule.values = std::move(sizes);
  p.schedule.rho = 2.0;
  p.schedule.tau = (int)p.schedule.values.size();
  p.schedule.delta = spec.delta;
  for (int ell = 1; ell <= (int)p.schedule.values.size(); ++ell) {
    StageBoundary sb;
    sb.stage = ell;
    if (ell <= (int)continue_sets.size())
      sb.continue_set = normalize_intervals(continue_sets[(std::size_t)ell - 1]);
    if (ell == (int)p.schedule.values.size()) {
      sb.forced_stop = true;
      sb.continue_set.clear();
    }
    p.boundaries.push_back(std::move(sb));
  }
  return p;
}

/// Uniformly random small plan: s stages, n_s <= max_n, random continue
/// intervals, absolute-error interval maps with random margin.
inline Plan random_small_plan(std::mt19937_64& gen, int max_stages = 3,
                              std::int64_t max_n = 12) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int s = 1 + (int)(u(gen) * max_stages);
  if (s > max_stages) s = max_stages;
  std::vector<std::int64_t> sizes;
  std::int64_t v = 1 + (std::int64_t)(u(gen) * 4);
  for (int ell = 0; ell < s; ++ell) {
    sizes.push_back(std::min<std::int64_t>(v, max_n));
    v += 1 + (std::int64_t)(u(gen) * ((double)max_n / s));
  }
  sizes.back() = std::min(sizes.back(), max_n);
  for (std::size_t i = 1; i < sizes.size(); ++i)
    if (sizes[i] <= sizes[i - 1]) sizes[i] = sizes[i - 1] + 1;
  std::vector<std::vector<IntInterval>> cs;
  for (int ell = 0; ell + 1 < s; ++ell) {
    std::int64_t n = sizes[(std::size_t)ell];
    std::int64_t a = (std::int64_t)(u(gen) * (double)(n + 1));
    std::int64_t b = a + (std::int64_t)(u(gen) * (double)(n + 1 - a));
    cs.push_back({{std::min(a, n), std::min(b, n)}});
  }
  cs.emplace_back();
  double eps = 0.1 + 0.3 * u(gen);
  return make_custom_binomial_plan(std::move(sizes), std::move(cs),
                                   ErrorSpec::absolute(eps, 0.1));
}

struct EnumResult {
  double complement = 0.0;
  double asn = 0.0;
  std::vector<double> stop_pmf;
};

/// Full 2^(n_s)-path enumeration for a deterministic-size binomial plan.
inline EnumResult enumerate_binomial(const Plan& plan, double theta) {
  int s = plan.stages();
  std::int64_t ns = plan.stage_value(s);
  EnumResult out;
  out.stop_pmf.assign((std::size_t)s, 0.0);
  for (std::uint64_t bits = 0; bits < (std::uint64_t(1) << ns); ++bits) {
    int ones = __builtin_popcountll(bits);
    double w = std::pow(theta, ones) * std::pow(1.0 - theta, (double)ns - ones);
    if (w == 0.0) continue;
    for (int ell = 1; ell <= s; ++ell) {
      std::int64_t n_ell = plan.stage_value(ell);
      std::int64_t k = __builtin_popcountll(bits & ((std::uint64_t(1) << n_ell) - 1));
      if (!plan.boundaries[(std::size_t)ell - 1].continues(k)) {
        out.stop_pmf[(std::size_t)ell - 1] += w;
        out.asn += w * (double)n_ell;
        auto [L, U] = terminal_interval(plan, ell, k);
        if (L >= theta || U <= theta) out.complement += w;
        break;
      }
    }
  }
  return out;
}

/// Sequential-draw enumeration for a finite-population plan (weights are
/// the exact products of conditional draw probabilities).
inline EnumResult enumerate_finite(const Plan& plan, std::int64_t M) {
  std::int64_t N = plan.opts.population;
  int s = plan.stages();
  std::int64_t ns = plan.stage_value(s);
  double p = (double)M / (double)N;
  EnumResult out;
  out.stop_pmf.assign((std::size_t)s, 0.0);
  for (std::uint64_t bits = 0; bits < (std::uint64_t(1) << ns); ++bits) {
    double w = 1.0;
    std::int64_t good = M, total = N;
    for (std::int64_t i = 0; i < ns && w > 0.0; ++i) {
      bool one = (bits >> i) & 1;
      w *= one ? (double)good / (double)total : (double)(total - good) / (double)total;
      if (one) --good;
      --total;
    }
    if (w == 0.0) continue;
    for (int ell = 1; ell <= s; ++ell) {
      std::int64_t n_ell = plan.stage_value(ell);
      std::int64_t k = __builtin_popcountll(bits & ((std::uint64_t(1) << n_ell) - 1));
      if (!plan.boundaries[(std::size_t)ell - 1].continues(k)) {
        out.stop_pmf[(std::size_t)ell - 1] += w;
        out.asn += w * (double)n_ell;
        auto [L, U] = terminal_interval(plan, ell, k);
        if (L >= p || U <= p) out.complement += w;
        break;
      }
    }
  }
  return out;
}

}  // namespace seqplan::testing
