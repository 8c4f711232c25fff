#pragma once

// Independent Monte Carlo oracle for a Plan: empirical complementary
// coverage, ASN, and stop-stage frequencies. Randomness comes from a
// counter-based generator keyed on (seed, trial, draw index), so trials are
// independent streams and a report is a pure function of (plan, theta,
// trials, seed) no matter how the work is scheduled.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "seqplan/coverage.hpp"
#include "seqplan/rules.hpp"

namespace seqplan {

namespace rng {

// splitmix64 finalizer, applied twice over the keyed counter
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct CounterRng {
  std::uint64_t seed = 0;
  std::uint64_t trial = 0;
  std::uint64_t counter = 0;

  std::uint64_t next_u64() {
    std::uint64_t x = mix64(seed ^ mix64(trial * 0xd1342543de82ef95ULL + 1));
    return mix64(x ^ (counter++) * 0x2545f4914f6cdd1dULL);
  }

  double next_unit() {  // uniform in [0, 1)
    return (double)(next_u64() >> 11) * 0x1.0p-53;
  }

  // Knuth multiplication method; additivity splits large means
  std::int64_t next_poisson(double mean) {
    std::int64_t total = 0;
    while (mean > 30.0) {
      total += next_poisson_small(15.0);
      mean -= 15.0;
    }
    return total + next_poisson_small(mean);
  }

  std::int64_t next_poisson_small(double mean) {
    double limit = std::exp(-mean), prod = next_unit();
    std::int64_t k = 0;
    while (prod > limit) {
      ++k;
      prod *= next_unit();
    }
    return k;
  }
};

}  // namespace rng

struct SimReport {
  std::int64_t trials = 0;
  std::uint64_t seed = 0;
  double theta = 0.0;
  double complement = 0.0;        // empirical P{L >= theta or U <= theta}
  double complement_se = 0.0;
  double asn = 0.0;
  double asn_se = 0.0;
  std::vector<std::int64_t> stop_stage_histogram;
  double mean_gamma = 0.0;        // inverse sampling: mean terminal threshold
};

namespace detail {

struct TrialOutcome {
  int stage = 0;
  std::int64_t n_used = 0;
  double gamma = 0.0;
  bool miss = false;
};

inline TrialOutcome run_trial(const Plan& plan, double theta, rng::CounterRng& r) {
  TrialOutcome out;
  int s = plan.stages();
  if (plan.inverse_sampling()) {
    std::int64_t count = 0, sum = 0;
    for (int ell = 1; ell <= s; ++ell) {
      std::int64_t gamma_ell = plan.stage_value(ell);
      while (sum < gamma_ell) {
        ++count;
        if (r.next_unit() < theta) ++sum;
        if (count > (std::int64_t)1 << 40)
          throw std::runtime_error("simulate: inverse sampling did not reach its threshold");
      }
      Decision d = evaluate(plan, ell, count);
      if (d.stop) {
        out.stage = ell;
        out.n_used = count;
        out.gamma = (double)gamma_ell;
        out.miss = d.lower >= theta || d.upper <= theta;
        return out;
      }
    }
    throw std::logic_error("simulate: inverse plan failed to stop");
  }

  bool finite = detail::finite_family(plan.family);
  bool poisson = detail::poisson_family(plan.family);
  std::int64_t N = plan.opts.population;
  std::int64_t good = 0;
  if (finite) good = detail::require_lattice(theta * (double)N, "theta*N");
  std::int64_t remaining_good = good, remaining = N;

  std::int64_t k = 0, drawn = 0;
  for (int ell = 1; ell <= s; ++ell) {
    std::int64_t n_ell = plan.stage_value(ell);
    for (; drawn < n_ell; ++drawn) {
      if (poisson) {
        k += r.next_poisson(theta);
      } else if (finite) {
        // sequential urn draw without replacement
        if (r.next_unit() * (double)remaining < (double)remaining_good) {
          ++k;
          --remaining_good;
        }
        --remaining;
      } else if (r.next_unit() < theta) {
        ++k;
      }
    }
    Decision d = evaluate(plan, ell, k);
    if (d.stop) {
      out.stage = ell;
      out.n_used = n_ell;
      out.miss = d.lower >= theta || d.upper <= theta;
      return out;
    }
  }
  // infinite designs are materialized to a horizon; trials that survive it
  // are treated as stopping there with the horizon estimate
  out.stage = s;
  out.n_used = plan.stage_value(s);
  Decision d = evaluate(plan, s, k);
  out.miss = d.lower >= theta || d.upper <= theta;
  return out;
}

}  // namespace detail

/// Runs `trials` independent trials of the plan at theta. Deterministic
/// given (plan, theta, trials, seed); the per-trial streams make the result
/// independent of any execution order.
inline SimReport simulate(const Plan& plan, double theta, std::int64_t trials,
                          std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("simulate: trials >= 1 required");
  SimReport rep;
  rep.trials = trials;
  rep.seed = seed;
  rep.theta = theta;
  rep.stop_stage_histogram.assign((std::size_t)plan.stages(), 0);

  std::int64_t miss_count = 0;
  double n_sum = 0.0, n_sq = 0.0, gamma_sum = 0.0;
  for (std::int64_t t = 0; t < trials; ++t) {
    rng::CounterRng r{seed, (std::uint64_t)t, 0};
    detail::TrialOutcome o = detail::run_trial(plan, theta, r);
    rep.stop_stage_histogram[(std::size_t)o.stage - 1]++;
    miss_count += o.miss ? 1 : 0;
    n_sum += (double)o.n_used;
    n_sq += (double)o.n_used * (double)o.n_used;
    gamma_sum += o.gamma;
  }
  double tr = (double)trials;
  rep.complement = (double)miss_count / tr;
  rep.complement_se = std::sqrt(std::max(0.0, rep.complement * (1.0 - rep.complement) / tr));
  rep.asn = n_sum / tr;
  double var = std::max(0.0, n_sq / tr - rep.asn * rep.asn);
  rep.asn_se = std::sqrt(var / tr);
  rep.mean_gamma = gamma_sum / tr;
  return rep;
}

}  // namespace seqplan
