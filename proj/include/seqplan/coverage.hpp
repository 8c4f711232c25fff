#pragma once

// Exact and bounded computation of complementary coverage, stop-stage
// distribution, and ASN via the path-count recursion, with certified domain
// truncation, consecutive-decision-variable (SDV/DDV) bounds, and the
// interval bounding that drives adaptive maximum checking.
//
// The recursion carries nu(k, ell) = number-weighted coefficients of
// surviving sample-sum trajectories in log space; for binomial, Poisson and
// inverse-binomial plans nu is parameter-free, so one table serves a whole
// parameter sweep. Sampling without replacement has no such factorization
// and carries log path probabilities directly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "seqplan/common.hpp"
#include "seqplan/distributions.hpp"
#include "seqplan/numerics.hpp"
#include "seqplan/rules.hpp"

namespace seqplan {

enum class BoundKind { exact, truncated, sdv, ddv };

struct CoverageReport {
  double theta = 0.0;
  BoundPair complement;  // exact value in [lower, upper]
  BoundPair asn;
  std::vector<double> stop_pmf;  // per stage, at the truncated resolution
  BoundKind kind = BoundKind::exact;
  double eta = 0.0;  // certified slack carried by the truncation/horizon
};

/// Per-stage truncation window and log path-count table.
struct StageTable {
  std::int64_t lo = 0;
  std::int64_t hi = -1;
  std::vector<double> log_nu;  // index k - lo

  double at(std::int64_t k) const {
    return (k < lo || k > hi) ? neg_inf : log_nu[(std::size_t)(k - lo)];
  }
};

struct PathDistribution {
  std::vector<StageTable> stages;
  double eta = 0.0;          // truncation budget the windows were built for
  bool probability_table = false;  // finite-population mode: entries are log P
};

class TooWideInterval : public std::runtime_error {
 public:
  explicit TooWideInterval(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline bool binomial_like(Family f) {
  switch (f) {
    case Family::binomial_abs:
    case Family::binomial_mix:
    case Family::binomial_rel:
    case Family::bwci_cp:
    case Family::bwci_fishman:
    case Family::bwci_explicit:
      return true;
    default:
      return false;
  }
}

inline bool poisson_family(Family f) {
  return f == Family::poisson_abs || f == Family::poisson_rel || f == Family::poisson_mix;
}

inline bool finite_family(Family f) {
  return f == Family::finite_pop_abs || f == Family::finite_pop_rel ||
         f == Family::finite_pop_mix;
}

// smallest k in [lo, hi] with pred(k) true; pred must be monotone (false
// then true); returns hi + 1 when pred is never true
template <typename Pred>
inline std::int64_t first_true(std::int64_t lo, std::int64_t hi, Pred pred) {
  if (lo > hi || pred(lo)) return lo;
  if (!pred(hi)) return hi + 1;
  while (hi - lo > 1) {
    std::int64_t mid = lo + (hi - lo) / 2;
    (pred(mid) ? hi : lo) = mid;
  }
  return hi;
}

struct WindowBudget {
  double per_side;  // tail mass allowance on each side of each stage
};

}  // namespace detail

/// Per-stage integer windows whose excluded tail mass under the stage
/// marginal at theta is at most eta/s per stage (eta/(2s) per side),
/// certified by Hoeffding/Chernoff tail bounds rather than exact quantiles
/// so the cost stays logarithmic even at horizon-sized stages; eta = 0
/// keeps the full support of finite-support families.
inline std::vector<IntInterval> truncate_windows(const Plan& plan, double theta, double eta) {
  int s = plan.stages();
  std::vector<IntInterval> wins((std::size_t)s);
  double per_side = eta / (2.0 * (double)s);
  for (int ell = 1; ell <= s; ++ell) {
    std::int64_t v = plan.stage_value(ell);
    IntInterval w;
    std::int64_t anchor = 0;  // modal point; every window keeps it
    if (detail::binomial_like(plan.family) || detail::finite_family(plan.family)) {
      // Hoeffding half-width (valid with and without replacement)
      std::int64_t lo = 0, hi = v;
      if (detail::finite_family(plan.family)) {
        std::int64_t N = plan.opts.population;
        std::int64_t M = detail::require_lattice(theta * (double)N, "theta*N");
        lo = std::max<std::int64_t>(0, v - (N - M));
        hi = std::min<std::int64_t>(v, M);
      }
      anchor = std::clamp<std::int64_t>((std::int64_t)std::floor(theta * (double)(v + 1)), lo, hi);
      w = {lo, hi};
      if (eta > 0.0) {
        double eff = std::max(per_side, 1e-302);
        double x = std::ceil(std::sqrt(0.5 * (double)v * std::log(1.0 / eff)));
        double mean = (double)v * theta;
        w.lo = std::max(lo, (std::int64_t)std::floor(mean - x));
        w.hi = std::min(hi, (std::int64_t)std::ceil(mean + x));
      }
    } else if (detail::poisson_family(plan.family)) {
      double mean = (double)v * theta;
      double eff = std::max(per_side, 1e-302);
      anchor = (std::int64_t)std::floor(mean);
      // Chernoff tails: P{K >= k} <= exp(v mp(k/v, th)) above the mean,
      // P{K <= k} <= exp(v mp(k/v, th)) below it
      double t = std::log(eff) / (double)v;
      auto f = [&](double z) { return mp(z, theta); };
      double zhi = std::max(2.0 * theta, theta + 2.0);
      while (f(zhi) > t) zhi *= 2.0;
      double zu = bisect_monotone(f, theta, zhi, t, 1e-9 * zhi);
      RootResult zl = bisect_monotone_clamped(f, 0.0, theta, t, 1e-12);
      w.lo = zl.clamped() ? 0 : std::max<std::int64_t>(0, (std::int64_t)std::floor(
                                                              (double)v * zl.value));
      w.hi = (std::int64_t)std::ceil((double)v * zu);
    } else if (plan.inverse_sampling()) {
      // sample-count support [gamma, inf); caps from the inverse-sampling
      // tail bounds exp(gamma M_I(z, p))
      double g = (double)v;
      double eff = std::max(per_side, 1e-302);
      double t = std::log(eff) / g;
      std::int64_t lo = v, hi;
      if (theta <= 0.0) throw std::invalid_argument("inverse windows need theta > 0");
      anchor = std::max<std::int64_t>(v, (std::int64_t)std::llround(g / theta));
      // upper cap: P{count >= m} <= exp(g M_I(g/m, p)), M_I increasing on (0, p)
      RootResult zl = bisect_monotone_clamped([&](double z) { return mi(z, theta); }, 1e-12,
                                              theta, t, 1e-13);
      hi = zl.clamped() ? (std::int64_t)std::ceil(g / 1e-12)
                        : (std::int64_t)std::ceil(g / zl.value) + 1;
      // lower cap: P{count <= m} <= exp(g M_I(g/m, p)), M_I decreasing on (p, 1)
      RootResult zh = bisect_monotone_clamped([&](double z) { return mi(z, theta); }, theta,
                                              1.0, t, 1e-13);
      if (!zh.clamped()) lo = std::max<std::int64_t>(v, (std::int64_t)std::floor(g / zh.value));
      w = {lo, hi};
    } else {
      throw std::logic_error("truncate_windows: unsupported family");
    }
    w.lo = std::min(w.lo, anchor);
    w.hi = std::max(w.hi, anchor);
    wins[(std::size_t)ell - 1] = w;
  }
  return wins;
}

namespace detail {

inline double logsumexp_acc(double acc_max, double acc_sum, double x, double* new_max) {
  // streaming log-sum-exp accumulator helper
  if (x == neg_inf) {
    *new_max = acc_max;
    return acc_sum;
  }
  if (x <= acc_max) {
    *new_max = acc_max;
    return acc_sum + std::exp(x - acc_max);
  }
  *new_max = x;
  return acc_sum * std::exp(acc_max - x) + 1.0;
}

}  // namespace detail

/// The recursion table over the given windows. For binomial/Poisson/inverse
/// plans entries are theta-free log path-count coefficients; for finite
/// population they are log path probabilities at theta.
inline PathDistribution path_recursion(const Plan& plan, double theta,
                                       const std::vector<IntInterval>& wins) {
  int s = plan.stages();
  PathDistribution out;
  out.stages.resize((std::size_t)s);
  out.probability_table = detail::finite_family(plan.family);

  Family fam = plan.family;
  std::int64_t N = plan.opts.population;
  std::int64_t M = out.probability_table
                       ? detail::require_lattice(theta * (double)N, "theta*N")
                       : 0;

  // log weight turning a path coefficient into a probability at theta
  auto weight_log = [&](int ell, std::int64_t k) {
    std::int64_t v = plan.stage_value(ell);
    if (out.probability_table) return 0.0;
    if (detail::poisson_family(fam)) {
      if (theta <= 0.0) return k == 0 ? 0.0 : neg_inf;
      return (double)k * std::log(theta) - (double)v * theta;
    }
    if (plan.inverse_sampling()) {
      if (theta <= 0.0 || theta > 1.0) return neg_inf;
      if (theta == 1.0) return k == v ? 0.0 : neg_inf;
      return (double)v * std::log(theta) + (double)(k - v) * std::log1p(-theta);
    }
    if (theta <= 0.0) return k == 0 ? 0.0 : neg_inf;
    if (theta >= 1.0) return k == v ? 0.0 : neg_inf;
    return (double)k * std::log(theta) + (double)(v - k) * std::log1p(-theta);
  };

  for (int ell = 1; ell <= s; ++ell) {
    StageTable& st = out.stages[(std::size_t)ell - 1];
    st.lo = wins[(std::size_t)ell - 1].lo;
    st.hi = wins[(std::size_t)ell - 1].hi;
    st.log_nu.assign((std::size_t)(st.hi - st.lo + 1), neg_inf);
    std::int64_t v = plan.stage_value(ell);

    if (ell == 1) {
      for (std::int64_t k = st.lo; k <= st.hi; ++k) {
        double ln;
        if (out.probability_table)
          ln = hyper_log_pmf(k, v, M, N);
        else if (detail::poisson_family(fam))
          ln = (double)k * std::log((double)v) - log_factorial(k);
        else if (plan.inverse_sampling())
          ln = log_choose(k - 1, v - 1);  // C(n-1, gamma-1) over counts n
        else
          ln = log_choose(v, k);
        st.log_nu[(std::size_t)(k - st.lo)] = ln;
      }
      continue;
    }

    const StageTable& prev = out.stages[(std::size_t)ell - 2];
    const StageBoundary& pb = plan.boundaries[(std::size_t)ell - 2];
    std::int64_t pv = plan.stage_value(ell - 1);
    std::int64_t dv = v - pv;  // stage size (or threshold) increment

    for (std::int64_t k = st.lo; k <= st.hi; ++k) {
      double mx = neg_inf, sum = 0.0;
      std::int64_t from_lo, from_hi;
      if (plan.inverse_sampling()) {
        from_lo = prev.lo;
        from_hi = std::min(prev.hi, k - dv);  // count must grow by >= dgamma
      } else if (detail::poisson_family(fam)) {
        from_lo = prev.lo;
        from_hi = std::min(prev.hi, k);
      } else {
        from_lo = std::max(prev.lo, k - dv);
        from_hi = std::min(prev.hi, k);
      }
      // iterate the surviving k' only: continue-sets stay narrow even when
      // the stage increments are large
      for (const IntInterval& civ : pb.continue_set) {
        std::int64_t a = std::max(civ.lo, from_lo), b = std::min(civ.hi, from_hi);
        for (std::int64_t kp = a; kp <= b; ++kp) {
          double base = prev.at(kp);
          if (base == neg_inf) continue;
          double step;
          if (out.probability_table) {
            step = log_choose(M - kp, k - kp) + log_choose(N - M - (pv - kp), dv - (k - kp)) -
                   log_choose(N - pv, dv);
          } else if (detail::poisson_family(fam)) {
            step = (double)(k - kp) * std::log((double)dv) - log_factorial(k - kp);
          } else if (plan.inverse_sampling()) {
            // dv new successes in k - kp draws, last draw a success
            step = log_choose(k - kp - 1, dv - 1);
          } else {
            step = log_choose(dv, k - kp);
          }
          sum = detail::logsumexp_acc(mx, sum, base + step, &mx);
        }
      }
      st.log_nu[(std::size_t)(k - st.lo)] =
          sum > 0.0 ? mx + std::log(sum) : neg_inf;
    }

    // survival underflow exit: once no surviving path carries representable
    // probability, the remaining stages contribute exactly zero
    if (ell < s) {
      const StageBoundary& sb = plan.boundaries[(std::size_t)ell - 1];
      double best = neg_inf;
      for (const IntInterval& civ : sb.continue_set) {
        std::int64_t a = std::max(civ.lo, st.lo), b = std::min(civ.hi, st.hi);
        for (std::int64_t k = a; k <= b; ++k)
          best = std::max(best, st.at(k) + weight_log(ell, k));
      }
      if (best < -760.0) break;  // below subnormal range
    }
  }
  return out;
}

inline PathDistribution path_recursion(const Plan& plan, double theta, double eta) {
  return path_recursion(plan, theta, truncate_windows(plan, theta, eta));
}

// ---------------------------------------------------------------------------
// the evaluator: classified stop outcomes + the table

class CoverageEvaluator {
 public:
  struct Outcome {
    int stage = 0;
    std::int64_t k = 0;
    double theta_hat = 0.0;
    double lower = 0.0, upper = 0.0;  // terminal random interval
    double log_nu = neg_inf;
  };

  explicit CoverageEvaluator(Plan plan, double eta = -1.0) : plan_(std::move(plan)) {
    if (eta >= 0.0) {
      eta_ = eta;
    } else {
      // unbounded supports and horizon-materialized designs need a
      // truncation budget; finite ones default to exact
      bool unbounded = detail::poisson_family(plan_.family) || plan_.inverse_sampling() ||
                       plan_.infinite_design();
      eta_ = unbounded ? 1e-10 : 0.0;
    }
    if (detail::binomial_like(plan_.family) && !plan_.infinite_design() && eta_ == 0.0) {
      cached_ = build_at(0.5);  // windows are the full support: theta-free
    }
  }

  const Plan& plan() const { return plan_; }
  double eta() const { return eta_; }

  /// Complementary coverage P{L >= theta or U <= theta} with certified slack.
  CoverageReport complement(double theta) const {
    const Built& b = built_for(theta);
    CoverageReport rep;
    rep.theta = theta;
    rep.eta = eta_;
    rep.stop_pmf.assign((std::size_t)plan_.stages(), 0.0);
    double miss = 0.0;
    for (const Outcome& o : b.outcomes) {
      double pr = outcome_prob(b, o, theta);
      rep.stop_pmf[(std::size_t)o.stage - 1] += pr;
      if (o.lower >= theta || o.upper <= theta) miss += pr;
    }
    double slack = tail_slack(b, theta);
    rep.complement = {miss, std::min(1.0, miss + slack)};
    rep.kind = slack > 0.0 ? BoundKind::truncated : BoundKind::exact;
    rep.asn = asn_from(b, theta, rep.stop_pmf, slack);
    return rep;
  }

  /// ASN alone (same computation, returned as a bracket).
  BoundPair asn(double theta) const { return complement(theta).asn; }

  /// One-sided sums used by interval bounding: P{L >= a} and P{U <= b}
  /// evaluated at eval_theta; upper = true adds the truncation slack.
  double miss_lower_sum(double a, double eval_theta, bool add_slack) const {
    const Built& b = built_for(eval_theta);
    double sum = 0.0;
    for (const Outcome& o : b.outcomes)
      if (o.lower >= a) sum += outcome_prob(b, o, eval_theta);
    return sum + (add_slack ? tail_slack(b, eval_theta) : 0.0);
  }
  double miss_upper_sum(double bnd, double eval_theta, bool add_slack) const {
    const Built& b = built_for(eval_theta);
    double sum = 0.0;
    for (const Outcome& o : b.outcomes)
      if (o.upper <= bnd) sum += outcome_prob(b, o, eval_theta);
    return sum + (add_slack ? tail_slack(b, eval_theta) : 0.0);
  }

  /// CDV bracket for the complementary-coverage event; r in {0, 1, s-1}.
  BoundPair cdv(double theta, int r) const;

  /// Complement bounds valid for every parameter in [a, b], via the
  /// endpoint-evaluated one-sided sums; requires the narrow condition.
  BoundPair interval_bounds(double a, double b) const;

  /// The (narrow) condition: {a <= L} subset {theta_hat >= b} and
  /// {b >= U} subset {theta_hat <= a}, checked over all stop outcomes.
  bool narrow_ok(double a, double b) const {
    const Built& bb = built_for(b);
    for (const Outcome& o : bb.outcomes)
      if (o.lower >= a && o.theta_hat < b) return false;
    const Built& ba = built_for(a);
    for (const Outcome& o : ba.outcomes)
      if (o.upper <= b && o.theta_hat > a) return false;
    return true;
  }

  /// Sorted deduplicated {a, b} + supports of L and U, clipped to [a, b].
  std::vector<double> lattice(double a, double b) const {
    const Built& bb = built_for(b);
    std::vector<double> pts{a, b};
    for (const Outcome& o : bb.outcomes) {
      if (o.lower >= a && o.lower <= b) pts.push_back(o.lower);
      if (o.upper >= a && o.upper <= b) pts.push_back(o.upper);
    }
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end(),
                          [](double x, double y) { return std::abs(x - y) < 1e-13; }),
              pts.end());
    return pts;
  }

 private:
  struct Built {
    PathDistribution dist;
    std::vector<Outcome> outcomes;
    std::vector<std::vector<std::int64_t>> survivors;  // per stage, continue k's
    double build_theta = 0.0;
  };

  Plan plan_;
  double eta_ = 0.0;
  std::optional<Built> cached_;

  Built build_at(double theta) const {
    Built b;
    b.build_theta = theta;
    b.dist = path_recursion(plan_, theta, eta_);
    for (int ell = 1; ell <= plan_.stages(); ++ell) {
      const StageTable& st = b.dist.stages[(std::size_t)ell - 1];
      const StageBoundary& sb = plan_.boundaries[(std::size_t)ell - 1];
      std::vector<std::int64_t> sv;
      for (std::int64_t k = st.lo; k <= st.hi; ++k) {
        if (st.at(k) == neg_inf) continue;
        if (sb.continues(k)) {
          sv.push_back(k);
          continue;
        }
        Outcome o;
        o.stage = ell;
        o.k = k;
        std::int64_t v = plan_.stage_value(ell);
        o.theta_hat = plan_.inverse_sampling() ? (double)v / (double)k
                                               : (double)k / (double)v;
        auto [L, U] = terminal_interval(plan_, ell, k);
        o.lower = L;
        o.upper = U;
        o.log_nu = st.at(k);
        b.outcomes.push_back(o);
      }
      b.survivors.push_back(std::move(sv));
    }
    return b;
  }

  const Built& built_for(double theta) const {
    if (cached_) return *cached_;  // theta-free table
    // two slots: interval bounds alternate between the endpoint parameters
    for (auto& slot : scratch_)
      if (slot && slot->build_theta == theta) return *slot;
    next_slot_ ^= 1;
    scratch_[next_slot_] = build_at(theta);
    return *scratch_[next_slot_];
  }

  double outcome_prob(const Built& b, const Outcome& o, double theta) const {
    return std::exp(o.log_nu + weight_log(o.stage, o.k, theta, b));
  }

  double weight_log(int ell, std::int64_t k, double theta, const Built& b) const {
    if (b.dist.probability_table) return 0.0;  // already probabilities
    std::int64_t v = plan_.stage_value(ell);
    if (detail::poisson_family(plan_.family)) {
      if (theta <= 0.0) return k == 0 ? 0.0 : neg_inf;
      return (double)k * std::log(theta) - (double)v * theta;
    }
    if (plan_.inverse_sampling()) {
      if (theta <= 0.0) return neg_inf;
      if (theta >= 1.0) return k == v ? 0.0 : neg_inf;
      return (double)v * std::log(theta) + (double)(k - v) * std::log1p(-theta);
    }
    if (theta <= 0.0) return k == 0 ? 0.0 : neg_inf;
    if (theta >= 1.0) return k == v ? 0.0 : neg_inf;
    return (double)k * std::log(theta) + (double)(v - k) * std::log1p(-theta);
  }

  double survivor_mass(const Built& b, int ell, double theta) const {
    const StageTable& st = b.dist.stages[(std::size_t)ell - 1];
    double sum = 0.0;
    for (std::int64_t k : b.survivors[(std::size_t)ell - 1])
      sum += std::exp(st.at(k) + weight_log(ell, k, theta, b));
    return sum;
  }

  // mass the windows / horizon leave unaccounted at theta
  double tail_slack(const Built& b, double theta) const {
    double slack = eta_;
    if (plan_.infinite_design()) slack += survivor_mass(b, plan_.stages(), theta);
    return slack;
  }

  BoundPair asn_from(const Built& b, double theta, const std::vector<double>& stop_pmf,
                     double slack) const {
    int s = plan_.stages();
    double expected = (double)plan_.stage_value(1);
    for (int ell = 1; ell < s; ++ell) {
      double surv = survivor_mass(b, ell, theta);
      expected += (double)(plan_.stage_value(ell + 1) - plan_.stage_value(ell)) * surv;
    }
    (void)stop_pmf;
    if (plan_.inverse_sampling()) {
      // E[n] = E[gamma]/theta by Wald's identity
      if (theta <= 0.0) throw std::invalid_argument("asn: inverse sampling needs theta > 0");
      double egamma = expected;  // thresholds accumulated above
      return {egamma / theta,
              (egamma + slack * (double)(plan_.stage_value(s) - plan_.stage_value(1))) / theta};
    }
    double span = (double)(plan_.stage_value(s) - plan_.stage_value(1));
    return {expected, expected + slack * span};
  }

  mutable std::optional<Built> scratch_[2];  // per-theta rebuilds; single-thread use
  mutable int next_slot_ = 0;
};

// ---------------------------------------------------------------------------
// CDV bounds

inline BoundPair CoverageEvaluator::cdv(double theta, int r) const {
  int s = plan_.stages();
  if (r >= s - 1 && s >= 1) {
    CoverageReport rep = complement(theta);
    return rep.complement;
  }
  if (r != 0 && r != 1)
    throw std::invalid_argument("cdv: r restricted to 0, 1, or s-1");
  if (plan_.inverse_sampling())
    throw std::invalid_argument("cdv: inverse-sampling plans support only r = s-1");

  // interval probability oracles for the stage marginals at theta
  auto marginal = [&](int ell) -> IntervalProb {
    std::int64_t v = plan_.stage_value(ell);
    if (detail::poisson_family(plan_.family)) {
      double mean = (double)v * theta;
      return [mean](std::int64_t x, std::int64_t y) {
        if (y < x) return 0.0;
        return std::max(0.0, poisson_cdf(y, mean) - poisson_cdf(x - 1, mean));
      };
    }
    if (detail::finite_family(plan_.family)) {
      std::int64_t N = plan_.opts.population;
      double p = theta;
      return [v, p, N](std::int64_t x, std::int64_t y) {
        if (y < x) return 0.0;
        return std::max(0.0, hyper_cdf(y, v, p, N) - hyper_cdf(x - 1, v, p, N));
      };
    }
    return [v, theta](std::int64_t x, std::int64_t y) {
      if (y < x) return 0.0;
      return std::max(0.0, binom_cdf(y, v, theta) - binom_cdf(x - 1, v, theta));
    };
  };
  auto increment = [&](int ell) -> IntervalProb {  // law of K_ell - K_{ell-1}
    std::int64_t dv = plan_.stage_value(ell) - plan_.stage_value(ell - 1);
    if (detail::poisson_family(plan_.family)) {
      double mean = (double)dv * theta;
      return [mean](std::int64_t x, std::int64_t y) {
        if (y < x) return 0.0;
        return std::max(0.0, poisson_cdf(y, mean) - poisson_cdf(x - 1, mean));
      };
    }
    return [dv, theta](std::int64_t x, std::int64_t y) {
      if (y < x) return 0.0;
      return std::max(0.0, binom_cdf(y, dv, theta) - binom_cdf(x - 1, dv, theta));
    };
  };

  // stage-ell stop sets split by the miss condition at theta
  std::vector<IntInterval> wins = truncate_windows(plan_, theta, eta_);
  auto stop_sets = [&](int ell, bool miss_part) {
    const StageBoundary& sb = plan_.boundaries[(std::size_t)ell - 1];
    IntInterval w = wins[(std::size_t)ell - 1];
    std::vector<IntInterval> runs;
    for (std::int64_t k = w.lo; k <= w.hi; ++k) {
      if (sb.continues(k)) continue;
      auto [L, U] = terminal_interval(plan_, ell, k);
      bool miss = (L >= theta || U <= theta);
      if (miss != miss_part) continue;
      if (!runs.empty() && runs.back().hi == k - 1)
        runs.back().hi = k;
      else
        runs.push_back({k, k});
    }
    return runs;
  };

  auto term = [&](int ell, bool miss_part) {
    std::vector<IntInterval> sets = stop_sets(ell, miss_part);
    if (sets.empty()) return 0.0;
    double total = 0.0;
    if (r == 0 || ell == 1) {
      IntervalProb m = marginal(ell);
      for (const auto& iv : sets) total += m(iv.lo, iv.hi);
      return total;
    }
    // r == 1: joint with the previous stage's continue event
    const StageBoundary& pb = plan_.boundaries[(std::size_t)ell - 2];
    IntInterval pw = wins[(std::size_t)ell - 2];
    std::vector<IntInterval> cont;
    for (const auto& iv : pb.continue_set) {
      IntInterval c{std::max(iv.lo, pw.lo), std::min(iv.hi, pw.hi)};
      if (!c.empty()) cont.push_back(c);
    }
    if (detail::finite_family(plan_.family)) {
      // dependent increments: exact double sum over the two stages
      std::int64_t N = plan_.opts.population;
      std::int64_t M = detail::require_lattice(theta * (double)N, "theta*N");
      std::int64_t pv = plan_.stage_value(ell - 1), v = plan_.stage_value(ell);
      for (const auto& ci : cont)
        for (std::int64_t kp = ci.lo; kp <= ci.hi; ++kp) {
          double base = hyper_log_pmf(kp, pv, M, N);
          for (const auto& si : sets)
            for (std::int64_t k = si.lo; k <= si.hi; ++k) {
              double step = log_choose(M - kp, k - kp) +
                            log_choose(N - M - (pv - kp), (v - pv) - (k - kp)) -
                            log_choose(N - pv, v - pv);
              total += std::exp(base + step);
            }
        }
      return total;
    }
    IntervalProb pu = marginal(ell - 1);
    IntervalProb pv = increment(ell);
    for (const auto& ci : cont)
      for (const auto& si : sets) {
        // {U in [ci], U+V in [si]} with V supported on [0, dv]
        std::int64_t dv = plan_.stage_value(ell) - plan_.stage_value(ell - 1);
        RectDecomposition d =
            rect_prob_decompose(pu, pv, ci.lo, ci.hi, 0, dv, si.lo, si.hi);
        total += d.value();
      }
    return total;
  };

  double upper = 0.0, lower_terms = 0.0;
  for (int ell = 1; ell <= s; ++ell) {
    upper += term(ell, true);
    lower_terms += term(ell, false);
  }
  // truncation can only have removed probability from the computed terms
  return {std::max(0.0, 1.0 - lower_terms - eta_), std::min(1.0, upper + eta_)};
}

// ---------------------------------------------------------------------------
// interval bounding

inline BoundPair CoverageEvaluator::interval_bounds(double a, double b) const {
  if (!(a <= b)) throw std::invalid_argument("interval_bounds: a > b");
  if (!narrow_ok(a, b))
    throw TooWideInterval("interval too wide for the narrow condition; split it");
  double upper = miss_lower_sum(a, b, true) + miss_upper_sum(b, a, true);
  double lower = miss_lower_sum(b, a, false) + miss_upper_sum(a, b, false);
  return {std::max(0.0, lower), std::min(1.0, upper)};
}

// ---------------------------------------------------------------------------
// free-function forms of the module operations

inline CoverageReport exact_complement(const Plan& plan, double theta, double eta = -1.0) {
  return CoverageEvaluator(plan, eta).complement(theta);
}

inline BoundPair asn(const Plan& plan, double theta, double eta = -1.0) {
  return CoverageEvaluator(plan, eta).asn(theta);
}

inline BoundPair cdv_bounds(const Plan& plan, double theta, int r, double eta = -1.0) {
  return CoverageEvaluator(plan, eta).cdv(theta, r);
}

inline BoundPair complement_bounds_on_interval(const Plan& plan, double a, double b,
                                               double eta = -1.0) {
  return CoverageEvaluator(plan, eta).interval_bounds(a, b);
}

inline std::vector<double> lattice_points(const Plan& plan, double a, double b) {
  return CoverageEvaluator(plan).lattice(a, b);
}

}  // namespace seqplan
