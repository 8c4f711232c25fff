#pragma once

// Generic numerical kernels: monotone bisection, interval-splitting bounds
// for sums/integrals of convex or concave mass functions, and the
// rectangle/triangle decomposition of P{(U,V) in G} for independent U, V.

#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "seqplan/common.hpp"

namespace seqplan {

enum class Shape { convex, concave };

enum class RootClamp { interior, at_lo, at_hi };

struct RootResult {
  double value = 0.0;
  RootClamp clamp = RootClamp::interior;
  bool clamped() const { return clamp != RootClamp::interior; }
};

namespace detail {
// Orders a pair of endpoint values so bisection can run on either
// orientation; -inf endpoints are legal and compare below all finite values.
inline bool bracketed(double flo, double fhi, double target) {
  double a = std::min(flo, fhi), b = std::max(flo, fhi);
  return a <= target && target <= b;
}
}  // namespace detail

/// Bisection for f(x) = target with f monotone on [lo, hi]; direction is
/// detected from the endpoint values. Throws when the target is not
/// bracketed. Cost: ceil(log2((hi-lo)/tol)) midpoint evaluations. A
/// positive residual_tol keeps halving past the x-tolerance (down to a few
/// ulps) until |f(x) - target| meets it, for roots in steep regions.
inline double bisect_monotone(const std::function<double(double)>& f, double lo, double hi,
                              double target, double tol, double residual_tol = 0.0) {
  if (!(lo <= hi)) throw std::invalid_argument("bisect_monotone: lo > hi");
  double flo = f(lo), fhi = f(hi);
  if (!detail::bracketed(flo, fhi, target)) {
    std::ostringstream os;
    os << "bisect_monotone: target " << target << " not bracketed by f(" << lo << ")=" << flo
       << ", f(" << hi << ")=" << fhi;
    throw std::domain_error(os.str());
  }
  bool increasing = fhi >= flo;
  int iters = 2;
  if (hi - lo > tol) iters = (int)std::ceil(std::log2((hi - lo) / tol)) + 1;
  if (residual_tol > 0.0) iters += 80;
  double mid = 0.5 * (lo + hi), fm = 0.0;
  for (int i = 0; i < iters; ++i) {
    bool x_done = hi - lo <= tol;
    mid = 0.5 * (lo + hi);
    if (x_done && residual_tol <= 0.0) break;
    fm = f(mid);
    if (x_done) {
      if (std::abs(fm - target) <= residual_tol) break;
      if (hi - lo <= 8.0 * std::numeric_limits<double>::epsilon() *
                         std::max(1.0, std::abs(mid)))
        break;
    }
    bool go_right = increasing ? (fm < target) : (fm > target);
    if (go_right)
      lo = mid;
    else
      hi = mid;
  }
  return mid;
}

/// Variant for stopping-boundary roots: when the target is not bracketed
/// because the rule holds everywhere (or nowhere) on the stage, returns the
/// clamped endpoint with a flag instead of throwing.
inline RootResult bisect_monotone_clamped(const std::function<double(double)>& f, double lo,
                                          double hi, double target, double tol,
                                          double residual_tol = 0.0) {
  double flo = f(lo), fhi = f(hi);
  if (!detail::bracketed(flo, fhi, target)) {
    bool increasing = fhi >= flo;
    bool below = increasing ? (target < flo) : (target > flo);
    return below ? RootResult{lo, RootClamp::at_lo} : RootResult{hi, RootClamp::at_hi};
  }
  return RootResult{bisect_monotone(f, lo, hi, target, tol, residual_tol),
                    RootClamp::interior};
}

/// Bounds on sum_{k=a..b} f(k) from the endpoint values and the first
/// off-end differences, for f with one-signed second differences.
/// concave: trapezoid below, two-segment linear extension above (and the
/// mirror image for convex). The split index minimizing the gap has a
/// closed form; both neighboring integers are tried.
inline BoundPair split_sum_bounds(const std::function<double(std::int64_t)>& f, std::int64_t a,
                                  std::int64_t b, Shape shape) {
  if (a > b) throw std::invalid_argument("split_sum_bounds: a > b");
  if (a == b) return {f(a), f(a)};
  double fa = f(a), fb = f(b);
  if (b == a + 1) return {fa + fb, fa + fb};
  double fa1 = f(a + 1), fb1 = f(b - 1);
  double trapezoid = 0.5 * (double)(b - a + 1) * (fa + fb);

  // alpha(i)f(a) + beta(i)f(b) written via differences so zero endpoint
  // values need no ratio guards.
  auto extension = [&](std::int64_t i) {
    double left = (double)(i + 1 - a) * (fa + 0.5 * (double)(i - a) * (fa1 - fa));
    double right = (double)(b - i) * (fb + 0.5 * (double)(b - i - 1) * (fb1 - fb));
    return left + right;
  };

  std::int64_t j = (a + b) / 2;
  if (fa > 0 && fb > 0) {
    double ra = fa1 / fa, rb = fb1 / fb, rab = fa / fb;
    double den1 = 1.0 - rb;
    if (std::isfinite(ra) && std::isfinite(rb) && std::isfinite(rab) && den1 != 0.0) {
      double num = (double)(b - a) - (1.0 - rab) / den1;
      double den = 1.0 + rab * (1.0 - ra) / den1;
      if (den != 0.0 && std::isfinite(num / den)) {
        double jr = (double)a + num / den;
        if (std::isfinite(jr)) j = (std::int64_t)std::floor(jr);
      }
    }
  }
  std::int64_t cand[2] = {std::clamp(j, a + 1, b - 1), std::clamp(j + 1, a + 1, b - 1)};
  double ext = std::min(extension(cand[0]), extension(cand[1]));
  // The closed form is only a gap optimizer; the bound itself is valid for
  // any interior split, so a safe interior index is always available.
  if (!std::isfinite(ext)) ext = extension((a + b) / 2);

  if (shape == Shape::concave) return {trapezoid, ext};
  return {ext, trapezoid};
}

/// Bounds on the integral of a differentiable f of known shape on [a, b]:
/// chord on one side, the two-tangent correction Delta(t) at the optimal
/// tangency point on the other.
inline BoundPair split_integral_bounds(const std::function<double(double)>& f,
                                       const std::function<double(double)>& fprime, double a,
                                       double b, Shape shape) {
  if (!(a <= b)) throw std::invalid_argument("split_integral_bounds: a > b");
  if (a == b) return {0.0, 0.0};
  double fa = f(a), fb = f(b), da = fprime(a), db = fprime(b);
  double chord = 0.5 * (fa + fb) * (b - a);
  double slope = (fb - fa) / (b - a);
  double t;
  if (da == db) {
    t = 0.5 * (a + b);
  } else {
    t = (fb - fa + a * da - b * db) / (da - db);
    if (!(t >= a && t <= b)) t = 0.5 * (a + b);
  }
  // Delta is >= 0 for concave f and <= 0 for convex f; chord + Delta is the
  // two-tangent side of the bracket in both cases.
  double delta = (da - slope) * 0.5 * (t - a) * (t - a) - (db - slope) * 0.5 * (b - t) * (b - t);
  double tangent = chord + delta;
  (void)shape;
  return {std::min(chord, tangent), std::max(chord, tangent)};
}

/// P{x <= Z <= y} oracle for one marginal; exact for the discrete supports
/// in use. Inclusive integer endpoints.
using IntervalProb = std::function<double(std::int64_t, std::int64_t)>;

enum class TriOrientation {
  lower,  // {U >= i, V >= j, U + V <= k}
  upper   // {U <= i, V <= j, U + V >= k}
};

namespace detail {

struct Triangle {
  std::int64_t i, j, k;
  TriOrientation orient;
  double box_upper;  // product bound over the bounding rectangle

  // side length in lattice points along each leg; < 0 means empty
  std::int64_t side() const {
    return orient == TriOrientation::lower ? k - i - j : i + j - k;
  }
};

inline double tri_box_upper(const IntervalProb& pu, const IntervalProb& pv, std::int64_t i,
                            std::int64_t j, std::int64_t k, TriOrientation o) {
  if (o == TriOrientation::lower) {
    if (k - i - j < 0) return 0.0;
    return pu(i, k - j) * pv(j, k - i);
  }
  if (i + j - k < 0) return 0.0;
  return pu(k - j, i) * pv(k - i, j);
}

inline double tri_exact_small(const IntervalProb& pu, const IntervalProb& pv, const Triangle& t) {
  double sum = 0.0;
  std::int64_t side = t.side();
  for (std::int64_t du = 0; du <= side; ++du)
    for (std::int64_t dv = 0; dv + du <= side; ++dv) {
      std::int64_t u = t.orient == TriOrientation::lower ? t.i + du : t.i - du;
      std::int64_t v = t.orient == TriOrientation::lower ? t.j + dv : t.j - dv;
      sum += pu(u, u) * pv(v, v);
    }
  return sum;
}

// One split of a pending right triangle into an exact rectangle and two
// child triangles with disjoint bounding boxes.
template <typename Emit>
inline double tri_split(const IntervalProb& pu, const IntervalProb& pv, const Triangle& t,
                        Emit&& emit_child) {
  if (t.orient == TriOrientation::lower) {
    std::int64_t mu = (t.k + t.i - t.j) >= 0 ? (t.k + t.i - t.j) / 2
                                             : -((-(t.k + t.i - t.j) + 1) / 2);  // floor
    std::int64_t mv = t.k - mu;                                                  // ceil complement
    double rect = pu(t.i, mu) * pv(t.j, mv - 1);
    emit_child(Triangle{mu + 1, t.j, t.k, TriOrientation::lower,
                        tri_box_upper(pu, pv, mu + 1, t.j, t.k, TriOrientation::lower)});
    emit_child(Triangle{t.i, mv, t.k, TriOrientation::lower,
                        tri_box_upper(pu, pv, t.i, mv, t.k, TriOrientation::lower)});
    return rect;
  }
  std::int64_t mu = (t.k + t.i - t.j) >= 0 ? (t.k + t.i - t.j + 1) / 2
                                           : -((-(t.k + t.i - t.j)) / 2);  // ceil
  std::int64_t mv = t.k - mu;                                              // floor complement
  double rect = pu(mu, t.i) * pv(mv + 1, t.j);
  emit_child(Triangle{t.i, mv, t.k, TriOrientation::upper,
                      tri_box_upper(pu, pv, t.i, mv, t.k, TriOrientation::upper)});
  emit_child(Triangle{mu - 1, t.j, t.k, TriOrientation::upper,
                      tri_box_upper(pu, pv, mu - 1, t.j, t.k, TriOrientation::upper)});
  return rect;
}

}  // namespace detail

/// Probability that independent integer variables (U, V) land in the right
/// triangle {U>=i, V>=j, U+V<=k} (lower) or {U<=i, V<=j, U+V>=k} (upper),
/// bracketed by repeated rectangle splits. Always splits the pending
/// triangle with the largest upper-lower gap, so the bracket gap is
/// non-increasing in the number of refinement steps. Splitting a point
/// triangle resolves it exactly, hence the bracket closes on discrete
/// supports given enough budget.
inline BoundPair triangle_prob_bounds(const IntervalProb& pu, const IntervalProb& pv,
                                      std::int64_t i, std::int64_t j, std::int64_t k,
                                      TriOrientation orient, int max_splits = 64) {
  using detail::Triangle;
  double exact = 0.0;
  std::vector<Triangle> pending;
  Triangle root{i, j, k, orient, detail::tri_box_upper(pu, pv, i, j, k, orient)};
  if (root.side() < 0 || root.box_upper <= 0.0) return {0.0, std::max(0.0, root.box_upper)};
  pending.push_back(root);

  for (int step = 0; step < max_splits && !pending.empty(); ++step) {
    std::size_t worst = 0;
    for (std::size_t q = 1; q < pending.size(); ++q)
      if (pending[q].box_upper > pending[worst].box_upper) worst = q;
    Triangle t = pending[worst];
    pending.erase(pending.begin() + (std::ptrdiff_t)worst);

    if (t.side() <= 1) {
      exact += detail::tri_exact_small(pu, pv, t);
      continue;
    }
    exact += detail::tri_split(pu, pv, t, [&](const Triangle& child) {
      if (child.side() >= 0 && child.box_upper > 0.0) pending.push_back(child);
    });
  }
  double slack = 0.0;
  for (const auto& t : pending) slack += t.box_upper;
  return {exact, exact + slack};
}

/// Exact triangle probability: refinement run to exhaustion.
inline double triangle_prob_exact(const IntervalProb& pu, const IntervalProb& pv, std::int64_t i,
                                  std::int64_t j, std::int64_t k, TriOrientation orient) {
  // Each split halves the leg, so the worst case is ~4*side splits.
  std::int64_t side = orient == TriOrientation::lower ? k - i - j : i + j - k;
  if (side < 0) return 0.0;
  int budget = (int)std::min<std::int64_t>(1 << 24, 8 * (side + 2));
  BoundPair b = triangle_prob_bounds(pu, pv, i, j, k, orient, budget);
  return b.lower;
}

/// The three terms of the identity
///   P{(U,V) in G} = P{ul<=U<=uu} P{vl<=V<=vu} - P{U<=uu, V<=vu, U+V>fl}
///                   - P{U>=ul, V>=vl, U+V<el}
/// for G = {a<=u<=b, c<=v<=d, e<=u+v<=f} and independent U, V; triangles
/// are evaluated exactly.
struct RectDecomposition {
  double product = 0.0;
  double upper_triangle = 0.0;  // P{U <= uu, V <= vu, U+V > fl}
  double lower_triangle = 0.0;  // P{U >= ul, V >= vl, U+V < el}
  double value() const { return product - upper_triangle - lower_triangle; }
};

inline RectDecomposition rect_prob_decompose(const IntervalProb& pu, const IntervalProb& pv,
                                             std::int64_t a, std::int64_t b, std::int64_t c,
                                             std::int64_t d, std::int64_t e, std::int64_t f) {
  RectDecomposition out;
  std::int64_t ebar = std::max(e, a + c);
  std::int64_t fbar = std::min(f, b + d);
  if (ebar > fbar) return out;  // empty G
  std::int64_t ul = std::max(a, ebar - d), uu = std::min(b, fbar - c);
  std::int64_t vl = std::max(c, ebar - b), vu = std::min(d, fbar - a);
  out.product = pu(ul, uu) * pv(vl, vu);
  // strict U+V > fbar and U+V < ebar on an integer lattice
  out.upper_triangle = triangle_prob_exact(pu, pv, uu, vu, fbar + 1, TriOrientation::upper);
  out.lower_triangle = triangle_prob_exact(pu, pv, ul, vl, ebar - 1, TriOrientation::lower);
  return out;
}

}  // namespace seqplan
