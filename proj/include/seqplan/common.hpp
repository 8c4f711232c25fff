#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace seqplan {

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();
inline constexpr double pos_inf = std::numeric_limits<double>::infinity();

/// Closed real bracket [lower, upper] used by every bounding routine.
struct BoundPair {
  double lower = 0.0;
  double upper = 0.0;

  double gap() const { return upper - lower; }
  bool contains(double x) const { return lower <= x && x <= upper; }
};

/// Closed integer interval [lo, hi]; empty when lo > hi.
struct IntInterval {
  std::int64_t lo = 0;
  std::int64_t hi = -1;

  bool empty() const { return lo > hi; }
  std::int64_t count() const { return empty() ? 0 : hi - lo + 1; }
  bool contains(std::int64_t k) const { return lo <= k && k <= hi; }
};

/// Sorts, merges overlapping/adjacent intervals, drops empties.
inline std::vector<IntInterval> normalize_intervals(std::vector<IntInterval> v) {
  std::vector<IntInterval> in;
  for (const auto& it : v)
    if (!it.empty()) in.push_back(it);
  std::sort(in.begin(), in.end(),
            [](const IntInterval& a, const IntInterval& b) { return a.lo < b.lo; });
  std::vector<IntInterval> out;
  for (const auto& it : in) {
    if (!out.empty() && it.lo <= out.back().hi + 1)
      out.back().hi = std::max(out.back().hi, it.hi);
    else
      out.push_back(it);
  }
  return out;
}

inline bool intervals_contain(const std::vector<IntInterval>& v, std::int64_t k) {
  for (const auto& it : v)
    if (it.contains(k)) return true;
  return false;
}

inline std::int64_t intervals_count(const std::vector<IntInterval>& v) {
  std::int64_t c = 0;
  for (const auto& it : v) c += it.count();
  return c;
}

/// Worker cap from SEQPLAN_THREADS (0 or unset = hardware concurrency).
inline unsigned thread_budget() {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SEQPLAN_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v >= 0) return v == 0 ? hw : std::min<unsigned>(hw, (unsigned)v);
  }
  return hw;
}

/// Static partition of [0, n) across the thread budget; deterministic
/// regardless of worker count (workers write disjoint index ranges).
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  unsigned workers = thread_budget();
  if (workers <= 1 || n < 2 * workers) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::size_t chunk = (n + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    std::size_t b = w * chunk, e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&, b, e] {
      for (std::size_t i = b; i < e; ++i) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace seqplan
