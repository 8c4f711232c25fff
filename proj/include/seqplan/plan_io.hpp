#pragma once

// Plan documents: a self-describing JSON text format with an explicit
// schema version. Stored boundaries are redundant with (family, rule, spec,
// zeta, schedule) and are cross-checked against a rebuild on load.

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "seqplan/rules.hpp"

namespace seqplan {

inline constexpr int plan_schema_version = 1;
inline constexpr const char* seqplan_version = "0.1.0";

class PlanDocumentError : public std::runtime_error {
 public:
  explicit PlanDocumentError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {

inline const char* kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::absolute: return "absolute";
    case ErrorKind::relative: return "relative";
    case ErrorKind::mixed: return "mixed";
    case ErrorKind::fixed_width: return "fixed-width";
  }
  return "?";
}

inline ErrorKind kind_from_name(const std::string& s) {
  for (ErrorKind k : {ErrorKind::absolute, ErrorKind::relative, ErrorKind::mixed,
                      ErrorKind::fixed_width})
    if (s == kind_name(k)) return k;
  throw PlanDocumentError("unknown error kind: " + s);
}

// FNV-1a over a string; used as the tuning-certificate digest
inline std::string fnv1a_hex(const std::string& data) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
  return buf;
}

}  // namespace detail

inline nlohmann::ordered_json plan_to_json(const Plan& plan,
                                           const std::string& certificate_digest = "") {
  nlohmann::ordered_json j;
  j["schema_version"] = plan_schema_version;
  j["family"] = to_string(plan.family);
  j["rule"] = to_string(plan.rule);
  j["spec"] = {{"kind", detail::kind_name(plan.spec.kind)},
               {"eps_a", plan.spec.eps_a},
               {"eps_r", plan.spec.eps_r},
               {"delta", plan.spec.delta}};
  j["zeta"] = plan.zeta;
  j["tuned"] = plan.tuned;
  j["options"] = {{"rho", plan.opts.rho},
                  {"design_point", plan.opts.design_point},
                  {"lambda_bar", plan.opts.lambda_bar},
                  {"lambda_low", plan.opts.lambda_low},
                  {"population", plan.opts.population},
                  {"bounded_lo", plan.opts.bounded_lo},
                  {"bounded_hi", plan.opts.bounded_hi},
                  {"eta_horizon", plan.opts.eta_horizon},
                  {"tau_override", plan.opts.tau_override}};
  j["schedule"] = {{"kind", plan.schedule.kind == ScheduleKind::sizes ? "sizes" : "thresholds"},
                   {"values", plan.schedule.values},
                   {"rho", plan.schedule.rho},
                   {"tau", plan.schedule.tau},
                   {"infinite", plan.schedule.infinite},
                   {"horizon", plan.schedule.horizon},
                   {"single_stage", plan.schedule.single_stage},
                   {"delta", plan.schedule.delta}};
  nlohmann::ordered_json bounds = nlohmann::ordered_json::array();
  for (const auto& sb : plan.boundaries) {
    nlohmann::ordered_json b;
    b["stage"] = sb.stage;
    nlohmann::ordered_json ivs = nlohmann::ordered_json::array();
    for (const auto& iv : sb.continue_set) ivs.push_back({iv.lo, iv.hi});
    b["continue"] = std::move(ivs);
    b["unbounded_above"] = sb.unbounded_above;
    b["forced_stop"] = sb.forced_stop;
    b["lo_clamped"] = sb.lo_clamped;
    b["hi_clamped"] = sb.hi_clamped;
    bounds.push_back(std::move(b));
  }
  j["boundaries"] = std::move(bounds);
  j["provenance"] = {{"tool", "seqplan"},
                     {"version", seqplan_version},
                     {"tuning_certificate_digest",
                      certificate_digest.empty() ? "untuned" : certificate_digest}};
  return j;
}

inline std::string serialize_plan(const Plan& plan, const std::string& digest = "") {
  return plan_to_json(plan, digest).dump(2) + "\n";
}

/// Parses a plan document; with verify_boundaries, rebuilds the boundaries
/// from (family, rule, spec, zeta, schedule) and fails loudly with a diff
/// when the stored ones disagree.
inline Plan parse_plan(const std::string& text, bool verify_boundaries = true) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    throw PlanDocumentError(std::string("not a plan document: ") + e.what());
  }
  if (!j.contains("schema_version") || j["schema_version"].get<int>() != plan_schema_version)
    throw PlanDocumentError("unsupported schema_version");
  Plan p;
  p.family = family_from_string(j.at("family").get<std::string>());
  p.rule = rule_from_string(j.at("rule").get<std::string>());
  const auto& sp = j.at("spec");
  p.spec.kind = detail::kind_from_name(sp.at("kind").get<std::string>());
  p.spec.eps_a = sp.at("eps_a").get<double>();
  p.spec.eps_r = sp.at("eps_r").get<double>();
  p.spec.delta = sp.at("delta").get<double>();
  p.zeta = j.at("zeta").get<double>();
  p.tuned = j.at("tuned").get<bool>();
  const auto& op = j.at("options");
  p.opts.rho = op.at("rho").get<double>();
  p.opts.design_point = op.at("design_point").get<double>();
  p.opts.lambda_bar = op.at("lambda_bar").get<double>();
  p.opts.lambda_low = op.at("lambda_low").get<double>();
  p.opts.population = op.at("population").get<std::int64_t>();
  p.opts.bounded_lo = op.at("bounded_lo").get<double>();
  p.opts.bounded_hi = op.at("bounded_hi").get<double>();
  p.opts.eta_horizon = op.at("eta_horizon").get<double>();
  p.opts.tau_override = op.at("tau_override").get<int>();
  const auto& sc = j.at("schedule");
  p.schedule.kind = sc.at("kind").get<std::string>() == "sizes" ? ScheduleKind::sizes
                                                                : ScheduleKind::thresholds;
  p.schedule.values = sc.at("values").get<std::vector<std::int64_t>>();
  p.schedule.rho = sc.at("rho").get<double>();
  p.schedule.tau = sc.at("tau").get<int>();
  p.schedule.infinite = sc.at("infinite").get<bool>();
  p.schedule.horizon = sc.at("horizon").get<int>();
  p.schedule.single_stage = sc.at("single_stage").get<bool>();
  p.schedule.delta = sc.at("delta").get<double>();
  for (const auto& b : j.at("boundaries")) {
    StageBoundary sb;
    sb.stage = b.at("stage").get<int>();
    for (const auto& iv : b.at("continue"))
      sb.continue_set.push_back({iv.at(0).get<std::int64_t>(), iv.at(1).get<std::int64_t>()});
    sb.unbounded_above = b.at("unbounded_above").get<bool>();
    sb.forced_stop = b.at("forced_stop").get<bool>();
    sb.lo_clamped = b.at("lo_clamped").get<bool>();
    sb.hi_clamped = b.at("hi_clamped").get<bool>();
    p.boundaries.push_back(std::move(sb));
  }

  if (verify_boundaries) {
    bool bounded_family = p.family == Family::bounded_mean_abs ||
                          p.family == Family::bounded_mean_rel ||
                          p.family == Family::bounded_mean_mix;
    if (!bounded_family) {
      std::vector<StageBoundary> rebuilt =
          build_boundaries(p.family, p.rule, p.spec, p.zeta, p.schedule, p.opts);
      std::ostringstream diff;
      bool mismatch = rebuilt.size() != p.boundaries.size();
      for (std::size_t i = 0; !mismatch && i < rebuilt.size(); ++i) {
        const auto &a = p.boundaries[i], &b = rebuilt[i];
        if (a.continue_set.size() != b.continue_set.size() ||
            a.forced_stop != b.forced_stop) {
          mismatch = true;
          diff << "stage " << i + 1 << ": stored " << a.continue_set.size()
               << " interval(s), rebuilt " << b.continue_set.size();
          break;
        }
        for (std::size_t q = 0; q < a.continue_set.size(); ++q)
          if (a.continue_set[q].lo != b.continue_set[q].lo ||
              a.continue_set[q].hi != b.continue_set[q].hi) {
            mismatch = true;
            diff << "stage " << i + 1 << " interval " << q << ": stored ["
                 << a.continue_set[q].lo << "," << a.continue_set[q].hi << "] rebuilt ["
                 << b.continue_set[q].lo << "," << b.continue_set[q].hi << "]";
            break;
          }
      }
      if (mismatch)
        throw PlanDocumentError("stored boundaries disagree with a rebuild: " + diff.str());
    }
  }
  return p;
}

inline void write_plan_file(const Plan& plan, const std::string& path,
                            const std::string& digest = "") {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << serialize_plan(plan, digest);
}

inline Plan read_plan_file(const std::string& path, bool verify = true) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_plan(ss.str(), verify);
}

}  // namespace seqplan
