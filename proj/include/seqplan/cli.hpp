#pragma once

// Command-line front end: design, check, curve, simulate. Factored into a
// callable so the test suite drives it in-process. Exit codes: 0 success or
// check-pass, 1 check-fail, 2 usage error, 3 internal invariant violation.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "seqplan/coverage.hpp"
#include "seqplan/plan_io.hpp"
#include "seqplan/rules.hpp"
#include "seqplan/sim.hpp"
#include "seqplan/tuning.hpp"

namespace seqplan::cli {

namespace detail {

inline bool parse_range(const std::string& text, double* lo, double* hi) {
  auto colon = text.find(':');
  if (colon == std::string::npos) return false;
  try {
    *lo = std::stod(text.substr(0, colon));
    *hi = std::stod(text.substr(colon + 1));
  } catch (...) {
    return false;
  }
  return *lo < *hi;
}

inline ErrorSpec spec_for(Family family, double eps, double eps_a, double eps_r, double delta) {
  switch (family) {
    case Family::binomial_mix:
    case Family::poisson_mix:
    case Family::bounded_mean_mix:
    case Family::finite_pop_mix:
      return ErrorSpec::mixed(eps_a, eps_r, delta);
    case Family::binomial_rel:
    case Family::binomial_rel_inverse:
    case Family::poisson_rel:
    case Family::bounded_mean_rel:
    case Family::finite_pop_rel:
      return ErrorSpec::relative(eps > 0.0 ? eps : eps_r, delta);
    case Family::bwci_cp:
    case Family::bwci_fishman:
    case Family::bwci_explicit:
      return ErrorSpec::fixed_width(eps > 0.0 ? eps : eps_a, delta);
    default:
      return ErrorSpec::absolute(eps > 0.0 ? eps : eps_a, delta);
  }
}

inline std::string certificate_digest(const AmcaResult& cert) {
  std::string blob;
  char buf[96];
  for (const auto& c : cert.certificate) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g;", c.a, c.b, c.bound);
    blob += buf;
  }
  return seqplan::detail::fnv1a_hex(blob);
}

}  // namespace detail

inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"multistage sampling plan designer"};
  app.require_subcommand(1);

  // ---- design ----
  auto* design = app.add_subcommand("design", "design (and tune) a sampling plan");
  std::string family_s, rule_s = "chernoff", range_s, out_path;
  double eps = 0.0, eps_a = 0.0, eps_r = 0.0, delta = 0.0, rho = 2.0, zeta_arg = 0.0;
  double lambda_bar = 10.0, bounded_lo = 0.0, bounded_hi = 1.0;
  std::int64_t population = 0;
  design->add_option("--family", family_s, "plan family")->required();
  design->add_option("--rule", rule_s, "stopping rule");
  design->add_option("--eps", eps, "error margin (absolute/relative/half-width)");
  design->add_option("--eps-a", eps_a, "absolute margin (mixed criterion)");
  design->add_option("--eps-r", eps_r, "relative margin (mixed criterion)");
  design->add_option("--delta", delta, "confidence parameter")->required();
  design->add_option("--range", range_s, "parameter range lo:hi for tuning");
  design->add_option("--rho", rho, "schedule ratio (C_ell = rho^-ell)");
  design->add_option("--zeta", zeta_arg, "skip tuning, use this coverage tuning parameter");
  design->add_option("--population", population, "population size (finite-pop families)");
  design->add_option("--lambda-bar", lambda_bar, "Poisson parameter-range top");
  design->add_option("--bounded-lo", bounded_lo, "bounded-variable range low");
  design->add_option("--bounded-hi", bounded_hi, "bounded-variable range high");
  design->add_option("--out", out_path, "plan document output path");

  // ---- check ----
  auto* check = app.add_subcommand("check", "verify coverage of a plan document");
  std::string check_file, check_range_s, format = "csv";
  double check_delta = 0.0;
  check->add_option("plan", check_file, "plan document")->required();
  check->add_option("--range", check_range_s, "parameter range lo:hi");
  check->add_option("--delta", check_delta, "override the confidence parameter");
  check->add_option("--format", format, "certificate table format: csv or json");

  // ---- curve ----
  auto* curve = app.add_subcommand("curve", "evaluate coverage/asn/complement on a grid");
  std::string curve_file, what = "complement", curve_range_s;
  int grid = 101;
  curve->add_option("plan", curve_file, "plan document")->required();
  curve->add_option("--grid", grid, "number of grid points");
  curve->add_option("--range", curve_range_s, "parameter range lo:hi");
  curve->add_option("--what", what, "coverage | asn | complement");

  // ---- simulate ----
  auto* simulate_cmd = app.add_subcommand("simulate", "Monte Carlo cross-check");
  std::string sim_file;
  double sim_theta = 0.0;
  std::int64_t trials = 100000;
  std::uint64_t seed = 1;
  simulate_cmd->add_option("plan", sim_file, "plan document")->required();
  simulate_cmd->add_option("--theta", sim_theta, "parameter value")->required();
  simulate_cmd->add_option("--trials", trials, "trial count");
  simulate_cmd->add_option("--seed", seed, "rng seed");

  std::vector<const char*> argv{"seqplan"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse((int)argv.size(), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      out << app.help();
      return 0;
    }
    err << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (design->parsed()) {
      Family family = family_from_string(family_s);
      Rule rule = rule_from_string(rule_s);
      ErrorSpec spec = detail::spec_for(family, eps, eps_a, eps_r, delta);
      PlanOptions popts;
      popts.rho = rho;
      popts.population = population;
      popts.lambda_bar = lambda_bar;
      popts.bounded_lo = bounded_lo;
      popts.bounded_hi = bounded_hi;
      try {
        validate_spec(family, rule, spec);
      } catch (const std::invalid_argument& e) {
        err << "invalid spec: " << e.what() << "\n";
        return 2;
      }
      Plan plan;
      std::string digest;
      double min_coverage = -1.0;
      if (zeta_arg > 0.0) {
        plan = build_plan(family, rule, spec, zeta_arg, popts);
        plan.tuned = false;
      } else {
        TuneOptions topts;
        topts.plan_opts = popts;
        if (!range_s.empty() &&
            !detail::parse_range(range_s, &topts.range_lo, &topts.range_hi)) {
          err << "usage error: --range expects lo:hi with lo < hi\n";
          return 2;
        }
        TuneResult tr = bisection_tune(family, rule, spec, topts);
        plan = tr.plan;
        digest = detail::certificate_digest(tr.certificate);
        double worst = 0.0;
        for (const auto& c : tr.certificate.certificate) worst = std::max(worst, c.bound);
        min_coverage = 1.0 - worst;
      }
      out << "family: " << to_string(family) << "  rule: " << to_string(rule) << "\n";
      out << "tau: " << plan.schedule.tau << (plan.schedule.single_stage ? " (single-stage)" : "")
          << "\n";
      out << (plan.schedule.kind == ScheduleKind::sizes ? "sizes:" : "thresholds:");
      for (auto v : plan.schedule.values) out << " " << v;
      out << "\n";
      out << "zeta" << (plan.tuned ? "*" : " (untuned)") << ": " << plan.zeta << "\n";
      if (min_coverage >= 0.0) out << "certified min coverage: " << min_coverage << "\n";
      if (!out_path.empty()) {
        write_plan_file(plan, out_path, digest);
        out << "wrote " << out_path << "\n";
      }
      return 0;
    }

    if (check->parsed()) {
      Plan plan = read_plan_file(check_file);
      double d = check_delta > 0.0 ? check_delta : plan.spec.delta;
      TuneRange range = default_tune_range(plan.family, plan.opts);
      if (!check_range_s.empty() && !detail::parse_range(check_range_s, &range.lo, &range.hi)) {
        err << "usage error: --range expects lo:hi with lo < hi\n";
        return 2;
      }
      AmcaResult res = check_plan_coverage(plan, d, range);
      if (format == "json") {
        nlohmann::ordered_json j;
        j["pass"] = res.pass;
        j["delta"] = d;
        nlohmann::ordered_json rows = nlohmann::ordered_json::array();
        for (const auto& c : res.certificate)
          rows.push_back({{"a", c.a}, {"b", c.b}, {"bound", c.bound}});
        j["certified"] = std::move(rows);
        out << j.dump(2) << "\n";
      } else {
        out << "a,b,bound\n";
        char buf[96];
        for (const auto& c : res.certificate) {
          std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", c.a, c.b, c.bound);
          out << buf;
        }
        out << (res.pass ? "# pass" : "# fail") << "\n";
      }
      return res.pass ? 0 : 1;
    }

    if (curve->parsed()) {
      Plan plan = read_plan_file(curve_file);
      TuneRange range = default_tune_range(plan.family, plan.opts);
      if (!curve_range_s.empty() && !detail::parse_range(curve_range_s, &range.lo, &range.hi)) {
        err << "usage error: --range expects lo:hi with lo < hi\n";
        return 2;
      }
      if (what != "coverage" && what != "asn" && what != "complement") {
        err << "usage error: --what must be coverage, asn or complement\n";
        return 2;
      }
      if (grid < 1) {
        err << "usage error: --grid must be >= 1\n";
        return 2;
      }
      std::vector<double> thetas;
      if (grid == 1)
        thetas.push_back(0.5 * (range.lo + range.hi));
      else
        for (int g = 0; g < grid; ++g)
          thetas.push_back(range.lo + (range.hi - range.lo) * (double)g / (double)(grid - 1));
      std::vector<std::string> rows(thetas.size());
      CoverageEvaluator shared(plan);
      bool shareable = seqplan::detail::binomial_like(plan.family);
      auto eval_row = [&](std::size_t i) {
        CoverageReport rep = shareable ? shared.complement(thetas[i])
                                       : CoverageEvaluator(plan).complement(thetas[i]);
        double value, eta;
        if (what == "asn") {
          value = rep.asn.lower;
          eta = rep.asn.gap();
        } else if (what == "coverage") {
          value = 1.0 - rep.complement.upper;
          eta = rep.complement.gap();
        } else {
          value = rep.complement.upper;
          eta = rep.complement.gap();
        }
        char buf[128];
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%s,%.17g\n", thetas[i], value,
                      rep.kind == BoundKind::exact ? "exact" : "truncated", eta);
        rows[i] = buf;
      };
      if (shareable)
        parallel_for(thetas.size(), eval_row);
      else
        for (std::size_t i = 0; i < thetas.size(); ++i) eval_row(i);
      out << "theta,value,bound_kind,eta\n";
      for (const auto& r : rows) out << r;
      return 0;
    }

    if (simulate_cmd->parsed()) {
      Plan plan = read_plan_file(sim_file);
      bool theta_ok = true;
      if (seqplan::detail::binomial_like(plan.family) || plan.inverse_sampling())
        theta_ok = sim_theta >= 0.0 && sim_theta <= 1.0;
      else if (seqplan::detail::finite_family(plan.family))
        theta_ok = sim_theta >= 0.0 && sim_theta <= 1.0;
      else
        theta_ok = sim_theta >= 0.0;
      if (!theta_ok) {
        err << "usage error: --theta outside the family's parameter space\n";
        return 2;
      }
      SimReport rep = simulate(plan, sim_theta, trials, seed);
      nlohmann::ordered_json j;
      j["trials"] = rep.trials;
      j["seed"] = rep.seed;
      j["theta"] = rep.theta;
      j["complement"] = rep.complement;
      j["complement_se"] = rep.complement_se;
      j["asn"] = rep.asn;
      j["asn_se"] = rep.asn_se;
      j["stop_stage_histogram"] = rep.stop_stage_histogram;
      if (plan.inverse_sampling()) j["mean_gamma"] = rep.mean_gamma;
      out << j.dump(2) << "\n";
      return 0;
    }
  } catch (const PlanDocumentError& e) {
    err << "plan document error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 3;
  }
  err << "usage error: no subcommand\n";
  return 2;
}

}  // namespace seqplan::cli
