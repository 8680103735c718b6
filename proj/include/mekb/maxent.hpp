#pragma once

// Minimum-relative-entropy solver over a factored distribution: single-rule
// projections (float and ground), the cyclic sweep loop with inconsistency
// detection, and the entropy ledger.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "mekb/engine.hpp"
#include "mekb/error.hpp"
#include "mekb/model.hpp"
#include "mekb/parser.hpp"
#include "mekb/projection.hpp"

namespace mekb {

// ---------------------------------------------------------------------------
// Entropies (bits). 0 * ld 0 := 0.

struct RelativeEntropy {
  double bits = 0.0;
  bool infinite = false;  // p puts mass outside the support of p0
};

inline RelativeEntropy relative_entropy(std::span<const double> p, std::span<const double> p0) {
  if (p.size() != p0.size()) throw Error(ErrorKind::kSchema, "distributions of different size");
  RelativeEntropy r;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (p0[i] <= 0.0) {
      r.infinite = true;
      r.bits = std::numeric_limits<double>::infinity();
      return r;
    }
    r.bits += p[i] * std::log2(p[i] / p0[i]);
  }
  return r;
}

inline RelativeEntropy relative_entropy(const Table& p, const Table& p0) {
  if (!(p.scope() == p0.scope())) throw Error(ErrorKind::kSchema, "tables over different scopes");
  return relative_entropy(p.cells(), p0.cells());
}

inline double absolute_entropy(std::span<const double> p) {
  double h = 0.0;
  for (double x : p)
    if (x > 0.0) h -= x * std::log2(x);
  return h;
}

inline double absolute_entropy(const Table& p) { return absolute_entropy(p.cells()); }

// H(P) of the junction-tree factorisation: sum of LEG entropies minus sum of
// separator entropies.
inline double absolute_entropy(const FactoredDistribution& dist) {
  double h = 0.0;
  for (const Table& leg : dist.legs()) h += absolute_entropy(leg);
  const Hypertree& ht = dist.tree();
  for (std::size_t e = 0; e < ht.edges.size(); ++e)
    if (!ht.separators[e].empty())
      h -= absolute_entropy(dist.leg(ht.edges[e].first).marginal(ht.separators[e]));
  return std::max(h, 0.0);
}

// ld of the number of worlds.
inline double uniform_entropy(const Schema& schema) {
  double h = 0.0;
  for (const Variable& v : schema) h += std::log2(static_cast<double>(v.size()));
  return h;
}

// ---------------------------------------------------------------------------
// Rules bound to a hypertree

struct CompiledRule {
  Rule rule;
  std::size_t home = 0;
  std::vector<std::uint8_t> premise_mask;     // over the home LEG
  std::vector<std::uint8_t> conclusion_mask;  // over the home LEG
};

inline CompiledRule compile_rule(const FactoredDistribution& dist, const Rule& rule) {
  const auto home = dist.tree().covering(cluster_of(rule));
  if (!home)
    throw Error(ErrorKind::kInternal, "rule " + rule.id + " has no home hyperedge", rule.id);
  const Scope& scope = dist.leg(*home).scope();
  return CompiledRule{rule, *home, truth_table(scope, rule.premise),
                      truth_table(scope, rule.conclusion)};
}

inline std::vector<CompiledRule> compile_rules(const FactoredDistribution& dist,
                                               const std::vector<Rule>& rules) {
  std::vector<CompiledRule> out;
  out.reserve(rules.size());
  for (const Rule& r : rules) out.push_back(compile_rule(dist, r));
  return out;
}

struct RuleResidual {
  std::string rule_id;
  double achieved = 0.0;  // current P(F2|F1); 0 when the premise has no mass
  double target = 0.0;
  double residual = 0.0;
  bool premise_defined = true;
};

inline RuleResidual residual_of(const FactoredDistribution& dist, const CompiledRule& cr) {
  const RuleMasses m =
      rule_masses(dist.leg(cr.home).cells(), cr.premise_mask, cr.conclusion_mask);
  RuleResidual r{cr.rule.id, 0.0, cr.rule.target, 1.0, m.premise() > 0.0};
  if (r.premise_defined) {
    r.achieved = std::clamp(m.both / m.premise(), 0.0, 1.0);
    r.residual = std::abs(r.achieved - r.target);
  }
  return r;
}

// Projects the rule's home LEG and propagates. Returns the projection step
// (its increment is R(P_new, P_old) in bits).
inline ProjectionStep apply_rule(FactoredDistribution& dist, const CompiledRule& cr) {
  ProjectionStep step =
      project_cells(dist.leg(cr.home).cells(), cr.premise_mask, cr.conclusion_mask,
                    cr.rule.target, cr.rule.mode, cr.rule.id);
  try {
    propagate_from(dist, cr.home);
  } catch (const Error& e) {
    throw Error(e.kind(), "rule " + cr.rule.id + ": " + e.detail(), cr.rule.id);
  }
  return step;
}

inline ProjectionStep apply_rule(FactoredDistribution& dist, const Rule& rule) {
  return apply_rule(dist, compile_rule(dist, rule));
}

// ---------------------------------------------------------------------------
// Ledger and reports

struct LedgerEntry {
  std::size_t sweep = 0;
  std::string rule_id;
  double increment_bits = 0.0;
  double cumulative_bits = 0.0;
  double absolute_entropy_bits = 0.0;
  double uniform_minus_cumulative_bits = 0.0;
};

struct EntropyLedger {
  double uniform_entropy_bits = 0.0;
  double initial_entropy_bits = 0.0;
  std::vector<LedgerEntry> entries;

  double cumulative_bits() const { return entries.empty() ? 0.0 : entries.back().cumulative_bits; }
  double absolute_entropy_bits() const {
    return entries.empty() ? initial_entropy_bits : entries.back().absolute_entropy_bits;
  }
};

enum class SolveStatus { kConverged, kInconsistent, kSweepLimit };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::kConverged: return "converged";
    case SolveStatus::kInconsistent: return "inconsistent";
    case SolveStatus::kSweepLimit: return "sweep-limit";
  }
  return "?";
}

inline std::optional<SolveStatus> parse_solve_status(std::string_view s) {
  if (s == "converged") return SolveStatus::kConverged;
  if (s == "inconsistent") return SolveStatus::kInconsistent;
  if (s == "sweep-limit") return SolveStatus::kSweepLimit;
  return std::nullopt;
}

struct SolveReport {
  SolveStatus status = SolveStatus::kConverged;
  std::size_t sweeps = 0;
  std::vector<RuleResidual> residuals;
  std::vector<double> sweep_max_residuals;  // one per completed sweep
  EntropyLedger ledger;
  std::vector<std::string> offending_rules;  // set when inconsistent
  std::string message;

  double max_residual() const {
    double m = 0.0;
    for (const auto& r : residuals) m = std::max(m, r.residual);
    return m;
  }
};

struct SweepProgress {
  std::size_t sweep = 0;
  double max_residual = 0.0;
  double absolute_entropy_bits = 0.0;
};

inline std::vector<RuleResidual> residuals_of(const FactoredDistribution& dist,
                                              const std::vector<CompiledRule>& rules) {
  std::vector<RuleResidual> out;
  for (const auto& cr : rules) out.push_back(residual_of(dist, cr));
  return out;
}

namespace detail {

inline double max_of(const std::vector<RuleResidual>& rs) {
  double m = 0.0;
  for (const auto& r : rs) m = std::max(m, r.residual);
  return m;
}

inline std::vector<std::string> largest_residual_rules(const std::vector<RuleResidual>& rs) {
  const double worst = max_of(rs);
  std::vector<const RuleResidual*> picked;
  for (const auto& r : rs)
    if (r.residual >= 0.5 * worst && r.residual > 0.0) picked.push_back(&r);
  std::stable_sort(picked.begin(), picked.end(),
                   [](const RuleResidual* a, const RuleResidual* b) { return a->residual > b->residual; });
  std::vector<std::string> out;
  for (const auto* r : picked) out.push_back(r->rule_id);
  return out;
}

}  // namespace detail

// Applies `rules` cyclically in order until every residual is within
// options.tolerance. Infeasible projections and residual plateaus end the
// run as inconsistent; the distribution then holds the last state reached.
inline SolveReport solve(FactoredDistribution& dist, const std::vector<CompiledRule>& rules,
                         const SolverOptions& options, double uniform_entropy_bits,
                         const std::function<void(const SweepProgress&)>& progress = {}) {
  SolveReport report;
  report.ledger.uniform_entropy_bits = uniform_entropy_bits;
  report.ledger.initial_entropy_bits = absolute_entropy(dist);
  report.residuals = residuals_of(dist, rules);
  if (detail::max_of(report.residuals) <= options.tolerance) {
    report.status = SolveStatus::kConverged;
    return report;
  }
  double cumulative = 0.0;
  for (std::size_t sweep = 1; sweep <= options.max_sweeps; ++sweep) {
    for (const CompiledRule& cr : rules) {
      ProjectionStep step;
      try {
        step = apply_rule(dist, cr);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kInfeasibleRule && e.kind() != ErrorKind::kPropagationSupport)
          throw;
        report.status = SolveStatus::kInconsistent;
        report.sweeps = sweep;
        report.offending_rules = {cr.rule.id};
        report.message = e.detail();
        report.residuals = residuals_of(dist, rules);
        return report;
      }
      cumulative += step.increment_bits;
      const double h = absolute_entropy(dist);
      report.ledger.entries.push_back(
          {sweep, cr.rule.id, step.increment_bits, cumulative, h, uniform_entropy_bits - cumulative});
    }
    report.sweeps = sweep;
    report.residuals = residuals_of(dist, rules);
    const double worst = detail::max_of(report.residuals);
    report.sweep_max_residuals.push_back(worst);
    if (progress) progress({sweep, worst, report.ledger.absolute_entropy_bits()});
    if (worst <= options.tolerance) {
      report.status = SolveStatus::kConverged;
      return report;
    }
    const std::size_t w = options.plateau_window;
    if (w > 0 && sweep > w) {
      const double earlier = report.sweep_max_residuals[sweep - 1 - w];
      if (worst >= earlier * (1.0 - 1e-9)) {
        report.status = SolveStatus::kInconsistent;
        report.offending_rules = detail::largest_residual_rules(report.residuals);
        report.message = "residuals stopped decreasing over " + std::to_string(w) + " sweeps";
        return report;
      }
    }
  }
  report.status = SolveStatus::kSweepLimit;
  report.message = "sweep limit reached";
  return report;
}

inline SolveReport solve(FactoredDistribution& dist, const std::vector<Rule>& rules,
                         const SolverOptions& options, const Schema& schema,
                         const std::function<void(const SweepProgress&)>& progress = {}) {
  return solve(dist, compile_rules(dist, rules), options, uniform_entropy(schema), progress);
}

// ---------------------------------------------------------------------------
// Ledger export

inline std::string ledger_csv(const EntropyLedger& ledger) {
  std::ostringstream out;
  out.precision(17);
  out << "sweep,rule,increment_bits,cumulative_bits,absolute_entropy_bits,"
         "uniform_minus_cumulative_bits\n";
  for (const auto& e : ledger.entries)
    out << e.sweep << ',' << e.rule_id << ',' << e.increment_bits << ',' << e.cumulative_bits << ','
        << e.absolute_entropy_bits << ',' << e.uniform_minus_cumulative_bits << '\n';
  return out.str();
}

inline nlohmann::json ledger_json(const EntropyLedger& ledger) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : ledger.entries)
    entries.push_back({{"sweep", e.sweep},
                       {"rule", e.rule_id},
                       {"increment_bits", e.increment_bits},
                       {"cumulative_bits", e.cumulative_bits},
                       {"absolute_entropy_bits", e.absolute_entropy_bits},
                       {"uniform_minus_cumulative_bits", e.uniform_minus_cumulative_bits}});
  return {{"uniform_entropy_bits", ledger.uniform_entropy_bits},
          {"initial_entropy_bits", ledger.initial_entropy_bits},
          {"entries", entries}};
}

inline EntropyLedger ledger_from_json(const nlohmann::json& j) {
  EntropyLedger l;
  l.uniform_entropy_bits = j.at("uniform_entropy_bits").get<double>();
  l.initial_entropy_bits = j.at("initial_entropy_bits").get<double>();
  for (const auto& e : j.at("entries"))
    l.entries.push_back({e.at("sweep").get<std::size_t>(), e.at("rule").get<std::string>(),
                         e.at("increment_bits").get<double>(), e.at("cumulative_bits").get<double>(),
                         e.at("absolute_entropy_bits").get<double>(),
                         e.at("uniform_minus_cumulative_bits").get<double>()});
  return l;
}

inline nlohmann::json report_json(const SolveReport& r) {
  nlohmann::json residuals = nlohmann::json::array();
  for (const auto& x : r.residuals)
    residuals.push_back({{"rule", x.rule_id},
                         {"achieved", x.achieved},
                         {"target", x.target},
                         {"residual", x.residual},
                         {"premise_defined", x.premise_defined}});
  return {{"status", to_string(r.status)},
          {"sweeps", r.sweeps},
          {"max_residual", r.max_residual()},
          {"residuals", residuals},
          {"sweep_max_residuals", r.sweep_max_residuals},
          {"offending_rules", r.offending_rules},
          {"message", r.message},
          {"ledger", ledger_json(r.ledger)}};
}

inline SolveReport report_from_json(const nlohmann::json& j) {
  SolveReport r;
  auto status = parse_solve_status(j.at("status").get<std::string>());
  if (!status) throw Error(ErrorKind::kParse, "unknown solve status");
  r.status = *status;
  r.sweeps = j.at("sweeps").get<std::size_t>();
  for (const auto& x : j.at("residuals"))
    r.residuals.push_back({x.at("rule").get<std::string>(), x.at("achieved").get<double>(),
                           x.at("target").get<double>(), x.at("residual").get<double>(),
                           x.at("premise_defined").get<bool>()});
  r.sweep_max_residuals = j.at("sweep_max_residuals").get<std::vector<double>>();
  r.offending_rules = j.at("offending_rules").get<std::vector<std::string>>();
  r.message = j.at("message").get<std::string>();
  r.ledger = ledger_from_json(j.at("ledger"));
  return r;
}

// Human-readable iteration report.
inline std::string ledger_snapshot(const SolveReport& r) {
  std::ostringstream out;
  char buf[160];
  out << "status: " << to_string(r.status) << "\n";
  out << "sweeps: " << r.sweeps << "\n";
  std::snprintf(buf, sizeof buf, "uniform entropy: %.6f bits\n", r.ledger.uniform_entropy_bits);
  out << buf;
  out << "sweep  rule          increment   cumulative   absolute   uniform-cumulative\n";
  for (const auto& e : r.ledger.entries) {
    std::snprintf(buf, sizeof buf, "%5zu  %-12s %10.6f %12.6f %10.6f %20.6f\n", e.sweep,
                  e.rule_id.c_str(), e.increment_bits, e.cumulative_bits, e.absolute_entropy_bits,
                  e.uniform_minus_cumulative_bits);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "absolute entropy: %.6f bits\n", r.ledger.absolute_entropy_bits());
  out << buf;
  std::snprintf(buf, sizeof buf, "cumulative relative entropy: %.6f bits\n",
                r.ledger.cumulative_bits());
  out << buf;
  for (const auto& x : r.residuals) {
    std::snprintf(buf, sizeof buf, "residual %-12s achieved %.6f target %.6f |diff| %.3e\n",
                  x.rule_id.c_str(), x.achieved, x.target, x.residual);
    out << buf;
  }
  if (!r.offending_rules.empty()) {
    out << "offending rules:";
    for (const auto& id : r.offending_rules) out << " " << id;
    out << "\n";
  }
  if (!r.message.empty()) out << "note: " << r.message << "\n";
  return out.str();
}

}  // namespace mekb
