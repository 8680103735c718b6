#pragma once

// Alpha-learning (per-cell blending of LEGs with sample frequencies, then a
// re-solve) and forward sampling over the hypertree.

#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mekb/engine.hpp"
#include "mekb/error.hpp"
#include "mekb/knowledge_base.hpp"
#include "mekb/maxent.hpp"
#include "mekb/model.hpp"
#include "mekb/parser.hpp"

namespace mekb {

// Complete realisations of all KB variables, one row per draw; row values are
// aligned with the schema's declaration order.
struct Sample {
  std::vector<std::vector<ValueIndex>> rows;
  std::string provenance;
};

// Deterministic source of uniform doubles in [0, 1): 64-bit Mersenne Twister
// (std::mt19937_64), top 53 bits of each output.
class UniformSource {
 public:
  explicit UniformSource(std::uint64_t seed) : engine_(seed) {}
  double next() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 engine_;
};

// Root LEG first, then every other hyperedge conditional on the separator
// values its parent already fixed, in breadth-first order from the root.
inline Sample draw_sample(const FactoredDistribution& dist, std::size_t n, std::uint64_t seed,
                          std::size_t variable_count) {
  Sample out;
  out.provenance = "forward sample, n=" + std::to_string(n) + ", seed=" + std::to_string(seed) +
                   ", generator=mt19937_64";
  if (n == 0 || dist.size() == 0) return out;
  const Hypertree& ht = dist.tree();

  struct Step {
    std::size_t node;
    Scope sep_scope;
    std::vector<std::vector<std::size_t>> cells;  // per separator config
    std::vector<std::vector<double>> cumulative;  // per separator config
  };
  std::vector<Step> plan;
  for (const auto& [node, edge] : ht.bfs(0)) {
    const Table& leg = dist.leg(node);
    Step step{node, Scope(edge ? ht.separators[*edge] : VarSet{}, [&] {
                std::vector<std::size_t> cards;
                if (edge)
                  for (VarId v : ht.separators[*edge])
                    cards.push_back(leg.scope().cards()[*leg.scope().position(v)]);
                return cards;
              }()),
              {},
              {}};
    step.cells.resize(step.sep_scope.cell_count());
    step.cumulative.resize(step.sep_scope.cell_count());
    const auto map = leg.scope().projection_map(step.sep_scope);
    for (std::size_t i = 0; i < leg.size(); ++i) {
      if (leg[i] <= 0.0) continue;
      auto& cum = step.cumulative[map[i]];
      step.cells[map[i]].push_back(i);
      cum.push_back((cum.empty() ? 0.0 : cum.back()) + leg[i]);
    }
    plan.push_back(std::move(step));
  }

  UniformSource rng(seed);
  out.rows.reserve(n);
  std::vector<ValueIndex> digits, sep_values;
  for (std::size_t r = 0; r < n; ++r) {
    std::vector<ValueIndex> row(variable_count, 0);
    for (const Step& step : plan) {
      sep_values.resize(step.sep_scope.arity());
      for (std::size_t k = 0; k < step.sep_scope.arity(); ++k) sep_values[k] = row[step.sep_scope.vars()[k]];
      const std::size_t s = step.sep_scope.encode(sep_values);
      const auto& cum = step.cumulative[s];
      if (cum.empty()) throw Error(ErrorKind::kInternal, "sampled a separator configuration with no mass");
      const double u = rng.next() * cum.back();
      std::size_t pick = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
      if (pick >= cum.size()) pick = cum.size() - 1;
      const Table& leg = dist.leg(step.node);
      leg.scope().decode(step.cells[s][pick], digits);
      for (std::size_t k = 0; k < digits.size(); ++k) row[leg.scope().vars()[k]] = digits[k];
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

// Relative frequency of every configuration of `scope` in the sample.
inline Table sample_frequencies(const Sample& sample, const Scope& scope) {
  Table f(scope);
  if (sample.rows.empty()) return f;
  std::vector<ValueIndex> vals(scope.arity());
  for (const auto& row : sample.rows) {
    for (std::size_t k = 0; k < scope.arity(); ++k) vals[k] = row.at(scope.vars()[k]);
    f[scope.encode(vals)] += 1.0;
  }
  for (double& x : f.cells()) x /= static_cast<double>(sample.rows.size());
  return f;
}

inline void check_alpha(double alpha, const Sample& sample) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw Error(ErrorKind::kRange, "alpha must lie in [0, 1]");
  if (alpha > 0.0 && sample.rows.empty())
    throw Error(ErrorKind::kRange, "alpha > 0 needs a non-empty sample");
}

// p_new = (1 - alpha) p_old + alpha f in every cell of every LEG, nothing
// else. Blended LEGs of a calibrated distribution stay calibrated up to
// rounding, since both sides of a separator blend the same marginals.
inline FactoredDistribution blend_cells(const FactoredDistribution& dist, const Sample& sample, double alpha) {
  check_alpha(alpha, sample);
  FactoredDistribution out = dist;
  if (alpha == 0.0) return out;
  for (std::size_t h = 0; h < out.size(); ++h) {
    Table& leg = out.leg(h);
    const Table f = sample_frequencies(sample, leg.scope());
    for (std::size_t i = 0; i < leg.size(); ++i) leg[i] = (1.0 - alpha) * leg[i] + alpha * f[i];
  }
  return out;
}

// blend_cells followed by renormalisation and one propagation pass from the
// root, so rule targets can be re-read from a calibrated state.
inline FactoredDistribution blend(const FactoredDistribution& dist, const Sample& sample, double alpha) {
  FactoredDistribution out = blend_cells(dist, sample, alpha);
  if (alpha == 0.0 || out.size() == 0) return out;
  for (std::size_t h = 0; h < out.size(); ++h) out.leg(h).normalize();
  propagate_from(out, 0);
  return out;
}

struct AlphaLearnResult {
  FactoredDistribution dist;
  std::vector<Rule> rules;  // targets re-read from the blended distribution
  SolveReport report;
  std::vector<std::string> warnings;
  bool changed = true;  // false for alpha = 0
};

// Blends, re-reads every rule's target as its conditional under the blended
// distribution, and re-solves starting from the blended distribution.
inline AlphaLearnResult alpha_learn(const FactoredDistribution& dist, const Sample& sample, double alpha,
                                    const std::vector<Rule>& rules, const SolverOptions& options,
                                    const Schema& schema) {
  check_alpha(alpha, sample);
  for (const auto& row : sample.rows) {
    if (row.size() != schema.size()) throw Error(ErrorKind::kSchema, "sample row has the wrong width");
    for (VarId v = 0; v < schema.size(); ++v)
      if (row[v] >= schema[v].size()) throw Error(ErrorKind::kSchema, "sample value outside the domain");
  }
  AlphaLearnResult out{dist, rules, {}, {}, alpha != 0.0};
  if (alpha == 0.0) {
    out.report = solve(out.dist, out.rules, options, schema);
    return out;
  }
  out.dist = blend(dist, sample, alpha);
  out.rules.clear();
  for (const Rule& r : rules) {
    const RuleResidual now = residual_of(out.dist, compile_rule(out.dist, r));
    if (!now.premise_defined) {
      out.warnings.push_back("rule " + r.id + " dropped: premise has probability zero after blending");
      continue;
    }
    Rule updated = r;
    updated.target = now.achieved;
    out.rules.push_back(std::move(updated));
  }
  out.report = solve(out.dist, out.rules, options, schema);
  return out;
}

struct LearnedKnowledgeBase {
  KnowledgeBase kb;
  std::vector<std::string> warnings;
  bool changed = true;
};

// alpha_learn on a whole knowledge base. When the re-solve leaves the
// distribution where it was (alpha 0 on a converged base) the base comes back
// untouched, report included, so a saved archive is byte-identical.
inline LearnedKnowledgeBase learn(const KnowledgeBase& kb, const Sample& sample, double alpha) {
  AlphaLearnResult r = alpha_learn(kb.dist, sample, alpha, kb.rules, kb.options, kb.schema);
  if (!r.changed && r.report.sweeps == 0) return {kb, std::move(r.warnings), false};
  return {KnowledgeBase{kb.schema, std::move(r.rules), kb.options, std::move(r.dist), std::move(r.report)},
          std::move(r.warnings), r.changed};
}

// ---------------------------------------------------------------------------
// CSV sample files: header of variable names, one row per realisation.

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t begin = 0;
  while (true) {
    const std::size_t comma = line.find(',', begin);
    std::string_view cell = line.substr(begin, comma == std::string_view::npos ? line.npos : comma - begin);
    const auto a = cell.find_first_not_of(" \t\r");
    const auto b = cell.find_last_not_of(" \t\r");
    out.emplace_back(a == std::string_view::npos ? std::string_view{} : cell.substr(a, b - a + 1));
    if (comma == std::string_view::npos) break;
    begin = comma + 1;
  }
  return out;
}

}  // namespace detail

inline std::string sample_to_csv(const Sample& sample, const Schema& schema) {
  std::ostringstream out;
  for (VarId v = 0; v < schema.size(); ++v) out << (v ? "," : "") << schema[v].name;
  out << "\n";
  for (const auto& row : sample.rows) {
    for (VarId v = 0; v < schema.size(); ++v) out << (v ? "," : "") << schema[v].values[row[v]];
    out << "\n";
  }
  return out.str();
}

// Columns may come in any order but must name every variable exactly once.
inline Sample sample_from_csv(std::string_view text, const Schema& schema) {
  Sample sample;
  sample.provenance = "csv";
  std::size_t line_no = 0, begin = 0;
  std::vector<VarId> column_var;
  while (begin < text.size()) {
    std::size_t end = text.find('\n', begin);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(begin, end - begin);
    begin = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const auto cells = detail::split_csv_line(line);
    if (column_var.empty()) {
      std::vector<char> seen(schema.size(), 0);
      for (const auto& name : cells) {
        auto v = schema.find(name);
        if (!v) throw Error(ErrorKind::kSchema, "unknown variable '" + name + "' in header", SourcePos{line_no, 0}, name);
        if (seen[*v]) throw Error(ErrorKind::kSchema, "variable '" + name + "' repeated in header", SourcePos{line_no, 0}, name);
        seen[*v] = 1;
        column_var.push_back(*v);
      }
      if (column_var.size() != schema.size())
        throw Error(ErrorKind::kSchema, "header must list every variable", SourcePos{line_no, 0});
      continue;
    }
    if (cells.size() != column_var.size())
      throw Error(ErrorKind::kSchema, "row has " + std::to_string(cells.size()) + " fields, expected " +
                                          std::to_string(column_var.size()),
                  SourcePos{line_no, 0});
    std::vector<ValueIndex> row(schema.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      auto idx = schema[column_var[c]].value_index(cells[c]);
      if (!idx)
        throw Error(ErrorKind::kSchema, "'" + cells[c] + "' is not a value of '" + schema[column_var[c]].name + "'",
                    SourcePos{line_no, c + 1}, cells[c]);
      row[column_var[c]] = *idx;
    }
    sample.rows.push_back(std::move(row));
  }
  if (column_var.empty() && !schema.empty()) throw Error(ErrorKind::kSchema, "sample file has no header");
  return sample;
}

}  // namespace mekb
