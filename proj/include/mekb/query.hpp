#pragma once

// Simple questions (evidence instantiation) and complex queries (temporary
// projection onto hypothetical rules, then evaluation). Neither touches the
// distribution they are given.

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "mekb/engine.hpp"
#include "mekb/error.hpp"
#include "mekb/maxent.hpp"
#include "mekb/parser.hpp"

namespace mekb {

using Marginals = std::vector<std::vector<double>>;  // per variable, per value

inline Marginals marginals(const FactoredDistribution& dist, const Schema& schema) {
  Marginals out;
  for (VarId v = 0; v < schema.size(); ++v) {
    auto home = dist.tree().covering({v});
    if (!home) throw Error(ErrorKind::kInternal, "variable '" + schema[v].name + "' has no LEG");
    const Table m = dist.leg(*home).marginal(std::vector<VarId>{v});
    out.emplace_back(m.cells().begin(), m.cells().end());
  }
  return out;
}

inline nlohmann::json marginals_json(const Marginals& m, const Schema& schema) {
  nlohmann::json out = nlohmann::json::object();
  for (VarId v = 0; v < schema.size(); ++v) {
    nlohmann::json dist = nlohmann::json::object();
    for (std::size_t i = 0; i < schema[v].size(); ++i) dist[schema[v].values[i]] = m[v][i];
    out[schema[v].name] = dist;
  }
  return out;
}

struct Evidence {
  VarId var = 0;
  ValueIndex value = 0;
  bool operator==(const Evidence&) const = default;
};

struct Instantiation {
  FactoredDistribution dist;
  Marginals marginals;
};

// Conditions on the conjunction of `evidence`, one conjunct at a time. The
// first conjunct that leaves no mass is named in the kImpossibleEvidence
// error.
inline Instantiation instantiate(const FactoredDistribution& base, const std::vector<Evidence>& evidence,
                                 const Schema& schema) {
  FactoredDistribution dist = base;
  for (const Evidence& ev : evidence) {
    if (ev.var >= schema.size() || ev.value >= schema[ev.var].size())
      throw Error(ErrorKind::kResolution, "evidence outside the schema");
    const std::string conjunct = schema[ev.var].name + " = " + schema[ev.var].values[ev.value];
    auto home = dist.tree().covering({ev.var});
    if (!home) throw Error(ErrorKind::kInternal, "variable without LEG");
    Table& leg = dist.leg(*home);
    const auto pos = *leg.scope().position(ev.var);
    std::vector<ValueIndex> digits;
    double mass = 0.0;
    for (std::size_t i = 0; i < leg.size(); ++i) {
      leg.scope().decode(i, digits);
      if (digits[pos] != ev.value) leg[i] = 0.0;
      mass += leg[i];
    }
    if (!(mass > 0.0))
      throw Error(ErrorKind::kImpossibleEvidence, "evidence " + conjunct + " has probability zero",
                  conjunct);
    leg.normalize();
    propagate_from(dist, *home);
  }
  Marginals m = marginals(dist, schema);
  return {std::move(dist), std::move(m)};
}

struct Imperative {
  Sentence conclusion;
  Sentence premise;  // Taut for unconditional evaluation
  std::string text;
};

struct QuerySpec {
  std::vector<Rule> hypotheticals;
  std::vector<Imperative> imperatives;
};

struct ImperativeResult {
  std::string text;
  std::optional<double> probability;  // empty when the premise has no mass
  std::string note;
};

struct QueryResult {
  std::vector<ImperativeResult> answers;
  SolveReport report;  // projection onto the hypotheticals

  bool feasible() const { return report.status != SolveStatus::kInconsistent; }
};

// Adds a contracted hyperedge for every hypothetical no single hyperedge
// covers, so the projections below stay local.
inline FactoredDistribution cover_rules(const FactoredDistribution& dist,
                                        const std::vector<Rule>& rules) {
  FactoredDistribution out = dist;
  for (const Rule& r : rules) {
    const VarSet c = cluster_of(r);
    if (out.tree().covering(c)) continue;
    out = merge_subtree(out, covering_subtree(out.tree(), c), {});
  }
  return out;
}

// Projects the current distribution onto the hypotheticals (same cyclic
// machinery as acquisition, started from `dist`) and evaluates the
// imperatives under the result, which is then discarded.
inline QueryResult complex_query(const FactoredDistribution& dist, const QuerySpec& spec,
                                 const SolverOptions& options, const Schema& schema) {
  if (spec.imperatives.empty()) throw Error(ErrorKind::kParse, "a query needs at least one imperative");
  QueryResult result;
  FactoredDistribution work = cover_rules(dist, spec.hypotheticals);
  std::vector<Rule> hyps = spec.hypotheticals;
  for (std::size_t i = 0; i < hyps.size(); ++i)
    if (hyps[i].id.empty()) hyps[i].id = "H" + std::to_string(i + 1);
  result.report = solve(work, compile_rules(work, hyps), options, uniform_entropy(schema));
  if (!result.feasible()) return result;
  for (const Imperative& imp : spec.imperatives) {
    ImperativeResult ans{imp.text, std::nullopt, {}};
    try {
      ans.probability = query_conditional(work, imp.conclusion, imp.premise, &schema);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kUndefinedConditional) throw;
      ans.note = e.detail();
    }
    result.answers.push_back(std::move(ans));
  }
  return result;
}

// Printed so that it parses back to the same imperative.
inline std::string imperative_text(const Sentence& conclusion, const Sentence& premise, const Schema& schema) {
  std::string text = to_text(conclusion, schema);
  if (conclusion.op() == Sentence::Op::kOr) text = "(" + text + ")";
  if (!premise.is_taut()) text += " | " + to_text(premise, schema);
  return text;
}

// Imperative text: `F` or `F | G`, where the first top-level '|' separates
// conclusion from premise. A disjunctive conclusion must be parenthesised.
inline Imperative parse_imperative(std::string_view text, const Schema& schema) {
  detail::Parser p(text, &schema);
  Imperative imp;
  imp.conclusion = p.conjunction();
  if (p.at(detail::Tok::kOr)) {
    p.take();
    imp.premise = p.fact();
  }
  p.expect_end();
  imp.text = imperative_text(imp.conclusion, imp.premise, schema);
  return imp;
}

inline Imperative make_imperative(Sentence conclusion, Sentence premise, const Schema& schema) {
  Imperative imp{std::move(conclusion), std::move(premise), {}};
  imp.text = imperative_text(imp.conclusion, imp.premise, schema);
  return imp;
}

// Query documents:
//   assume [ground] [x] <fact> [=> <fact>]
//   eval <fact> [| <fact>]
inline QuerySpec parse_query(std::string_view text, const Schema& schema) {
  QuerySpec spec;
  std::size_t line_no = 0, begin = 0;
  while (begin <= text.size()) {
    std::size_t end = text.find('\n', begin);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(begin, end - begin);
    begin = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    line = line.substr(0, line.find('#'));  // comments run to end of line
    const auto first = line.find_first_not_of(" \t");
    if (first != std::string_view::npos && line[first] != '#') {
      try {
        const auto word_end = line.find_first_of(" \t", first);
        const std::string_view kw = line.substr(first, word_end - first);
        const std::string_view rest =
            word_end == std::string_view::npos ? std::string_view{} : line.substr(word_end);
        const std::size_t offset = word_end == std::string_view::npos ? line.size() : word_end;
        if (kw != "assume" && kw != "eval")
          throw Error(ErrorKind::kParse, "expected 'assume' or 'eval'", SourcePos{0, first + 1});
        try {
          if (kw == "assume") {
            spec.hypotheticals.push_back(parse_rule(rest, schema));
            spec.hypotheticals.back().id = "H" + std::to_string(spec.hypotheticals.size());
          } else {
            spec.imperatives.push_back(parse_imperative(rest, schema));
          }
        } catch (const Error& e) {
          if (!e.has_position()) throw;
          SourcePos pos = e.position();
          pos.column += offset;
          throw Error(e.kind(), e.detail(), pos, e.subject());
        }
      } catch (const Error& e) {
        throw e.at_line(line_no);
      }
    }
    if (end == text.size()) break;
  }
  if (spec.imperatives.empty()) throw Error(ErrorKind::kParse, "query has no 'eval' line");
  return spec;
}

inline nlohmann::json query_result_json(const QueryResult& r) {
  nlohmann::json answers = nlohmann::json::array();
  for (const auto& a : r.answers) {
    nlohmann::json j = {{"expression", a.text}};
    j["probability"] = a.probability ? nlohmann::json(*a.probability) : nlohmann::json(nullptr);
    if (!a.note.empty()) j["note"] = a.note;
    answers.push_back(std::move(j));
  }
  return {{"answers", answers}, {"report", report_json(r.report)}};
}

}  // namespace mekb
