#pragma once

// Single-rule minimum-relative-entropy update on one explicit table. The
// hypertree solver applies it to a rule's home hyperedge; the explicit-joint
// oracle applies it to the whole joint.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>

#include "mekb/error.hpp"
#include "mekb/parser.hpp"

namespace mekb {

// Masses of the three blocks a rule partitions the worlds into.
struct RuleMasses {
  double both = 0.0;          // F1 & F2
  double premise_only = 0.0;  // F1 & !F2
  double rest = 0.0;          // !F1

  double premise() const { return both + premise_only; }
};

inline RuleMasses rule_masses(std::span<const double> cells, std::span<const std::uint8_t> premise,
                              std::span<const std::uint8_t> conclusion) {
  RuleMasses m;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!premise[i]) m.rest += cells[i];
    else if (conclusion[i]) m.both += cells[i];
    else m.premise_only += cells[i];
  }
  return m;
}

namespace detail {

// b^e with 0^0 = 1.
inline double pow0(double b, double e) { return e == 0.0 ? 1.0 : std::pow(b, e); }

inline void check_feasible(double both, double premise_only, double x, const std::string& rule_id) {
  if (x > 0.0 && !(both > 0.0))
    throw Error(ErrorKind::kInfeasibleRule,
                "rule " + rule_id + ": premise & conclusion has probability zero but the target is positive",
                rule_id);
  if (x < 1.0 && !(premise_only > 0.0))
    throw Error(ErrorKind::kInfeasibleRule,
                "rule " + rule_id + ": premise & !conclusion has probability zero but the target is below one",
                rule_id);
}

}  // namespace detail

// Posterior premise probability a* of a float update:
//   a* = A / (A + m0 * x^x (1-x)^(1-x)),   A = m11^x m10^(1-x),   0^0 = 1.
inline double premise_posterior_float(double m11, double m10, double m0, double x,
                                      const std::string& rule_id = "?") {
  if (!(x >= 0.0 && x <= 1.0))
    throw Error(ErrorKind::kRange, "rule target outside [0, 1]", rule_id);
  detail::check_feasible(m11, m10, x, rule_id);
  const double a = detail::pow0(m11, x) * detail::pow0(m10, 1.0 - x);
  const double tilt = detail::pow0(x, x) * detail::pow0(1.0 - x, 1.0 - x);
  return a / (a + m0 * tilt);
}

struct ProjectionStep {
  RuleMasses before;
  double premise_after = 0.0;  // a*
  double increment_bits = 0.0;  // R(P_new, P_old)
};

// Rescales the three blocks so that P(F2|F1) = x; the premise mass becomes
// a* (float) or stays put (ground). Renormalises afterwards.
inline ProjectionStep project_cells(std::span<double> cells, std::span<const std::uint8_t> premise,
                                    std::span<const std::uint8_t> conclusion, double x, RuleMode mode,
                                    const std::string& rule_id) {
  ProjectionStep step;
  step.before = rule_masses(cells, premise, conclusion);
  const RuleMasses& m = step.before;
  const double a = mode == RuleMode::kFloat
                       ? premise_posterior_float(m.both, m.premise_only, m.rest, x, rule_id)
                       : (detail::check_feasible(m.both, m.premise_only, x, rule_id), m.premise());
  step.premise_after = a;

  const double target[3] = {x * a, (1.0 - x) * a, 1.0 - a};
  const double prior[3] = {m.both, m.premise_only, m.rest};
  double scale[3];
  for (int b = 0; b < 3; ++b) {
    if (target[b] <= 0.0) {
      scale[b] = 0.0;
    } else {
      if (!(prior[b] > 0.0))
        throw Error(ErrorKind::kInfeasibleRule,
                    "rule " + rule_id + " needs mass on a block that has probability zero", rule_id);
      scale[b] = target[b] / prior[b];
      step.increment_bits += target[b] * std::log2(scale[b]);
    }
  }
  double total = 0.0;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const int b = !premise[i] ? 2 : (conclusion[i] ? 0 : 1);
    cells[i] *= scale[b];
    total += cells[i];
  }
  for (double& c : cells) c /= total;
  return step;
}

}  // namespace mekb
