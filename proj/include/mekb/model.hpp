#pragma once

// Variables, propositional sentences over them, and explicit probability
// tables indexed in mixed radix (last variable of a scope varies fastest).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mekb/error.hpp"

namespace mekb {

using VarId = std::size_t;
using ValueIndex = std::size_t;

enum class VarKind { kBoolean, kNominal, kOrdinal };

inline const char* to_string(VarKind k) {
  switch (k) {
    case VarKind::kBoolean: return "boolean";
    case VarKind::kNominal: return "nominal";
    case VarKind::kOrdinal: return "ordinal";
  }
  return "?";
}

struct Variable {
  std::string name;
  VarKind kind = VarKind::kBoolean;
  std::vector<std::string> values;

  static Variable boolean(std::string name) {
    return Variable{std::move(name), VarKind::kBoolean, {"f", "t"}};
  }
  static Variable nominal(std::string name, std::vector<std::string> values) {
    Variable v{std::move(name), VarKind::kNominal, std::move(values)};
    v.validate();
    return v;
  }
  static Variable ordinal(std::string name, std::vector<std::string> values) {
    Variable v{std::move(name), VarKind::kOrdinal, std::move(values)};
    v.validate();
    return v;
  }

  std::size_t size() const { return values.size(); }

  std::optional<ValueIndex> value_index(std::string_view value) const {
    for (std::size_t i = 0; i < values.size(); ++i)
      if (values[i] == value) return i;
    return std::nullopt;
  }

  void validate() const {
    if (values.empty())
      throw Error(ErrorKind::kSchema, "variable '" + name + "' has no values", name);
    for (std::size_t i = 0; i < values.size(); ++i)
      for (std::size_t j = i + 1; j < values.size(); ++j)
        if (values[i] == values[j])
          throw Error(ErrorKind::kDuplicate,
                      "variable '" + name + "' repeats value '" + values[i] + "'", name);
    if (kind == VarKind::kOrdinal && values.size() < 2)
      throw Error(ErrorKind::kSchema, "ordinal variable '" + name + "' needs at least two values",
                  name);
    if (kind == VarKind::kBoolean && (values.size() != 2 || values[0] != "f" || values[1] != "t"))
      throw Error(ErrorKind::kSchema, "boolean variable '" + name + "' must have values [f, t]",
                  name);
  }

  bool operator==(const Variable&) const = default;
};

// Ordered variable universe of a knowledge base. VarId is the declaration
// index.
class Schema {
 public:
  Schema() = default;
  explicit Schema(std::vector<Variable> vars) {
    for (auto& v : vars) add(std::move(v));
  }

  VarId add(Variable v) {
    v.validate();
    if (index_.count(v.name))
      throw Error(ErrorKind::kDuplicate, "variable '" + v.name + "' declared twice", v.name);
    const VarId id = vars_.size();
    index_.emplace(v.name, id);
    vars_.push_back(std::move(v));
    return id;
  }

  std::optional<VarId> find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const Variable& operator[](VarId id) const { return vars_.at(id); }
  std::size_t size() const { return vars_.size(); }
  bool empty() const { return vars_.empty(); }
  auto begin() const { return vars_.begin(); }
  auto end() const { return vars_.end(); }
  const std::vector<Variable>& variables() const { return vars_; }

  bool operator==(const Schema& o) const { return vars_ == o.vars_; }

 private:
  std::vector<Variable> vars_;
  std::unordered_map<std::string, VarId> index_;
};

// ---------------------------------------------------------------------------
// Sentences

enum class Comparator { kEq, kNeq, kLt, kGt, kIn, kNotIn };

struct Atom {
  VarId var = 0;
  Comparator cmp = Comparator::kEq;
  std::vector<ValueIndex> operand;  // one entry except for IN / NOTIN

  bool holds(ValueIndex v) const {
    switch (cmp) {
      case Comparator::kEq: return v == operand.front();
      case Comparator::kNeq: return v != operand.front();
      case Comparator::kLt: return v < operand.front();
      case Comparator::kGt: return v > operand.front();
      case Comparator::kIn:
        return std::find(operand.begin(), operand.end(), v) != operand.end();
      case Comparator::kNotIn:
        return std::find(operand.begin(), operand.end(), v) == operand.end();
    }
    return false;
  }

  bool operator==(const Atom&) const = default;
};

// Checks the typing rules of an atom against the schema.
inline void validate_atom(const Atom& a, const Schema& schema) {
  if (a.var >= schema.size())
    throw Error(ErrorKind::kResolution, "atom references unknown variable #" + std::to_string(a.var));
  const Variable& v = schema[a.var];
  const bool list_cmp = a.cmp == Comparator::kIn || a.cmp == Comparator::kNotIn;
  if ((a.cmp == Comparator::kLt || a.cmp == Comparator::kGt) && v.kind != VarKind::kOrdinal)
    throw Error(ErrorKind::kKind, "'<' and '>' need an ordinal variable, '" + v.name + "' is " +
                                      to_string(v.kind),
                v.name);
  if (list_cmp && v.kind == VarKind::kBoolean)
    throw Error(ErrorKind::kKind, "'in' and 'notin' are not allowed on boolean '" + v.name + "'",
                v.name);
  if (a.operand.empty() || (!list_cmp && a.operand.size() != 1))
    throw Error(ErrorKind::kKind, "bad operand arity for '" + v.name + "'", v.name);
  for (ValueIndex x : a.operand)
    if (x >= v.size())
      throw Error(ErrorKind::kResolution, "value index out of range for '" + v.name + "'", v.name);
}

class Sentence {
 public:
  enum class Op { kTaut, kAtom, kNot, kAnd, kOr };

  // Default-constructed sentence is the tautology.
  Sentence();

  static Sentence taut() { return Sentence(); }
  static Sentence atom(Atom a);
  static Sentence negate(Sentence s);
  static Sentence conj(Sentence a, Sentence b) { return binary(Op::kAnd, std::move(a), std::move(b)); }
  static Sentence disj(Sentence a, Sentence b) { return binary(Op::kOr, std::move(a), std::move(b)); }

  Op op() const;
  bool is_taut() const { return op() == Op::kTaut; }
  const Atom& atom() const;
  const Sentence& lhs() const;
  const Sentence& rhs() const;

  // `value_of(VarId) -> ValueIndex` supplies the world.
  template <class Lookup>
  bool eval(const Lookup& value_of) const {
    switch (op()) {
      case Op::kTaut: return true;
      case Op::kAtom: return atom().holds(value_of(atom().var));
      case Op::kNot: return !lhs().eval(value_of);
      case Op::kAnd: return lhs().eval(value_of) && rhs().eval(value_of);
      case Op::kOr: return lhs().eval(value_of) || rhs().eval(value_of);
    }
    return false;
  }

  bool operator==(const Sentence& o) const;

 private:
  struct Node;

  explicit Sentence(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
  static Sentence binary(Op op, Sentence a, Sentence b);

  std::shared_ptr<const Node> node_;
};

struct Sentence::Node {
  Op op = Op::kTaut;
  Atom atom;
  std::vector<Sentence> kids;  // one for Not, two for And / Or
};

inline Sentence::Sentence() {
  static const auto t = std::make_shared<const Node>();
  node_ = t;
}

inline Sentence Sentence::atom(Atom a) {
  auto n = std::make_shared<Node>();
  n->op = Op::kAtom;
  n->atom = std::move(a);
  return Sentence(std::move(n));
}

inline Sentence Sentence::negate(Sentence s) {
  auto n = std::make_shared<Node>();
  n->op = Op::kNot;
  n->kids.push_back(std::move(s));
  return Sentence(std::move(n));
}

inline Sentence Sentence::binary(Op op, Sentence a, Sentence b) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->kids.push_back(std::move(a));
  n->kids.push_back(std::move(b));
  return Sentence(std::move(n));
}

inline Sentence::Op Sentence::op() const { return node_->op; }
inline const Atom& Sentence::atom() const { return node_->atom; }
inline const Sentence& Sentence::lhs() const { return node_->kids.at(0); }
inline const Sentence& Sentence::rhs() const { return node_->kids.at(1); }

inline bool Sentence::operator==(const Sentence& o) const {
  if (node_ == o.node_) return true;
  if (op() != o.op()) return false;
  if (op() == Op::kAtom) return atom() == o.atom();
  return node_->kids == o.node_->kids;
}

inline void collect_variables(const Sentence& s, std::vector<VarId>& out) {
  switch (s.op()) {
    case Sentence::Op::kTaut: return;
    case Sentence::Op::kAtom: out.push_back(s.atom().var); return;
    case Sentence::Op::kNot: collect_variables(s.lhs(), out); return;
    default:
      collect_variables(s.lhs(), out);
      collect_variables(s.rhs(), out);
  }
}

// Sorted, duplicate-free set of variables occurring in `s`.
inline std::vector<VarId> variables_of(const Sentence& s) {
  std::vector<VarId> out;
  collect_variables(s, out);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline void validate_sentence(const Sentence& s, const Schema& schema) {
  switch (s.op()) {
    case Sentence::Op::kTaut: return;
    case Sentence::Op::kAtom: validate_atom(s.atom(), schema); return;
    case Sentence::Op::kNot: validate_sentence(s.lhs(), schema); return;
    default:
      validate_sentence(s.lhs(), schema);
      validate_sentence(s.rhs(), schema);
  }
}

namespace detail {

inline int precedence(Sentence::Op op) {
  switch (op) {
    case Sentence::Op::kOr: return 1;
    case Sentence::Op::kAnd: return 2;
    case Sentence::Op::kNot: return 3;
    default: return 4;
  }
}

inline std::string atom_text(const Atom& a, const Schema* schema) {
  auto var_name = [&](VarId v) {
    return schema ? (*schema)[v].name : "#" + std::to_string(v);
  };
  auto value_name = [&](ValueIndex x) {
    return schema ? (*schema)[a.var].values.at(x) : std::to_string(x);
  };
  const bool boolean = schema && (*schema)[a.var].kind == VarKind::kBoolean;
  std::string out = var_name(a.var);
  switch (a.cmp) {
    case Comparator::kEq:
      if (boolean && a.operand.front() == 1) return out;
      if (boolean && a.operand.front() == 0) return "!" + out;
      return out + " = " + value_name(a.operand.front());
    case Comparator::kNeq: return out + " <> " + value_name(a.operand.front());
    case Comparator::kLt: return out + " < " + value_name(a.operand.front());
    case Comparator::kGt: return out + " > " + value_name(a.operand.front());
    case Comparator::kIn:
    case Comparator::kNotIn: {
      out += a.cmp == Comparator::kIn ? " in {" : " notin {";
      for (std::size_t i = 0; i < a.operand.size(); ++i) {
        if (i) out += ", ";
        out += value_name(a.operand[i]);
      }
      return out + "}";
    }
  }
  return out;
}

// Boolean `A = f` prints as `!A`, which is a Not node on reparse. Keep the
// explicit form so printing stays injective.
inline std::string atom_text_exact(const Atom& a, const Schema* schema) {
  if (schema && (*schema)[a.var].kind == VarKind::kBoolean && a.cmp == Comparator::kEq &&
      a.operand.front() == 0)
    return (*schema)[a.var].name + " = f";
  return atom_text(a, schema);
}

inline std::string sentence_text(const Sentence& s, const Schema* schema, int parent_prec,
                                 bool right_operand) {
  using Op = Sentence::Op;
  std::string out;
  const int prec = precedence(s.op());
  switch (s.op()) {
    case Op::kTaut: return "*";
    case Op::kAtom: {
      out = atom_text_exact(s.atom(), schema);
      // Spaced comparators bind below '!', so wrap them under negation.
      if (parent_prec == 3 && out.find(' ') != std::string::npos) return "(" + out + ")";
      return out;
    }
    case Op::kNot: out = "!" + sentence_text(s.lhs(), schema, 3, false); break;
    case Op::kAnd:
      out = sentence_text(s.lhs(), schema, prec, false) + " & " +
            sentence_text(s.rhs(), schema, prec, true);
      break;
    case Op::kOr:
      out = sentence_text(s.lhs(), schema, prec, false) + " | " +
            sentence_text(s.rhs(), schema, prec, true);
      break;
  }
  // Binary operators are left-associative, so a right operand of equal
  // precedence needs parentheses.
  if (prec < parent_prec || (right_operand && prec == parent_prec && prec < 3))
    return "(" + out + ")";
  return out;
}

}  // namespace detail

// Canonical text in the rule language; parse(to_text(s)) == s.
inline std::string to_text(const Sentence& s, const Schema& schema) {
  return detail::sentence_text(s, &schema, 0, false);
}

inline std::string to_text(const Sentence& s) { return detail::sentence_text(s, nullptr, 0, false); }

// ---------------------------------------------------------------------------
// Scopes and tables

// Ordered variable list with cardinalities; cell index is mixed radix with
// the last variable varying fastest.
class Scope {
 public:
  Scope() = default;

  Scope(std::vector<VarId> vars, std::vector<std::size_t> cards)
      : vars_(std::move(vars)), cards_(std::move(cards)) {
    init();
  }

  Scope(std::vector<VarId> vars, const Schema& schema) : vars_(std::move(vars)) {
    cards_.reserve(vars_.size());
    for (VarId v : vars_) cards_.push_back(schema[v].size());
    init();
  }

  // All schema variables in declaration order.
  static Scope full(const Schema& schema) {
    std::vector<VarId> vars(schema.size());
    std::iota(vars.begin(), vars.end(), VarId{0});
    return Scope(std::move(vars), schema);
  }

  const std::vector<VarId>& vars() const { return vars_; }
  const std::vector<std::size_t>& cards() const { return cards_; }
  std::size_t arity() const { return vars_.size(); }
  std::size_t cell_count() const { return count_; }
  std::size_t stride(std::size_t pos) const { return strides_[pos]; }

  std::optional<std::size_t> position(VarId v) const {
    for (std::size_t i = 0; i < vars_.size(); ++i)
      if (vars_[i] == v) return i;
    return std::nullopt;
  }
  bool contains(VarId v) const { return position(v).has_value(); }
  bool contains_all(std::span<const VarId> vs) const {
    return std::all_of(vs.begin(), vs.end(), [&](VarId v) { return contains(v); });
  }

  void decode(std::size_t index, std::vector<ValueIndex>& values) const {
    values.resize(vars_.size());
    for (std::size_t i = vars_.size(); i-- > 0;) {
      values[i] = index % cards_[i];
      index /= cards_[i];
    }
  }

  std::size_t encode(std::span<const ValueIndex> values) const {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < vars_.size(); ++i) idx = idx * cards_[i] + values[i];
    return idx;
  }

  // For every cell of this scope, the index of the matching cell in `sub`.
  // Every variable of `sub` must be in this scope.
  std::vector<std::size_t> projection_map(const Scope& sub) const {
    std::vector<std::size_t> sub_stride(vars_.size(), 0);
    for (std::size_t j = 0; j < sub.arity(); ++j) {
      auto p = position(sub.vars_[j]);
      if (!p) throw Error(ErrorKind::kSchema, "projection onto a variable outside the scope");
      sub_stride[*p] = sub.strides_[j];
    }
    std::vector<std::size_t> map(count_);
    std::vector<ValueIndex> digits(vars_.size(), 0);
    std::size_t target = 0;
    for (std::size_t i = 0; i < count_; ++i) {
      map[i] = target;
      // odometer increment
      for (std::size_t d = vars_.size(); d-- > 0;) {
        if (++digits[d] < cards_[d]) {
          target += sub_stride[d];
          break;
        }
        target -= sub_stride[d] * (cards_[d] - 1);
        digits[d] = 0;
      }
    }
    return map;
  }

  bool operator==(const Scope& o) const { return vars_ == o.vars_ && cards_ == o.cards_; }

 private:
  void init() {
    if (vars_.size() != cards_.size())
      throw Error(ErrorKind::kInternal, "scope cardinality list mismatch");
    strides_.assign(vars_.size(), 1);
    count_ = 1;
    for (std::size_t i = vars_.size(); i-- > 0;) {
      if (cards_[i] == 0) throw Error(ErrorKind::kSchema, "empty domain in scope");
      strides_[i] = count_;
      if (count_ > std::numeric_limits<std::size_t>::max() / cards_[i])
        throw Error(ErrorKind::kCapacity, "world count overflows the index type");
      count_ *= cards_[i];
    }
  }

  std::vector<VarId> vars_;
  std::vector<std::size_t> cards_;
  std::vector<std::size_t> strides_;
  std::size_t count_ = 1;
};

// A complete assignment over a scope.
struct World {
  std::size_t index = 0;
  std::vector<ValueIndex> values;  // aligned with Scope::vars()
};

// Forward range over all worlds of a scope in mixed-radix order.
class WorldRange {
 public:
  explicit WorldRange(const Scope& scope) : scope_(&scope) {}

  class iterator {
   public:
    using value_type = World;
    using difference_type = std::ptrdiff_t;

    iterator() = default;
    iterator(const Scope* scope, std::size_t index) : scope_(scope) {
      world_.index = index;
      world_.values.assign(scope->arity(), 0);
      if (index < scope->cell_count()) scope->decode(index, world_.values);
    }
    const World& operator*() const { return world_; }
    const World* operator->() const { return &world_; }
    iterator& operator++() {
      ++world_.index;
      for (std::size_t d = world_.values.size(); d-- > 0;) {
        if (++world_.values[d] < scope_->cards()[d]) break;
        world_.values[d] = 0;
      }
      return *this;
    }
    iterator operator++(int) {
      iterator t = *this;
      ++*this;
      return t;
    }
    bool operator==(const iterator& o) const { return world_.index == o.world_.index; }

   private:
    const Scope* scope_ = nullptr;
    World world_;
  };

  iterator begin() const { return iterator(scope_, 0); }
  iterator end() const { return iterator(scope_, scope_->cell_count()); }

 private:
  const Scope* scope_;
};

inline WorldRange enumerate_worlds(const Scope& scope) { return WorldRange(scope); }

// Evaluates `s` in world `w` of `scope`.
inline bool satisfies(const Scope& scope, const World& w, const Sentence& s) {
  return s.eval([&](VarId v) -> ValueIndex {
    auto p = scope.position(v);
    if (!p) throw Error(ErrorKind::kSchema, "sentence variable #" + std::to_string(v) +
                                                " is not assigned by the world");
    return w.values[*p];
  });
}

// One byte per cell of `scope`: 1 where `s` holds.
inline std::vector<std::uint8_t> truth_table(const Scope& scope, const Sentence& s) {
  std::vector<int> pos;
  for (VarId v : variables_of(s)) {
    auto p = scope.position(v);
    if (!p) throw Error(ErrorKind::kSchema, "sentence variable #" + std::to_string(v) +
                                                " is outside the table scope");
    if (pos.size() <= v) pos.resize(v + 1, -1);
    pos[v] = static_cast<int>(*p);
  }
  std::vector<std::uint8_t> out(scope.cell_count());
  std::size_t i = 0;
  for (const World& w : enumerate_worlds(scope)) {
    out[i++] = s.eval([&](VarId v) { return w.values[static_cast<std::size_t>(pos[v])]; }) ? 1 : 0;
  }
  return out;
}

class Table {
 public:
  Table() = default;
  explicit Table(Scope scope) : scope_(std::move(scope)), cells_(scope_.cell_count(), 0.0) {}
  Table(Scope scope, std::vector<double> cells) : scope_(std::move(scope)), cells_(std::move(cells)) {
    if (cells_.size() != scope_.cell_count())
      throw Error(ErrorKind::kSchema, "cell count does not match the scope");
  }

  static Table uniform(Scope scope) {
    Table t(std::move(scope));
    std::fill(t.cells_.begin(), t.cells_.end(), 1.0 / static_cast<double>(t.cells_.size()));
    return t;
  }

  const Scope& scope() const { return scope_; }
  std::span<const double> cells() const { return cells_; }
  std::span<double> cells() { return cells_; }
  std::size_t size() const { return cells_.size(); }
  double operator[](std::size_t i) const { return cells_[i]; }
  double& operator[](std::size_t i) { return cells_[i]; }

  double sum() const {
    // Neumaier summation keeps normalisation checks meaningful at 1e-12.
    double s = 0.0, c = 0.0;
    for (double x : cells_) {
      const double t = s + x;
      c += std::abs(s) >= std::abs(x) ? (s - t) + x : (x - t) + s;
      s = t;
    }
    return s + c;
  }

  void normalize() {
    const double s = sum();
    if (!(s > 0.0) || !std::isfinite(s))
      throw Error(ErrorKind::kState, "cannot normalise a table with total mass " + std::to_string(s));
    for (double& x : cells_) x /= s;
  }

  Table marginal(const Scope& sub) const {
    Table out(sub);
    const auto map = scope_.projection_map(sub);
    for (std::size_t i = 0; i < cells_.size(); ++i) out.cells_[map[i]] += cells_[i];
    return out;
  }

  Table marginal(std::vector<VarId> vars) const {
    std::sort(vars.begin(), vars.end());
    std::vector<std::size_t> cards;
    for (VarId v : vars) {
      auto p = scope_.position(v);
      if (!p) throw Error(ErrorKind::kSchema, "marginal over a variable outside the scope");
      cards.push_back(scope_.cards()[*p]);
    }
    return marginal(Scope(std::move(vars), std::move(cards)));
  }

  bool operator==(const Table& o) const { return scope_ == o.scope_ && cells_ == o.cells_; }

 private:
  Scope scope_;
  std::vector<double> cells_;
};

using JointTable = Table;

inline double sentence_probability(const Table& p, const Sentence& s) {
  const auto mask = truth_table(p.scope(), s);
  double total = 0.0;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) total += p[i];
  return std::clamp(total, 0.0, 1.0);
}

// P(conclusion | premise). Throws kUndefinedConditional when the premise has
// no mass; the error subject is the premise text.
inline double conditional_probability(const Table& p, const Sentence& conclusion,
                                      const Sentence& premise, const Schema* schema = nullptr) {
  const auto prem = truth_table(p.scope(), premise);
  const auto conc = truth_table(p.scope(), conclusion);
  double both = 0.0, prem_mass = 0.0;
  for (std::size_t i = 0; i < prem.size(); ++i) {
    if (!prem[i]) continue;
    prem_mass += p[i];
    if (conc[i]) both += p[i];
  }
  if (!(prem_mass > 0.0)) {
    const std::string text = schema ? to_text(premise, *schema) : to_text(premise);
    throw Error(ErrorKind::kUndefinedConditional, "premise '" + text + "' has probability zero",
                text);
  }
  return std::clamp(both / prem_mass, 0.0, 1.0);
}

}  // namespace mekb
