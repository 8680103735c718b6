#pragma once

// Rule language and knowledge-base file format.
//
//   fact    := or
//   or      := and ('|' and)*
//   and     := unary ('&' unary)*
//   unary   := '!' unary | '(' fact ')' | '*' | atom
//   atom    := Var                                (boolean: Var = t)
//            | Var ('=' | '<>' | '<' | '>') Value
//            | Var ('in' | 'notin') '{' Value (',' Value)* '}'
//   rule    := ['ground'] '[' prob ']' fact ['=>' fact]
//
// KB files are line oriented:
//   # comment
//   option <key> = <value>
//   var <Name> : boolean | {v1, v2, ...} | ordinal {v1 < v2 < ...}
//   rule [<id>:] [ground] [<x>] <fact> [=> <fact>]

#include <cctype>
#include <charconv>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mekb/error.hpp"
#include "mekb/model.hpp"

namespace mekb {

enum class RuleMode { kFloat, kGround };

inline const char* to_string(RuleMode m) { return m == RuleMode::kFloat ? "float" : "ground"; }

// P(conclusion | premise) = target. A fact has a tautological premise.
struct Rule {
  std::string id;
  Sentence premise;
  Sentence conclusion;
  double target = 0.0;
  RuleMode mode = RuleMode::kFloat;

  bool is_fact() const { return premise.is_taut(); }
  bool operator==(const Rule&) const = default;
};

enum class Heuristic { kMinFill, kMaxCardinality };

inline const char* to_string(Heuristic h) {
  return h == Heuristic::kMinFill ? "min_fill" : "max_cardinality";
}

inline std::optional<Heuristic> parse_heuristic(std::string_view s) {
  if (s == "min_fill") return Heuristic::kMinFill;
  if (s == "max_cardinality") return Heuristic::kMaxCardinality;
  return std::nullopt;
}

struct SolverOptions {
  double tolerance = 1e-8;
  std::size_t max_sweeps = 1000;
  Heuristic heuristic = Heuristic::kMinFill;
  // Sweeps without residual improvement before declaring inconsistency.
  std::size_t plateau_window = 25;

  bool operator==(const SolverOptions&) const = default;
};

struct KnowledgeBaseSource {
  Schema schema;
  std::vector<Rule> rules;
  SolverOptions options;

  bool operator==(const KnowledgeBaseSource& o) const {
    return schema == o.schema && rules == o.rules && options == o.options;
  }
};

inline std::string default_rule_id(std::size_t index) { return "R" + std::to_string(index + 1); }

namespace detail {

enum class Tok {
  kEnd,
  kWord,    // identifiers, values, keywords
  kNumber,  // annotation probabilities
  kNot, kAnd, kOr, kLParen, kRParen, kLBrace, kRBrace, kLBracket, kRBracket,
  kComma, kEq, kNeq, kLt, kGt, kArrow, kStar, kColon,
};

struct Token {
  Tok kind = Tok::kEnd;
  std::string text;
  std::size_t column = 0;  // 1-based
};

inline bool word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
}

inline std::vector<Token> tokenize(std::string_view src) {
  std::vector<Token> out;
  std::size_t i = 0;
  auto push = [&](Tok k, std::size_t len) {
    out.push_back({k, std::string(src.substr(i, len)), i + 1});
    i += len;
  };
  while (i < src.size()) {
    const char c = src[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    const char n = i + 1 < src.size() ? src[i + 1] : '\0';
    switch (c) {
      case '!': push(Tok::kNot, 1); continue;
      case '&': push(Tok::kAnd, 1); continue;
      case '|': push(Tok::kOr, 1); continue;
      case '(': push(Tok::kLParen, 1); continue;
      case ')': push(Tok::kRParen, 1); continue;
      case '{': push(Tok::kLBrace, 1); continue;
      case '}': push(Tok::kRBrace, 1); continue;
      case '[': push(Tok::kLBracket, 1); continue;
      case ']': push(Tok::kRBracket, 1); continue;
      case ',': push(Tok::kComma, 1); continue;
      case '*': push(Tok::kStar, 1); continue;
      case ':': push(Tok::kColon, 1); continue;
      case '>': push(Tok::kGt, 1); continue;
      case '=':
        if (n == '>') push(Tok::kArrow, 2);
        else push(Tok::kEq, 1);
        continue;
      case '<':
        if (n == '>') push(Tok::kNeq, 2);
        else push(Tok::kLt, 1);
        continue;
      default: break;
    }
    const bool signed_number = c == '-' && std::isdigit(static_cast<unsigned char>(n));
    if (word_char(c) || signed_number) {
      std::size_t j = i + (signed_number ? 1 : 0);
      while (j < src.size() && (word_char(src[j]) || src[j] == '-' || src[j] == '+')) {
        // '-'/'+' only inside exponents, e.g. 1e-08
        if ((src[j] == '-' || src[j] == '+') && !(src[j - 1] == 'e' || src[j - 1] == 'E')) break;
        ++j;
      }
      const std::string_view text = src.substr(i, j - i);
      const bool numeric = std::isdigit(static_cast<unsigned char>(text.back())) &&
                           (signed_number || std::isdigit(static_cast<unsigned char>(c)));
      push(numeric ? Tok::kNumber : Tok::kWord, j - i);
      continue;
    }
    throw Error(ErrorKind::kParse, std::string("unexpected character '") + c + "'",
                SourcePos{0, i + 1});
  }
  out.push_back({Tok::kEnd, "", src.size() + 1});
  return out;
}

inline bool is_reserved(std::string_view w) {
  return w == "in" || w == "notin" || w == "ground" || w == "var" || w == "rule" ||
         w == "option" || w == "boolean" || w == "ordinal" || w == "assume" || w == "eval";
}

inline bool valid_identifier(std::string_view w) {
  if (w.empty() || !(std::isalpha(static_cast<unsigned char>(w[0])) || w[0] == '_')) return false;
  for (char c : w)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
  return true;
}

// Recursive-descent parser over one line of tokens.
class Parser {
 public:
  Parser(std::string_view src, const Schema* schema) : toks_(tokenize(src)), schema_(schema) {}

  const Token& peek(std::size_t ahead = 0) const {
    return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
  }
  bool at(Tok k) const { return peek().kind == k; }
  bool at_word(std::string_view w) const { return peek().kind == Tok::kWord && peek().text == w; }
  Token take() {
    Token t = peek();
    if (pos_ < toks_.size() - 1) ++pos_;
    return t;
  }

  [[noreturn]] void fail(const std::string& msg, const Token& t,
                         ErrorKind kind = ErrorKind::kParse) const {
    throw Error(kind, msg, SourcePos{0, t.column}, t.text);
  }

  Token expect(Tok k, const char* what) {
    if (!at(k)) {
      const Token& t = peek();
      fail(std::string("expected ") + what + (t.kind == Tok::kEnd ? " at end of input"
                                                                  : ", found '" + t.text + "'"),
           t);
    }
    return take();
  }

  void expect_end() {
    if (!at(Tok::kEnd)) fail("unexpected trailing '" + peek().text + "'", peek());
  }

  Sentence fact() {
    Sentence s = conjunction();
    while (at(Tok::kOr)) {
      take();
      s = Sentence::disj(std::move(s), conjunction());
    }
    return s;
  }

  Sentence conjunction() {
    Sentence s = unary();
    while (at(Tok::kAnd)) {
      take();
      s = Sentence::conj(std::move(s), unary());
    }
    return s;
  }

  Sentence unary() {
    if (at(Tok::kNot)) {
      take();
      return Sentence::negate(unary());
    }
    if (at(Tok::kLParen)) {
      take();
      Sentence s = fact();
      expect(Tok::kRParen, "')'");
      return s;
    }
    if (at(Tok::kStar)) {
      take();
      return Sentence::taut();
    }
    return atom();
  }

  Sentence atom() {
    if (!at(Tok::kWord)) {
      const Token& t = peek();
      fail(t.kind == Tok::kEnd ? "expected a variable at end of input"
                               : "expected a variable, found '" + t.text + "'",
           t);
    }
    const Token name = take();
    const auto var = schema_->find(name.text);
    if (!var) fail("unknown variable '" + name.text + "'", name, ErrorKind::kResolution);
    const Variable& v = (*schema_)[*var];

    Atom a;
    a.var = *var;
    const Token op = peek();
    switch (op.kind) {
      case Tok::kEq: a.cmp = Comparator::kEq; break;
      case Tok::kNeq: a.cmp = Comparator::kNeq; break;
      case Tok::kLt: a.cmp = Comparator::kLt; break;
      case Tok::kGt: a.cmp = Comparator::kGt; break;
      case Tok::kWord:
        if (op.text == "in") a.cmp = Comparator::kIn;
        else if (op.text == "notin") a.cmp = Comparator::kNotIn;
        else fail("expected a comparator after '" + name.text + "'", op);
        break;
      default:
        if (v.kind != VarKind::kBoolean)
          fail("variable '" + v.name + "' is " + to_string(v.kind) + " and needs a comparator",
               name, ErrorKind::kKind);
        a.cmp = Comparator::kEq;
        a.operand = {1};
        return Sentence::atom(std::move(a));
    }
    take();
    if ((a.cmp == Comparator::kLt || a.cmp == Comparator::kGt) && v.kind != VarKind::kOrdinal)
      fail("'" + op.text + "' needs an ordinal variable, '" + v.name + "' is " + to_string(v.kind),
           op, ErrorKind::kKind);
    if (a.cmp == Comparator::kIn || a.cmp == Comparator::kNotIn) {
      if (v.kind == VarKind::kBoolean)
        fail("'" + op.text + "' is not allowed on boolean '" + v.name + "'", op, ErrorKind::kKind);
      expect(Tok::kLBrace, "'{'");
      a.operand.push_back(value_of(v));
      while (at(Tok::kComma)) {
        take();
        a.operand.push_back(value_of(v));
      }
      expect(Tok::kRBrace, "'}'");
    } else {
      a.operand.push_back(value_of(v));
    }
    return Sentence::atom(std::move(a));
  }

  // Annotation `[x]` with 0..6 decimals, x in [0, 1].
  double probability() {
    expect(Tok::kLBracket, "probability annotation '['");
    const Token t = peek();
    if (t.kind != Tok::kNumber) fail("expected a probability inside '[ ]'", t);
    take();
    const std::string& s = t.text;
    std::size_t i = s[0] == '-' ? 1 : 0;
    const std::size_t int_begin = i;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t decimals = 0;
    bool ok = i > int_begin;
    if (ok && i < s.size()) {
      if (s[i] != '.') ok = false;
      ++i;
      while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) {
        ++i;
        ++decimals;
      }
      if (i != s.size()) ok = false;
    }
    if (!ok) fail("malformed probability '" + s + "'", t);
    if (decimals > 6) fail("probability '" + s + "' has more than 6 decimals", t);
    double x = 0.0;
    std::from_chars(s.data(), s.data() + s.size(), x);
    if (x < 0.0 || x > 1.0) fail("probability " + s + " is outside [0, 1]", t, ErrorKind::kRange);
    expect(Tok::kRBracket, "']'");
    return x;
  }

  Rule rule() {
    Rule r;
    if (at_word("ground")) {
      take();
      r.mode = RuleMode::kGround;
    }
    if (!at(Tok::kLBracket)) fail("missing probability annotation '[x]'", peek());
    r.target = probability();
    Sentence first = fact();
    if (at(Tok::kArrow)) {
      take();
      r.premise = std::move(first);
      const Token start = peek();
      r.conclusion = fact();
      if (r.conclusion.is_taut()) fail("the conclusion of a rule may not be '*'", start);
    } else {
      if (first.is_taut()) fail("a fact may not be '*'", peek());
      r.conclusion = std::move(first);
    }
    return r;
  }

  std::string value_token() {
    const Token t = peek();
    if (t.kind != Tok::kWord && t.kind != Tok::kNumber) fail("expected a value", t);
    take();
    return t.text;
  }

 private:
  ValueIndex value_of(const Variable& v) {
    const Token t = peek();
    if (t.kind != Tok::kWord && t.kind != Tok::kNumber)
      fail("expected a value of '" + v.name + "'", t);
    take();
    auto idx = v.value_index(t.text);
    if (!idx) fail("'" + t.text + "' is not a value of '" + v.name + "'", t, ErrorKind::kResolution);
    return *idx;
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  const Schema* schema_;
};

inline std::string format_probability(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace detail

inline Sentence parse_fact(std::string_view text, const Schema& schema) {
  detail::Parser p(text, &schema);
  Sentence s = p.fact();
  p.expect_end();
  return s;
}

// Parses `[ground] [x] F1 => F2` or `[ground] [x] F`. The returned rule has
// an empty id.
inline Rule parse_rule(std::string_view text, const Schema& schema) {
  detail::Parser p(text, &schema);
  Rule r = p.rule();
  p.expect_end();
  return r;
}

inline std::string format_rule(const Rule& r, const Schema& schema) {
  std::string out;
  if (r.mode == RuleMode::kGround) out += "ground ";
  out += "[" + detail::format_probability(r.target) + "] ";
  if (!r.premise.is_taut()) out += to_text(r.premise, schema) + " => ";
  out += to_text(r.conclusion, schema);
  return out;
}

namespace detail {

inline void apply_option(SolverOptions& opt, const Token& key, Parser& p) {
  const Token val = p.peek();
  if (val.kind != Tok::kWord && val.kind != Tok::kNumber) p.fail("expected an option value", val);
  p.take();
  if (key.text == "tolerance") {
    double x = 0.0;
    auto [ptr, ec] = std::from_chars(val.text.data(), val.text.data() + val.text.size(), x);
    if (ec != std::errc() || ptr != val.text.data() + val.text.size() || !(x > 0.0))
      p.fail("tolerance must be a positive number", val, ErrorKind::kRange);
    opt.tolerance = x;
  } else if (key.text == "max_sweeps") {
    std::size_t n = 0;
    auto [ptr, ec] = std::from_chars(val.text.data(), val.text.data() + val.text.size(), n);
    if (ec != std::errc() || ptr != val.text.data() + val.text.size() || n == 0)
      p.fail("max_sweeps must be a positive integer", val, ErrorKind::kRange);
    opt.max_sweeps = n;
  } else if (key.text == "heuristic") {
    auto h = parse_heuristic(val.text);
    if (!h) p.fail("heuristic must be min_fill or max_cardinality", val, ErrorKind::kRange);
    opt.heuristic = *h;
  } else {
    p.fail("unknown option '" + key.text + "'", key);
  }
}

inline Variable parse_var_decl(Parser& p) {
  const Token name = p.expect(Tok::kWord, "a variable name");
  if (!valid_identifier(name.text) || is_reserved(name.text))
    p.fail("'" + name.text + "' is not a valid variable name", name);
  p.expect(Tok::kColon, "':'");
  Variable v;
  v.name = name.text;
  if (p.at_word("boolean")) {
    p.take();
    v = Variable::boolean(name.text);
  } else if (p.at_word("ordinal")) {
    p.take();
    v.kind = VarKind::kOrdinal;
    p.expect(Tok::kLBrace, "'{'");
    v.values.push_back(p.value_token());
    while (p.at(Tok::kLt)) {
      p.take();
      v.values.push_back(p.value_token());
    }
    p.expect(Tok::kRBrace, "'}' or '<'");
  } else {
    v.kind = VarKind::kNominal;
    p.expect(Tok::kLBrace, "'boolean', 'ordinal' or '{'");
    v.values.push_back(p.value_token());
    while (p.at(Tok::kComma)) {
      p.take();
      v.values.push_back(p.value_token());
    }
    p.expect(Tok::kRBrace, "'}' or ','");
  }
  p.expect_end();
  try {
    v.validate();
  } catch (const Error& e) {
    throw Error(e.kind(), e.detail(), SourcePos{0, name.column}, name.text);
  }
  return v;
}

}  // namespace detail

// Parses a whole KB document. Errors carry line and column.
inline KnowledgeBaseSource parse_kb(std::string_view text) {
  KnowledgeBaseSource kb;
  std::vector<std::pair<std::string, std::size_t>> pending_ids;  // explicit ids and their lines
  bool seen_rule = false;
  std::size_t line_no = 0;
  std::size_t begin = 0;
  while (begin <= text.size()) {
    std::size_t end = text.find('\n', begin);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(begin, end - begin);
    begin = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    line = line.substr(0, line.find('#'));  // comments run to end of line
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string_view::npos || line[first] == '#') {
      if (end == text.size()) break;
      continue;
    }
    try {
      detail::Parser p(line, &kb.schema);
      const detail::Token kw = p.take();
      if (kw.kind == detail::Tok::kWord && kw.text == "option") {
        const detail::Token key = p.expect(detail::Tok::kWord, "an option name");
        p.expect(detail::Tok::kEq, "'='");
        detail::apply_option(kb.options, key, p);
        p.expect_end();
      } else if (kw.kind == detail::Tok::kWord && kw.text == "var") {
        if (seen_rule) p.fail("variable declarations must precede rules", kw);
        const std::size_t col = p.peek().column;
        Variable v = detail::parse_var_decl(p);
        if (kb.schema.find(v.name))
          throw Error(ErrorKind::kDuplicate, "variable '" + v.name + "' declared twice",
                      SourcePos{0, col}, v.name);
        kb.schema.add(std::move(v));
      } else if (kw.kind == detail::Tok::kWord && kw.text == "rule") {
        seen_rule = true;
        std::string id;
        std::size_t id_col = 0;
        if (p.peek().kind == detail::Tok::kWord && p.peek(1).kind == detail::Tok::kColon) {
          const detail::Token label = p.take();
          if (!detail::valid_identifier(label.text)) p.fail("invalid rule id", label);
          id = label.text;
          id_col = label.column;
          p.take();
        }
        Rule r = p.rule();
        p.expect_end();
        r.id = id.empty() ? default_rule_id(kb.rules.size()) : id;
        for (const Rule& other : kb.rules)
          if (other.id == r.id)
            throw Error(ErrorKind::kDuplicate, "rule id '" + r.id + "' used twice",
                        SourcePos{0, id_col ? id_col : kw.column}, r.id);
        kb.rules.push_back(std::move(r));
      } else {
        p.fail("expected 'option', 'var' or 'rule'", kw);
      }
    } catch (const Error& e) {
      throw e.at_line(line_no);
    }
    if (end == text.size()) break;
  }
  return kb;
}

// Canonical document; parse_kb(format(kb)) == kb for targets with at most
// six decimals.
inline std::string format(const KnowledgeBaseSource& kb) {
  std::ostringstream out;
  out << "option tolerance = " << detail::format_double(kb.options.tolerance) << "\n";
  out << "option max_sweeps = " << kb.options.max_sweeps << "\n";
  out << "option heuristic = " << to_string(kb.options.heuristic) << "\n";
  for (const Variable& v : kb.schema) {
    out << "var " << v.name << " : ";
    switch (v.kind) {
      case VarKind::kBoolean: out << "boolean"; break;
      case VarKind::kNominal:
      case VarKind::kOrdinal: {
        out << (v.kind == VarKind::kOrdinal ? "ordinal {" : "{");
        const char* sep = v.kind == VarKind::kOrdinal ? " < " : ", ";
        for (std::size_t i = 0; i < v.values.size(); ++i) out << (i ? sep : "") << v.values[i];
        out << "}";
        break;
      }
    }
    out << "\n";
  }
  for (std::size_t i = 0; i < kb.rules.size(); ++i) {
    const Rule& r = kb.rules[i];
    out << "rule ";
    if (r.id != default_rule_id(i)) out << r.id << ": ";
    out << format_rule(r, kb.schema) << "\n";
  }
  return out.str();
}

}  // namespace mekb
