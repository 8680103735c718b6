#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace mekb {

enum class ErrorKind {
  kParse,
  kResolution,
  kKind,
  kRange,
  kSchema,
  kCapacity,
  kUndefinedConditional,
  kInfeasibleRule,
  kPropagationSupport,
  kImpossibleEvidence,
  kState,
  kDuplicate,
  kInternal,
  kIo,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::kParse: return "parse error";
    case ErrorKind::kResolution: return "resolution error";
    case ErrorKind::kKind: return "kind error";
    case ErrorKind::kRange: return "range error";
    case ErrorKind::kSchema: return "schema error";
    case ErrorKind::kCapacity: return "capacity error";
    case ErrorKind::kUndefinedConditional: return "undefined conditional";
    case ErrorKind::kInfeasibleRule: return "infeasible rule";
    case ErrorKind::kPropagationSupport: return "propagation support error";
    case ErrorKind::kImpossibleEvidence: return "impossible evidence";
    case ErrorKind::kState: return "state error";
    case ErrorKind::kDuplicate: return "duplicate definition";
    case ErrorKind::kInternal: return "internal error";
    case ErrorKind::kIo: return "i/o error";
  }
  return "error";
}

// Position inside a text document. Lines and columns are 1-based; line 0
// means "not tied to a document line" (single-expression parses).
struct SourcePos {
  std::size_t line = 0;
  std::size_t column = 0;
};

// Every failure in the library is reported through this one exception type.
// `subject` carries the offending rule id, variable, or conjunct when there
// is one, so callers can report it without parsing the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string message, std::string subject = {})
      : std::runtime_error(compose(kind, message, {}, false)),
        kind_(kind),
        detail_(std::move(message)),
        subject_(std::move(subject)) {}

  Error(ErrorKind kind, std::string message, SourcePos pos,
        std::string subject = {})
      : std::runtime_error(compose(kind, message, pos, true)),
        kind_(kind),
        detail_(std::move(message)),
        subject_(std::move(subject)),
        pos_(pos),
        has_pos_(true) {}

  ErrorKind kind() const { return kind_; }
  const std::string& detail() const { return detail_; }
  const std::string& subject() const { return subject_; }
  bool has_position() const { return has_pos_; }
  SourcePos position() const { return pos_; }

  // Same error relocated to a document line; columns are kept.
  Error at_line(std::size_t line) const {
    SourcePos p = pos_;
    p.line = line;
    return Error(kind_, detail_, p, subject_);
  }

 private:
  static std::string compose(ErrorKind kind, const std::string& msg,
                             SourcePos pos, bool has_pos) {
    std::string out = to_string(kind);
    if (has_pos) {
      out += " at ";
      if (pos.line > 0) out += std::to_string(pos.line) + ":";
      out += std::to_string(pos.column);
    }
    out += ": ";
    out += msg;
    return out;
  }

  ErrorKind kind_;
  std::string detail_;
  std::string subject_;
  SourcePos pos_{};
  bool has_pos_ = false;
};

}  // namespace mekb
