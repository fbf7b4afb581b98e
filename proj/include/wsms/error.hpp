#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace wsms {

enum class ErrorKind {
  Parse,              // malformed catalog file
  Invariant,          // catalog invariant violated
  Cycle,              // precedence graph is not acyclic
  Lexical,            // query scanner
  Syntax,             // query parser
  UnknownCapability,
  UnknownAttribute,
  AmbiguousAttribute,
  Unsatisfiable,      // no candidate / unbound service input
  Validation,         // other query validation failures
  SizeLimit,          // brute-force guard
  TypeMismatch,
  UnknownService,
  Schema,
  Io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Invariant: return "invariant violation";
    case ErrorKind::Cycle: return "cycle error";
    case ErrorKind::Lexical: return "lexical error";
    case ErrorKind::Syntax: return "syntax error";
    case ErrorKind::UnknownCapability: return "unknown capability";
    case ErrorKind::UnknownAttribute: return "unknown attribute";
    case ErrorKind::AmbiguousAttribute: return "ambiguous attribute";
    case ErrorKind::Unsatisfiable: return "unsatisfiable";
    case ErrorKind::Validation: return "validation error";
    case ErrorKind::SizeLimit: return "size limit";
    case ErrorKind::TypeMismatch: return "type mismatch";
    case ErrorKind::UnknownService: return "unknown service";
    case ErrorKind::Schema: return "schema mismatch";
    case ErrorKind::Io: return "i/o error";
  }
  return "error";
}

/// Single exception type for the whole pipeline. `kind()` classifies the
/// failure; `offset()` is set for positioned query errors.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message,
        std::optional<std::size_t> offset = std::nullopt)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind),
        offset_(offset) {}

  ErrorKind kind() const noexcept { return kind_; }
  std::optional<std::size_t> offset() const noexcept { return offset_; }

 private:
  ErrorKind kind_;
  std::optional<std::size_t> offset_;
};

}  // namespace wsms
