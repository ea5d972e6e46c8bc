#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace activforms {

struct SourcePos {
  int line = 0;
  int column = 0;
};

enum class DiagKind {
  SyntaxError,
  DuplicateDeclaration,
  UnknownChannel,
  UnknownIdentifier,
  TypeError,
  RangeError,
  NotSupported,
  ArityError,
  InstantiationError,
};

struct Diagnostic {
  DiagKind kind;
  SourcePos pos;
  std::string message;

  std::string to_string() const {
    return std::to_string(pos.line) + ":" + std::to_string(pos.column) + ": " + message;
  }
};

/// Runtime failure inside model evaluation or engine execution.
class Error : public std::runtime_error {
public:
  enum class Kind {
    DivisionByZero,
    ArrayIndexOutOfBounds,
    RangeViolation,
    InvariantViolation,
    LoadError,
    UnknownChannel,
    SchemaMismatch,
    TypeMismatch,
    DomainError,
    UnboundParameter,
    CycleDetected,
    UnknownMote,
    UnknownPeriod,
    RangeError,
    TopologyMismatch,
    EmptyTopology,
    MissingVerificationReport,
    InstantiationError,
    ParseError,
    Cancelled,
    EmptyDirectory,
    ConfigError,
    Internal,
  };

  Error(Kind kind, std::string msg) : std::runtime_error(std::move(msg)), kind_(kind) {}
  Kind kind() const { return kind_; }

private:
  Kind kind_;
};

inline std::string join_diagnostics(const std::vector<Diagnostic>& ds) {
  std::string out;
  for (const auto& d : ds) {
    out += d.to_string();
    out += '\n';
  }
  return out;
}

} // namespace activforms
