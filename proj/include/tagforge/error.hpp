#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tagforge {

enum class ErrorKind {
  Schema,
  EmptyCorpus,
  MalformedRow,
  Mapping,
  Split,
  Length,
  Alignment,
  Shape,
  Contract,
  Optimizer,
  Schedule,
  Config,
  Label,
  Training,
  Container,
  Io,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Schema: return "schema error";
    case ErrorKind::EmptyCorpus: return "empty-corpus error";
    case ErrorKind::MalformedRow: return "malformed-row error";
    case ErrorKind::Mapping: return "mapping error";
    case ErrorKind::Split: return "split error";
    case ErrorKind::Length: return "length error";
    case ErrorKind::Alignment: return "alignment error";
    case ErrorKind::Shape: return "shape error";
    case ErrorKind::Contract: return "contract error";
    case ErrorKind::Optimizer: return "optimizer error";
    case ErrorKind::Schedule: return "schedule error";
    case ErrorKind::Config: return "config error";
    case ErrorKind::Label: return "label error";
    case ErrorKind::Training: return "training error";
    case ErrorKind::Container: return "container error";
    case ErrorKind::Io: return "io error";
  }
  return "error";
}

// Every failure in the library surfaces as this type; `kind()` tells callers
// (and tests) which contract was violated.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace tagforge
