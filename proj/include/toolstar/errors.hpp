#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace toolstar {

enum class Errc {
  Parse,
  NoToolRegistered,
  EmptyIndex,
  Network,
  QuotaExceeded,
  Fetch,
  SandboxUnavailable,
  Generator,
  JudgeUnavailable,
  EmptyInput,
  MissingDirectVerdict,
  Alignment,
  InvalidSegment,
  RefinerUnavailable,
  Schema,
  Config,
  Trainer,
  Io,
};

const char* to_string(Errc code);

// Base exception for every engine error; `code()` identifies the contract
// error named in the module interfaces.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

enum class ParseErrc { UnbalancedTag, Interleaved };

class ParseError : public Error {
 public:
  ParseError(ParseErrc kind, std::size_t offset, const std::string& detail)
      : Error(Errc::Parse, detail), kind_(kind), offset_(offset) {}

  ParseErrc kind() const noexcept { return kind_; }
  std::size_t offset() const noexcept { return offset_; }

 private:
  ParseErrc kind_;
  std::size_t offset_;
};

class SchemaError : public Error {
 public:
  SchemaError(std::size_t line, const std::string& detail)
      : Error(Errc::Schema, "line " + std::to_string(line) + ": " + detail),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace toolstar
