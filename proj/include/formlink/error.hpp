#pragma once

#include <stdexcept>
#include <string>

namespace formlink {

/// Violated precondition or shape contract. Programming error on the caller side.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A NaN or Inf showed up where every value must be finite.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input files missing, unreadable or malformed.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A single page failed to parse; carries the offending file name.
class ParseError : public LoadError {
 public:
  ParseError(std::string file, const std::string& what)
      : LoadError(file + ": " + what), file_(std::move(file)) {}
  const std::string& file() const noexcept { return file_; }

 private:
  std::string file_;
};

/// A text encoder failed on a window; the message carries the word range.
class EncoderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or infeasible configuration values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace formlink
