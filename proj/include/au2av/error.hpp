#pragma once

#include <stdexcept>
#include <string>

namespace au2av {

/// Base for every error raised by the library. `kind()` is the stable,
/// machine-parsable tag the CLI prints in front of the message.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error("validation", what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("io", what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error("numeric", what) {}
};

class ProviderError : public Error {
 public:
  explicit ProviderError(const std::string& what) : Error("provider", what) {}
};

}  // namespace au2av
