#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace scroll {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// An argument lies outside the domain of a function (e.g. a spiral angle beyond theta_max).
class DomainError : public Error {
  public:
    using Error::Error;
};

/// Invalid or inconsistent configuration.
class ConfigError : public Error {
  public:
    using Error::Error;
};

/// A computation produced a non-finite value.
class NumericError : public Error {
  public:
    using Error::Error;
};

/// Malformed input file. The message names the file, the byte offset and what was expected.
class FormatError : public Error {
  public:
    FormatError(const std::string &file, std::uint64_t offset, const std::string &expectation)
        : Error(file + ": at byte " + std::to_string(offset) + ": expected " + expectation),
          file_(file), offset_(offset) {}

    const std::string &file() const noexcept { return file_; }
    std::uint64_t offset() const noexcept { return offset_; }

  private:
    std::string file_;
    std::uint64_t offset_;
};

} // namespace scroll
