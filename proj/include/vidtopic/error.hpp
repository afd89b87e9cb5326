#pragma once

#include <stdexcept>
#include <string>

namespace vidtopic {

// Base of every error thrown by the library. Each subclass names the stage
// that rejected its input so callers can map failures to exit codes or HTTP
// status values without string matching.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration values or violated preconditions.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated files.
class FormatError : public Error {
 public:
  using Error::Error;
};

// A database header refers to models other than the ones supplied.
class ModelMismatchError : public Error {
 public:
  using Error::Error;
};

// A query refers to sections, clips or topics that do not exist.
class NotFoundError : public Error {
 public:
  using Error::Error;
};

// Query text rejected by the parser. `position` is the byte offset of the
// offending token; `missing_keyword` is set when a mandatory keyword is absent.
class ParseError : public Error {
 public:
  ParseError(std::string message, std::size_t position, std::string missing_keyword = {})
      : Error(message + " (at offset " + std::to_string(position) + ")"),
        position_(position),
        missing_keyword_(std::move(missing_keyword)) {}

  std::size_t position() const noexcept { return position_; }
  const std::string& missing_keyword() const noexcept { return missing_keyword_; }

 private:
  std::size_t position_;
  std::string missing_keyword_;
};

// Wraps an error raised inside one pipeline stage.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace vidtopic
