#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace gema {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Transport-level failure (connection refused, timeout). Retryable.
class TransportError : public Error {
 public:
  explicit TransportError(const std::string& what, int attempts = 1)
      : Error(what), attempts_(attempts) {}
  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

// Non-2xx response from a chat-completions endpoint.
class ApiError : public Error {
 public:
  ApiError(int status, std::string body_excerpt, int attempts = 1)
      : Error("API error " + std::to_string(status) + ": " + body_excerpt),
        status_(status),
        body_excerpt_(std::move(body_excerpt)),
        attempts_(attempts) {}
  int status() const noexcept { return status_; }
  const std::string& body_excerpt() const noexcept { return body_excerpt_; }
  int attempts() const noexcept { return attempts_; }
  bool retryable() const noexcept { return status_ == 429 || status_ >= 500; }

 private:
  int status_;
  std::string body_excerpt_;
  int attempts_;
};

class MalformedResponseError : public Error {
 public:
  using Error::Error;
};

class FixtureMissingError : public Error {
 public:
  using Error::Error;
};

// No parseable JSON in an LLM response. Carries the first 200 characters.
class ExtractionParseError : public Error {
 public:
  static constexpr std::size_t kExcerptLength = 200;

  explicit ExtractionParseError(const std::string& response)
      : Error("no parseable JSON in response: " +
              response.substr(0, kExcerptLength)),
        excerpt_(response.substr(0, kExcerptLength)) {}
  const std::string& excerpt() const noexcept { return excerpt_; }

 private:
  std::string excerpt_;
};

// Correlation undefined (constant column, too few samples).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class CorpusError : public Error {
 public:
  CorpusError(const std::string& what, std::size_t line = 0)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Wraps a pipeline failure with the study it belongs to.
class StudyError : public Error {
 public:
  StudyError(std::string study_id, const std::string& what)
      : Error(study_id + ": " + what), study_id_(std::move(study_id)) {}
  const std::string& study_id() const noexcept { return study_id_; }

 private:
  std::string study_id_;
};

}  // namespace gema
