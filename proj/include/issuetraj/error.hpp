#pragma once

#include <chrono>
#include <stdexcept>
#include <string>

namespace issuetraj {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MalformedInput : public Error {
 public:
  using Error::Error;
};

/// Thread has zero or several comments flagged as the issue header.
class NoHeader : public Error {
 public:
  using Error::Error;
};

class InvalidUrl : public Error {
 public:
  using Error::Error;
};

class NotFound : public Error {
 public:
  using Error::Error;
};

class RateLimited : public Error {
 public:
  RateLimited(const std::string &what, std::chrono::seconds retry_after)
      : Error(what), retry_after_(retry_after) {}

  std::chrono::seconds retry_after() const noexcept { return retry_after_; }

 private:
  std::chrono::seconds retry_after_;
};

class NetworkFailure : public Error {
 public:
  using Error::Error;
};

class ParseFailure : public Error {
 public:
  using Error::Error;
};

class OversizeImage : public Error {
 public:
  using Error::Error;
};

class SummaryFailure : public Error {
 public:
  using Error::Error;
};

class GatewayFailure : public Error {
 public:
  using Error::Error;
};

/// Replay mode saw a request digest that was never recorded.
class ReplayMiss : public Error {
 public:
  using Error::Error;
};

/// A scripted stub ran out of responses. Deliberately not a GatewayFailure so
/// that it is never swallowed by the pipeline's degradation paths.
class StubExhausted : public Error {
 public:
  using Error::Error;
};

class UnsupportedPayload : public Error {
 public:
  using Error::Error;
};

class UnknownRole : public Error {
 public:
  using Error::Error;
};

class JudgeFailure : public Error {
 public:
  using Error::Error;
};

class EmptyInput : public Error {
 public:
  using Error::Error;
};

class ForeignFieldKey : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace issuetraj
