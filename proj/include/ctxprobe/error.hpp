#pragma once

#include <stdexcept>
#include <string>

namespace ctxprobe {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed inputs and broken preconditions.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Scorer asked for something it does not declare (embeddings, causal
// log-probabilities, ...).
class CapabilityError : public Error {
 public:
  using Error::Error;
};

// Query longer than the scorer's context window.
class ContextError : public Error {
 public:
  using Error::Error;
};

// Scorer failed while answering a query; carries the sequence position when
// the failure belongs to a single masked variant.
class ScorerError : public Error {
 public:
  ScorerError(const std::string& what, long position = -1)
      : Error(what), position_(position) {}
  [[nodiscard]] long position() const noexcept { return position_; }

 private:
  long position_;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

}  // namespace ctxprobe
