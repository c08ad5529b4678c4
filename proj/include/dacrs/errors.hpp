#pragma once

#include <stdexcept>
#include <string>

namespace dacrs {

/// Malformed or inconsistent input file (KG, dialogues, checkpoint).
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument to an operation (unknown entity id, bad rate, ...).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dimension or shape mismatch between model, checkpoint and graph.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite value in an embedding, loss or gradient.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// External rewrite or embedding provider failed (network, schema, timeout).
class ProviderError : public std::runtime_error {
 public:
  ProviderError(const std::string& what, std::string prompt_hash = {})
      : std::runtime_error(what), prompt_hash_(std::move(prompt_hash)) {}

  const std::string& prompt_hash() const noexcept { return prompt_hash_; }

 private:
  std::string prompt_hash_;
};

}  // namespace dacrs
