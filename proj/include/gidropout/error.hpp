#pragma once

#include <stdexcept>
#include <string>

namespace gidropout {

// Malformed input files (TSV corpora, embeddings, checkpoints).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid hyperparameters or experiment specs. The CLI maps this to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite values inside the numeric core or a NaN training loss.
// The CLI maps this to exit code 3.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, int epoch = -1)
      : std::runtime_error(what), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

}  // namespace gidropout
