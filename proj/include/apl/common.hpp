#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace apl {

// Configuration problems the caller can fix: bad flags, bad paths, bad sizes.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Violated tensor/shape contracts. These indicate programming errors, not user input.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unrecoverable failures during a training run (non-finite losses and the like).
class TrainingAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Single RNG type everywhere so seeded runs replay exactly.
using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double normal(Rng& rng, double mean, double stddev) {
  return std::normal_distribution<double>(mean, stddev)(rng);
}

inline long rand_index(Rng& rng, long n) {
  return std::uniform_int_distribution<long>(0, n - 1)(rng);
}

}  // namespace apl
