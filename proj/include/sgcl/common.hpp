#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace sgcl {

// Error categories aligned with the CLI exit codes (2 usage / 3 config / 4 data / 5 numeric).
struct ConfigError : std::runtime_error { using std::runtime_error::runtime_error; };
struct DataError : std::runtime_error { using std::runtime_error::runtime_error; };
struct ParseError : DataError { using DataError::DataError; };
struct ShapeError : std::runtime_error { using std::runtime_error::runtime_error; };
struct NumericError : std::runtime_error { using std::runtime_error::runtime_error; };

uint64_t fnv1a64(std::string_view s);
std::string hash_hex(uint64_t h);

// splitmix64 finalizer; derive_seed builds independent rng streams from (seed, index, ...) tuples
uint64_t mix64(uint64_t x);
uint64_t derive_seed(uint64_t a, uint64_t b = 0, uint64_t c = 0, uint64_t d = 0);

// mt19937_64 with a fixed bits-to-double mapping. std::*_distribution output is
// implementation-defined, so every draw in the project goes through these helpers.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}
  uint64_t bits() { return eng_(); }
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }  // [0,1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  size_t uniform_int(size_t n);  // unbiased draw from [0, n)
  bool bernoulli(double p) { return uniform01() < p; }

 private:
  std::mt19937_64 eng_;
};

// Shortest round-trip decimal form; stable across runs so output files compare byte-equal.
std::string fmt_double(double v);

// Runs fn(thread_index, lo, hi) over contiguous slices of [0, n). Thread 0 runs inline.
void parallel_slices(size_t n, int threads, const std::function<void(int, size_t, size_t)>& fn);

}  // namespace sgcl
