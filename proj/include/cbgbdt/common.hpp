#ifndef CBGBDT_COMMON_HPP_
#define CBGBDT_COMMON_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cbgbdt {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File could not be read or a cell could not be parsed.
class LoadError : public Error {
 public:
  using Error::Error;
};

/// A label is outside the set allowed by the task.
class LabelError : public Error {
 public:
  using Error::Error;
};

/// The task declaration is unusable (e.g. fewer than two classes).
class TaskError : public Error {
 public:
  using Error::Error;
};

/// A split plan cannot be built with the requested options.
class SplitError : public Error {
 public:
  using Error::Error;
};

/// Matrix dimensions do not agree with what a model or metric expects.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// The (loss kind, task) pair is not in the capability table.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

/// A parameter value is outside its documented domain.
class ParamError : public Error {
 public:
  using Error::Error;
};

/// A configuration document is malformed or has unknown keys.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

// SplitMix64. Counter-based so that any (seed, stream, index) triple maps to a
// fixed value on every platform; std:: distributions are implementation-defined.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
  return mix64(a ^ (mix64(b) + 0x632be59bd9b4e019ULL + (a << 6) + (a >> 2)));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v;
    do {
      v = next();
    } while (v >= limit);
    return v % n;
  }

  /// Standard normal via Box-Muller.
  double normal();

 private:
  std::uint64_t state_;
};

/// Fisher-Yates shuffle driven by Rng.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers with static
/// contiguous chunking. Results must not depend on the schedule.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h = 0xcbf29ce484222325ULL);

/// Writes `contents` to `path` through a temporary file and a rename.
void write_file_atomic(const std::string& path, const std::string& contents);

std::string read_file(const std::string& path);

}  // namespace cbgbdt

#endif  // CBGBDT_COMMON_HPP_
