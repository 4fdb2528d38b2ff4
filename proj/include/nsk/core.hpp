#pragma once

// Shared aliases, the error taxonomy, a reproducible RNG and a small
// parallel-for helper used across the library.

#include <Eigen/Dense>

#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace nsk {

inline constexpr const char* kVersion = "0.1.0";

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& msg)
      : std::runtime_error(kind + ": " + msg), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

// Unparseable or internally inconsistent file content.
struct MalformedInput : Error {
  explicit MalformedInput(const std::string& msg) : Error("malformed_input", msg) {}
};

// Semantically invalid data (bad sampling rate, band above Nyquist, ...).
struct DataError : Error {
  explicit DataError(const std::string& msg) : Error("data_error", msg) {}
};

// Duplicate or unknown column names in tabular formats.
struct SchemaError : Error {
  explicit SchemaError(const std::string& msg) : Error("schema_error", msg) {}
};

// Invalid pipeline or generator configuration.
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error("config_error", msg) {}
};

// A statistic whose defining variance vanished.
struct DegenerateVariance : Error {
  explicit DegenerateVariance(const std::string& msg) : Error("degenerate_variance", msg) {}
};

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error("io_error", msg) {}
};

// ---------------------------------------------------------------------------
// Finiteness checks: readers reject non-finite values so nothing downstream
// ever sees NaN/Inf.

inline bool all_finite(const Mat& m) { return m.allFinite(); }
inline bool all_finite(const Vec& v) { return v.allFinite(); }

inline void require_finite(const Mat& m, const std::string& what) {
  if (!m.allFinite()) throw MalformedInput("non-finite value in " + what);
}

// ---------------------------------------------------------------------------
// Rng: mt19937_64 engine with hand-rolled distributions. The std::*
// distributions are implementation-defined, the engine itself is not, so
// sampling through these helpers gives bit-identical streams everywhere.

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n); n > 0
  std::uint64_t uniform_int(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller, one spare cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 == 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // Independent stream derived from this generator's seed and a tag.
  // Substreams of substreams compose (seed mixing is a bijective-ish hash).
  Rng substream(std::uint64_t tag) const { return Rng(mix(seed_, tag)); }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t seed() const { return seed_; }

  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    // splitmix64 finalizer over the combined value
    std::uint64_t z = a + 0x9E3779B97F4A7C15ull * (b + 0x632BE59BD9B4E019ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// parallel_for: runs fn(i) for i in [0, n). Work items must be independent;
// results should be written to pre-sized slots so output order never depends
// on scheduling. The first exception thrown by any item is rethrown.

inline void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  std::size_t workers = jobs <= 1 ? 1 : std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex err_mu;
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t t = 0; t < workers; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace nsk
