#pragma once

#include <cstdint>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace relgraph {

// Thrown when an operation is called outside its contract (bad shapes,
// out-of-range ids, empty segments).
struct ContractError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Thrown for runtime failures: file I/O, parse errors, numeric domain errors.
struct RuntimeFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractError(msg);
}

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic RNG. std::mt19937_64 is pinned by the standard; the
// distribution helpers below are hand-rolled because the stdlib
// distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(splitmix64(seed ^ 0x5851f42d4c957f2dULL)) {}

  uint64_t next_u64() {
    // xorshift* on a splitmix-initialized state; stable everywhere.
    uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545f4914f6cdd1dULL;
  }

  // [0, 1)
  double uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Unbiased integer in [0, n). Multiply-shift keeps to the generator's
  // high bits; the rejection loop removes the residual bias.
  uint64_t bounded(uint64_t n) {
    require(n > 0, "Rng::bounded: n must be positive");
    unsigned __int128 m = (unsigned __int128)next_u64() * n;
    uint64_t lo = (uint64_t)m;
    if (lo < n) {
      const uint64_t threshold = (0 - n) % n;
      while (lo < threshold) {
        m = (unsigned __int128)next_u64() * n;
        lo = (uint64_t)m;
      }
    }
    return (uint64_t)(m >> 64);
  }

  double normal() {
    // Box-Muller, one value per call.
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Derives an independent stream from a seed and a tag path.
  static uint64_t derive(uint64_t seed, std::initializer_list<uint64_t> tags) {
    uint64_t s = splitmix64(seed);
    for (uint64_t t : tags) s = splitmix64(s ^ (t + 0x9e3779b97f4a7c15ULL));
    return s;
  }

 private:
  uint64_t state_;
};

// Default worker count: RELGRAPH_THREADS env var, else hardware concurrency.
int default_thread_count();

// Runs fn(i) for i in [0, n) on up to default_thread_count() workers.
// Tasks must be independent; nested calls degrade to sequential execution.
void parallel_for(size_t n, const std::function<void(size_t)>& fn);

}  // namespace relgraph
