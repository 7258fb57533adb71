#pragma once
// Deterministic RNG streams. Every stateful component owns a named stream
// derived from the run seed, so reordering unrelated draws cannot shift
// another component's sequence.
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace acsac {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Stable sub-seed for stream `k` of run seed `seed`.
inline uint64_t derive_seed(uint64_t seed, uint64_t k) {
  return splitmix64(seed ^ splitmix64(k + 0x51ed270b7a1fca5dull));
}

class RngStream {
 public:
  explicit RngStream(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // [0, 1), 53-bit resolution
  double uniform() { return double(gen_() >> 11) * 0x1.0p-53; }

  // [lo, hi)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller, cosine branch only: exactly two engine draws per sample and
  // no cached state (std::normal_distribution is implementation-defined).
  double gaussian() {
    double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // [0, n), unbiased
  int uniform_int(int n) {
    uint64_t un = uint64_t(n);
    uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t x;
    do { x = gen_(); } while (x >= limit);
    return int(x % un);
  }

  // Engine state as text (the standard's defined representation), so a
  // checkpoint can resume a stream exactly where a continuous run left it.
  std::string state() const {
    std::ostringstream os;
    os << gen_;
    return os.str();
  }
  void set_state(const std::string& s) {
    std::istringstream is(s);
    is >> gen_;
    if (is.fail()) throw std::runtime_error("rng: malformed engine state");
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace acsac
