#pragma once

#include <cstdint>
#include <cmath>
#include <stdexcept>
#include <string>

namespace vseg {

[[noreturn]] inline void fail(const std::string& msg) {
  throw std::runtime_error(msg);
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic RNG with explicitly coded transforms. std::mt19937_64 is
// fully specified by the standard; the distribution helpers below are coded
// here because std::*_distribution output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), state_(splitmix64(seed)) {}

  std::uint64_t next_u64() {
    // xorshift-multiply step seeded via splitmix64
    state_ = splitmix64(state_);
    return state_;
  }

  // [0,1) with 53 random bits
  double uniform() { return double(next_u64() >> 11) * (1.0 / 9007199254740992.0); }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // [0,n)
  int uniform_int(int n) {
    require(n > 0, "Rng::uniform_int: n must be positive");
    return int(next_u64() % std::uint64_t(n));
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller, spare value cached
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0,1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Independent deterministic stream derived from the original seed.
  Rng fork(std::uint64_t stream) const {
    return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x51ed2701)));
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace vseg
