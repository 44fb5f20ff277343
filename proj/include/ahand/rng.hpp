#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace ahand {

// Deterministic RNG. mt19937_64 output is specified by the standard, and the
// distributions below are hand-rolled, so identical seeds give identical
// streams on every platform (std::normal_distribution does not guarantee that).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive bounds
  int uniform_int(int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(gen_() % span);
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // Box-Muller; u1 in (0,1] so log is finite
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Derive an independent stream (per-env seeding, named seed registry).
  // Depends only on the fork base and stream id, not on how many draws
  // happened, so fork order is reproducible by construction.
  Rng fork(std::uint64_t stream) const {
    std::uint64_t x = seed_mix_ ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    x = x ^ (x >> 31);
    Rng child(x);
    child.seed_mix_ = x;
    return child;
  }

  void set_fork_base(std::uint64_t base) { seed_mix_ = base; }

 private:
  std::mt19937_64 gen_;
  std::uint64_t seed_mix_ = 0x6a09e667f3bcc908ULL;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline Rng make_rng(std::uint64_t seed) {
  Rng r(seed);
  r.set_fork_base(seed ^ 0x5bf0a8b1457b0cf7ULL);
  return r;
}

}  // namespace ahand
