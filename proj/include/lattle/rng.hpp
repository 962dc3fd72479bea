#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace lattle {

// Deterministic RNG. std::mt19937_64 output is pinned by the standard, but the
// <random> distributions are not, so the transforms here are hand-rolled to
// keep runs bit-reproducible across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // [0, 1)
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive on both ends.
  int uniform_int(int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(gen_() % span);
  }

  // Box-Muller.
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log1p(-u1));
    return r * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Fisher-Yates, explicit so shuffles do not depend on std::shuffle internals.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(gen_() % i);
      std::swap(v[i - 1], v[j]);
    }
  }

  // Independent child stream, e.g. one per trial or per dropout site.
  Rng fork() { return Rng(gen_()); }

 private:
  std::mt19937_64 gen_;
};

}  // namespace lattle
