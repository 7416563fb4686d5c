#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace sipgd {

// Seedable random source with distributions implemented in-house so that
// streams are bit-identical across standard library implementations.
// Callers that need independent streams derive them from a base seed
// (e.g. restart r of an attack uses base_seed + r).
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Box-Muller; pairs are consumed eagerly so the stream stays aligned.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Uniform integer in [0, n). Modulo bias is irrelevant at the n used here.
  int below(int n) { return static_cast<int>(engine_() % static_cast<uint64_t>(n)); }

  // Rademacher +-1.
  double sign_bit() { return (engine_() & 1u) ? 1.0 : -1.0; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      int j = below(i + 1);
      std::swap(v[i], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace sipgd
