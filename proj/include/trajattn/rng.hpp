#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace trajattn {

// Deterministic RNG. Only the mt19937_64 engine comes from the standard
// library (its output sequence is fully specified); the distributions are
// implemented here so results are identical across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller with a cached second draw.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // [0, n), unbiased enough for index use (Lemire reduction without rejection).
  int uniform_int(int n) {
    return static_cast<int>(
        (static_cast<__uint128_t>(next_u64()) * static_cast<uint64_t>(n)) >> 64);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      const int j = uniform_int(i + 1);
      std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view text) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

// Independent stream for a named purpose under one experiment seed.
inline uint64_t derive_seed(uint64_t seed, std::string_view tag) {
  return splitmix64(seed ^ fnv1a64(tag));
}

inline uint64_t derive_seed(uint64_t seed, std::string_view tag, uint64_t index) {
  return splitmix64(derive_seed(seed, tag) ^ splitmix64(index));
}

// Stateless hash noise in [0, 1), used for terrain texture.
inline double hash_noise(uint64_t seed, int64_t x, int64_t y, uint64_t channel = 0) {
  uint64_t h = splitmix64(seed ^ splitmix64(static_cast<uint64_t>(x) * 0x9e3779b97f4a7c15ull ^
                                            splitmix64(static_cast<uint64_t>(y)) ^
                                            (channel << 56)));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace trajattn
