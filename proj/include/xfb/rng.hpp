#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

// Self-contained deterministic RNG. Every stochastic quantity in the project
// is a pure function of explicit 64-bit seeds derived with hash64, so results
// are reproducible across runs, thread counts and standard libraries (std::
// distributions are implementation-defined and deliberately avoided).

namespace xfb {

namespace detail {

// splitmix64 finalizer (Steele, Lea, Flood 2014 via Vigna's xoshiro page).
inline constexpr std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

inline constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

inline constexpr std::uint64_t combine(std::uint64_t h, std::uint64_t v) {
  return mix64(h ^ (v + kGolden + (h << 6) + (h >> 2)));
}

inline constexpr std::uint64_t as_u64(std::uint64_t v) { return v; }
inline constexpr std::uint64_t as_u64(std::int64_t v) {
  return static_cast<std::uint64_t>(v);
}
inline constexpr std::uint64_t as_u64(std::string_view s) { return fnv1a(s); }

}  // namespace detail

// Order-sensitive hash of mixed integer/string parts into one seed.
template <class... Parts>
constexpr std::uint64_t hash64(const Parts&... parts) {
  std::uint64_t h = detail::kGolden;
  ((h = detail::combine(h, detail::as_u64(parts))), ...);
  return h;
}

// splitmix64 sequence generator with Box-Muller gaussians.
class Rng {
 public:
  explicit constexpr Rng(std::uint64_t seed) : state_(seed) {}

  constexpr std::uint64_t next_u64() {
    state_ += detail::kGolden;
    return detail::mix64(state_);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform index in [0, n). Lemire reduction, bias negligible for our n.
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller; the second value of each pair is cached.
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Fisher-Yates, order fixed by the seed alone.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = index(i);
      using std::swap;
      swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace xfb
