#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <string_view>

namespace orthoview {

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace detail

// Counter-based random stream. The key is derived from (seed, stream name,
// object id, epoch); the n-th draw is a pure function of (key, n), so streams
// for different objects or epochs never share state.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  RandomStream(std::uint64_t seed, std::string_view name, std::uint64_t id = 0,
               std::uint64_t epoch = 0) noexcept {
    std::uint64_t k = detail::splitmix64(seed);
    k = detail::splitmix64(k ^ detail::fnv1a(name));
    k = detail::splitmix64(k ^ id);
    k = detail::splitmix64(k ^ (epoch * 0xD6E8FEB86659FD93ull));
    key_ = k;
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept {
    return detail::splitmix64(key_ ^ detail::splitmix64(counter_++));
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(*this);
  }

  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(*this);
  }

  std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

// Derives a child seed, e.g. one per experiment cell.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view name,
                                 std::uint64_t id = 0) noexcept {
  return RandomStream(seed, name, id)();
}

}  // namespace orthoview
