#pragma once

// Counter-keyed random streams.
//
// Every stream is identified by a tuple of integers (seed, path, role, ...) that
// is hashed into the 256-bit state of a xoshiro256++ generator. Streams never
// share state, so results depend only on the key layout, never on the order in
// which worker threads touch them.

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

namespace cdpm {

inline constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// xoshiro256++ (Blackman & Vigna); satisfies UniformRandomBitGenerator.
class Xoshiro256pp {
 public:
  using result_type = std::uint64_t;

  Xoshiro256pp() : Xoshiro256pp(0) {}
  explicit Xoshiro256pp(std::uint64_t seed) noexcept {
    std::uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t s_[4];
};

// Folds a key tuple into a single 64-bit seed; distinct tuples give unrelated streams.
inline std::uint64_t stream_key(std::initializer_list<std::uint64_t> parts) noexcept {
  std::uint64_t h = 0x6A09E667F3BCC908ULL;
  for (std::uint64_t p : parts) {
    std::uint64_t s = h ^ p;
    h = splitmix64(s) + 0x3C6EF372FE94F82BULL;
  }
  return h;
}

inline Xoshiro256pp make_stream(std::initializer_list<std::uint64_t> parts) noexcept {
  return Xoshiro256pp(stream_key(parts));
}

// Stream roles used across samplers and Monte-Carlo evaluators.
enum class StreamRole : std::uint64_t {
  Init = 1,
  Predictor = 2,
  Corrector = 3,
  ScoreNoise = 4,
  Target = 5,
  Kernel = 6,
  Time = 7,
  Projection = 8,
  Bootstrap = 9,
  Dataset = 10,
};

inline constexpr std::uint64_t role(StreamRole r) noexcept { return static_cast<std::uint64_t>(r); }

template <class Engine>
inline double standard_normal(Engine& g) {
  return boost::random::normal_distribution<double>(0.0, 1.0)(g);
}

template <class Engine>
inline void fill_standard_normal(Engine& g, std::span<double> out) {
  boost::random::normal_distribution<double> n(0.0, 1.0);
  for (double& v : out) v = n(g);
}

template <class Engine>
inline double uniform01(Engine& g) {
  // 53 random mantissa bits, in [0, 1).
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

}  // namespace cdpm
