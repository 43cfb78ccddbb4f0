#pragma once

// Counter-based random streams built on Philox4x32-10.
//
// A Stream is an (seed, id) pair. Children are derived by hashing tags into
// the id, so a derivation path such as (trial, step, phase, block) names a
// stream independently of execution order. Within a stream, substream i is
// consumed by particle i; each draw is a pure function of
// (seed, id, substream, draw index).

#include <array>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>

namespace blockpf {

using Philox4x32Counter = std::array<std::uint32_t, 4>;
using Philox4x32Key = std::array<std::uint32_t, 2>;

inline Philox4x32Counter philox4x32_10(Philox4x32Counter ctr, Philox4x32Key key) {
  constexpr std::uint32_t kMul0 = 0xD2511F53u;
  constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
    const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Sequential generator over one substream. Satisfies
// std::uniform_random_bit_generator.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t seed, std::uint64_t stream_id, std::uint32_t substream)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_id_(stream_id),
        substream_(substream) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    const Philox4x32Counter out = philox4x32_10(
        {draw_++, substream_, static_cast<std::uint32_t>(stream_id_),
         static_cast<std::uint32_t>(stream_id_ >> 32)},
        key_);
    return (std::uint64_t{out[0]} << 32) | out[1];
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  // Index k with probability probs[k] (probs need not be exactly normalized;
  // the draw is scaled by the total).
  std::size_t categorical(std::span<const double> probs) {
    double total = 0.0;
    for (double p : probs) total += p;
    const double u = uniform() * total;
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t k = 0; k < probs.size(); ++k) {
      if (probs[k] <= 0.0) continue;
      acc += probs[k];
      last_positive = k;
      if (u < acc) return k;
    }
    return last_positive;
  }

  std::uint32_t draws_consumed() const { return draw_; }

 private:
  Philox4x32Key key_;
  std::uint64_t stream_id_;
  std::uint32_t substream_;
  std::uint32_t draw_ = 0;
};

class Stream {
 public:
  explicit Stream(std::uint64_t seed, std::uint64_t id = 0) : seed_(seed), id_(id) {}

  Stream child(std::uint64_t tag) const {
    return Stream(seed_, splitmix64(splitmix64(id_) ^ (tag * 0xD6E8FEB86659FD93ull + 1)));
  }
  Stream child(std::initializer_list<std::uint64_t> path) const {
    Stream s = *this;
    for (std::uint64_t tag : path) s = s.child(tag);
    return s;
  }

  CounterRng substream(std::uint32_t index) const { return {seed_, id_, index}; }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t id() const { return id_; }

 private:
  std::uint64_t seed_;
  std::uint64_t id_;
};

// Phase tags used by the particle filters.
enum class Phase : std::uint64_t { kResample = 1, kPropagate = 2, kSimulate = 3, kTrial = 4 };

}  // namespace blockpf
