#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>

namespace sashimi {

// xorshift128+ over a 128-bit state, seeded through splitmix64. The stream is
// defined purely by integer arithmetic so it is identical on every platform.
class Rng {
 public:
  static constexpr std::string_view kAlgorithm = "xorshift128+/splitmix64";

  explicit Rng(std::uint64_t seed = 0);

  // Independent stream for a named consumer ("data", "init", "sample", ...).
  static Rng derive(std::uint64_t seed, std::string_view consumer);

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  // Standard normal via Box-Muller (one draw per call, no caching).
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::array<std::uint64_t, 2> state() const { return s_; }

 private:
  std::array<std::uint64_t, 2> s_{};
};

// Inverse-CDF sample from softmax(logits) using exactly one uniform draw.
std::size_t categorical_sample(std::span<const double> logits, Rng& rng);

}  // namespace sashimi
