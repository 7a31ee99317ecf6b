#include "sashimi/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "sashimi/tensor.hpp"

namespace sashimi {
namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed) {
  std::uint64_t x = seed;
  s_[0] = splitmix64(x);
  s_[1] = splitmix64(x);
  if (s_[0] == 0 && s_[1] == 0) s_[1] = 1;
}

Rng Rng::derive(std::uint64_t seed, std::string_view consumer) {
  // FNV-1a over the consumer tag, folded into the seed.
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : consumer) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  std::uint64_t x = seed ^ h;
  return Rng(splitmix64(x));
}

std::uint64_t Rng::next_u64() {
  std::uint64_t s1 = s_[0];
  const std::uint64_t s0 = s_[1];
  const std::uint64_t result = s0 + s1;
  s_[0] = s0;
  s1 ^= s1 << 23;
  s_[1] = s1 ^ s0 ^ (s1 >> 18) ^ (s0 >> 5);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below(0)");
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t v;
  do {
    v = next_u64();
  } while (v >= limit);
  return v % n;
}

std::size_t categorical_sample(std::span<const double> logits, Rng& rng) {
  if (logits.empty()) throw std::invalid_argument("categorical_sample over zero classes");
  for (double v : logits) {
    if (!std::isfinite(v)) throw NumericalError("categorical_sample: non-finite logit");
  }
  const auto probs = softmax(logits);
  const double u = rng.uniform();
  double cdf = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    cdf += probs[i];
    if (u < cdf) return i;
  }
  // u landed in the rounding slack above the accumulated CDF.
  for (std::size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0.0) return i;
  }
  return probs.size() - 1;
}

}  // namespace sashimi
