#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "sashimi/rng.hpp"

namespace sashimi::data {

enum class Kind { sine_mix, sawtooth, noise_ar1 };

std::string_view kind_name(Kind k);
Kind parse_kind(std::string_view name);

struct Tone {
  double period = 16.0;  // samples per cycle
  double amplitude = 0.5;
  double phase = 0.0;    // radians
};

struct SyntheticSpec {
  Kind kind = Kind::sawtooth;
  std::size_t length = 4096;
  std::vector<Tone> tones{Tone{}};  // sine_mix
  std::size_t period = 16;          // sawtooth
  double amplitude = 0.8;           // sawtooth
  double phi = 0.9;                 // noise_ar1 coefficient
  double sigma = 0.1;               // noise_ar1 innovation scale
};

// Samples in [-1, 1]; only noise_ar1 draws from the rng.
std::vector<double> make_synthetic(const SyntheticSpec& spec, Rng& rng);

}  // namespace sashimi::data
