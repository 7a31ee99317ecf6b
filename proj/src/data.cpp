#include "sashimi/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace sashimi::data {

std::string_view kind_name(Kind k) {
  switch (k) {
    case Kind::sine_mix: return "sine_mix";
    case Kind::sawtooth: return "sawtooth";
    case Kind::noise_ar1: return "noise_ar1";
  }
  return "?";
}

Kind parse_kind(std::string_view name) {
  if (name == "sine_mix") return Kind::sine_mix;
  if (name == "sawtooth") return Kind::sawtooth;
  if (name == "noise_ar1") return Kind::noise_ar1;
  throw std::invalid_argument("unknown dataset kind '" + std::string(name) + "'");
}

std::vector<double> make_synthetic(const SyntheticSpec& spec, Rng& rng) {
  std::vector<double> x(spec.length, 0.0);
  switch (spec.kind) {
    case Kind::sine_mix:
      for (const Tone& tone : spec.tones) {
        if (!(tone.period > 0.0)) throw std::invalid_argument("tone period must be positive");
        for (std::size_t t = 0; t < x.size(); ++t) {
          x[t] += tone.amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / tone.period + tone.phase);
        }
      }
      break;
    case Kind::sawtooth: {
      if (spec.period == 0) throw std::invalid_argument("sawtooth period must be positive");
      const double p = static_cast<double>(spec.period);
      for (std::size_t t = 0; t < x.size(); ++t) {
        x[t] = spec.amplitude * (2.0 * static_cast<double>(t % spec.period) / p - 1.0);
      }
      break;
    }
    case Kind::noise_ar1: {
      double state = 0.0;
      for (auto& v : x) {
        state = spec.phi * state + spec.sigma * rng.normal();
        v = state;
      }
      break;
    }
  }
  for (auto& v : x) v = std::clamp(v, -1.0, 1.0);
  return x;
}

}  // namespace sashimi::data
