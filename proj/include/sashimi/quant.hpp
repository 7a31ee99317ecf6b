#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace sashimi::quant {

enum class Scheme { mulaw, linear };

std::string_view scheme_name(Scheme s);
Scheme parse_scheme(std::string_view name);

struct QuantSpec {
  Scheme scheme = Scheme::mulaw;
  int bits = 8;
  double mu = 255.0;
};

// |x| <= 1 is required; anything else throws std::domain_error.
std::uint8_t mulaw_encode(double x, double mu = 255.0);
// Midpoint, in amplitude, of the interval of inputs that encode to `code`.
double mulaw_decode(std::uint8_t code, double mu = 255.0);

std::uint8_t linear_encode(double x);
double linear_decode(std::uint8_t code);

std::uint8_t encode(double x, const QuantSpec& spec);
double decode(std::uint8_t code, const QuantSpec& spec);

std::vector<std::uint8_t> encode_all(std::span<const double> x, const QuantSpec& spec);
std::vector<double> decode_all(std::span<const std::uint8_t> codes, const QuantSpec& spec);

}  // namespace sashimi::quant
