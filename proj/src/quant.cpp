#include "sashimi/quant.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "sashimi/tensor.hpp"

namespace sashimi::quant {
namespace {

constexpr double kLevels = 255.0;

void check_range(double x) {
  if (!(std::abs(x) <= 1.0)) throw std::domain_error("sample " + std::to_string(x) + " outside [-1, 1]");
}

std::uint8_t to_code(double unit) {
  return static_cast<std::uint8_t>(round_half_away((unit + 1.0) / 2.0 * kLevels));
}

// Edges of the code's rounding interval, back in [-1, 1].
std::pair<double, double> code_interval(std::uint8_t code) {
  const double lo = std::max(-1.0, (static_cast<double>(code) - 0.5) / kLevels * 2.0 - 1.0);
  const double hi = std::min(1.0, (static_cast<double>(code) + 0.5) / kLevels * 2.0 - 1.0);
  return {lo, hi};
}

double compress(double x, double mu) {
  return std::copysign(std::log1p(mu * std::abs(x)) / std::log1p(mu), x);
}

double expand(double y, double mu) {
  return std::copysign(std::expm1(std::abs(y) * std::log1p(mu)) / mu, y);
}

}  // namespace

std::string_view scheme_name(Scheme s) { return s == Scheme::mulaw ? "mulaw" : "linear"; }

Scheme parse_scheme(std::string_view name) {
  if (name == "mulaw") return Scheme::mulaw;
  if (name == "linear") return Scheme::linear;
  throw std::invalid_argument("unknown quantization scheme '" + std::string(name) + "' (expected mulaw or linear)");
}

std::uint8_t mulaw_encode(double x, double mu) {
  check_range(x);
  return to_code(compress(x, mu));
}

double mulaw_decode(std::uint8_t code, double mu) {
  const auto [lo, hi] = code_interval(code);
  return 0.5 * (expand(lo, mu) + expand(hi, mu));
}

std::uint8_t linear_encode(double x) {
  check_range(x);
  return to_code(x);
}

double linear_decode(std::uint8_t code) {
  const auto [lo, hi] = code_interval(code);
  return 0.5 * (lo + hi);
}

std::uint8_t encode(double x, const QuantSpec& spec) {
  if (spec.bits != 8) throw std::invalid_argument("only 8-bit quantization is supported");
  return spec.scheme == Scheme::mulaw ? mulaw_encode(x, spec.mu) : linear_encode(x);
}

double decode(std::uint8_t code, const QuantSpec& spec) {
  if (spec.bits != 8) throw std::invalid_argument("only 8-bit quantization is supported");
  return spec.scheme == Scheme::mulaw ? mulaw_decode(code, spec.mu) : linear_decode(code);
}

std::vector<std::uint8_t> encode_all(std::span<const double> x, const QuantSpec& spec) {
  std::vector<std::uint8_t> out;
  out.reserve(x.size());
  for (double v : x) out.push_back(encode(v, spec));
  return out;
}

std::vector<double> decode_all(std::span<const std::uint8_t> codes, const QuantSpec& spec) {
  std::vector<double> out;
  out.reserve(codes.size());
  for (auto c : codes) out.push_back(decode(c, spec));
  return out;
}

}  // namespace sashimi::quant
