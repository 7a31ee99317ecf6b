#pragma once

// Position-wise primitives shared by the tape ops (convolution mode) and the
// recurrent stepper, so both execution modes evaluate the same formulas.

#include <cmath>
#include <cstddef>
#include <span>

namespace sashimi::kernels {

inline constexpr double kGeluK = 0.7978845608;
inline constexpr double kGeluA = 0.044715;
inline constexpr double kLayerNormEps = 1e-5;

inline double gelu(double x) {
  const double t = std::tanh(kGeluK * (x + kGeluA * x * x * x));
  return 0.5 * x * (1.0 + t);
}

inline double gelu_grad(double x) {
  const double t = std::tanh(kGeluK * (x + kGeluA * x * x * x));
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluK * (1.0 + 3.0 * kGeluA * x * x);
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// y = x W + b for one row; W is in x out row-major, b may be empty.
inline void linear_row(std::span<const double> x, std::span<const double> w, std::span<const double> b,
                       std::span<double> y) {
  const std::size_t in = x.size();
  const std::size_t out = y.size();
  for (std::size_t j = 0; j < out; ++j) y[j] = b.empty() ? 0.0 : b[j];
  for (std::size_t i = 0; i < in; ++i) {
    const double xi = x[i];
    const double* wr = w.data() + i * out;
    for (std::size_t j = 0; j < out; ++j) y[j] += xi * wr[j];
  }
}

// Normalizes one row over the channel dimension; returns 1/sqrt(var + eps).
inline double layer_norm_row(std::span<const double> x, std::span<const double> gain, std::span<const double> bias,
                             std::span<double> xhat, std::span<double> y) {
  const std::size_t h = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(h);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(h);
  const double rstd = 1.0 / std::sqrt(var + kLayerNormEps);
  for (std::size_t i = 0; i < h; ++i) {
    xhat[i] = (x[i] - mean) * rstd;
    y[i] = gain[i] * xhat[i] + bias[i];
  }
  return rstd;
}

}  // namespace sashimi::kernels
