#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sashimi {

using Shape = std::vector<std::size_t>;

// Raised when a NaN/Inf shows up in a computed value.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major tensor of doubles. Complex tensors carry a trailing
// dimension of 2 holding interleaved (re, im) pairs.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor scalar(double v);
  static Tensor zeros_like(const Tensor& other);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t numel() const { return data_.size(); }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  // Rank-2 accessors.
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  std::span<const double> row(std::size_t r) const;
  std::span<double> row(std::size_t r);

  double item() const;

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool v) { requires_grad_ = v; }

  Tensor reshaped(Shape shape) const;
  bool all_finite() const;
  // Throws NumericalError naming `where` if any entry is NaN/Inf.
  void check_finite(const char* where) const;

  bool same_values(const Tensor& other) const;

 private:
  Shape shape_;
  std::vector<double> data_;
  bool requires_grad_ = false;
};

// Round half away from zero. Every quantizer in the library goes through this.
inline double round_half_away(double x) { return std::round(x); }

// Numerically stable log-softmax (max subtraction).
std::vector<double> log_softmax(std::span<const double> logits);
std::vector<double> softmax(std::span<const double> logits);
// -log2 softmax(logits)[target], evaluated as log2(sum exp(l - max)) - (l[target] - max) / ln 2
// so that uniform logits give exactly log2(K).
double neg_log2_prob(std::span<const double> logits, std::size_t target);

}  // namespace sashimi
