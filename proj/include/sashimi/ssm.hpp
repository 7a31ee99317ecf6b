#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sashimi/linalg.hpp"
#include "sashimi/tensor.hpp"

namespace sashimi::ssm {

// untied: A = diag(lambda) + p q^*
// tied: A = diag(lambda) - p p^*
// tied_exp: tied, with Re(lambda) = -max(exp(raw), kMinDecay)
enum class Mode { untied, tied, tied_exp };

std::string_view mode_name(Mode m);
Mode parse_mode(std::string_view name);

// Materialized Re(lambda) in tied_exp mode never rises above -kMinDecay.
inline constexpr double kMinDecay = 1e-6;

// A non-finite recurrent state: the discretized system blew up.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t step, std::string layer);
  std::size_t step() const { return step_; }
  const std::string& layer() const { return layer_; }

 private:
  std::size_t step_;
  std::string layer_;
};

// Maps the stored real part to the materialized Re(lambda) for a mode.
double lambda_real(Mode mode, double raw);
// d Re(lambda) / d raw.
double lambda_real_grad(Mode mode, double raw);

struct SsmParams {
  Mode mode = Mode::tied;
  std::vector<double> lambda_re_raw;
  std::vector<double> lambda_im;
  CMatrix p;  // N x r
  CMatrix q;  // N x r, read only when untied
  CVector b;
  CVector c;
  double d = 0.0;
  double delta = 0.01;
  bool conj_pairs = false;

  std::size_t state_size() const { return lambda_im.size(); }
  CVector lambda() const;
  void validate() const;
};

struct DiscreteSsm {
  CMatrix a_bar;
  CVector b_bar;
  CVector c_bar;
  double d_bar = 0.0;
  bool conj_pairs = false;

  std::size_t state_size() const { return b_bar.size(); }
};

struct Kernel {
  std::vector<double> taps;
  std::size_t length() const { return taps.size(); }
};

struct RecurrentState {
  CVector h;

  static RecurrentState zeros(std::size_t n) { return RecurrentState{CVector(n)}; }
  double norm() const { return vector_norm(h); }
};

CMatrix materialize_a(const SsmParams& params);
// Bilinear: A_bar = (I - D/2 A)^{-1} (I + D/2 A), B_bar = (I - D/2 A)^{-1} D B.
DiscreteSsm discretize(const SsmParams& params);

// Re(c . h), doubled when conj_pairs.
double readout(const CVector& c, std::span<const cplx> h, bool conj_pairs);

// One recurrence step in place; returns y_t. Throws DivergenceError (tagged
// with `step_index`) if the state or output stops being finite.
double step_inplace(const DiscreteSsm& ds, RecurrentState& state, double x, std::size_t step_index = 0,
                    std::string_view layer = {});
std::pair<RecurrentState, double> step(const DiscreteSsm& ds, const RecurrentState& state, double x);

// taps[i] = Re(C_bar A_bar^i B_bar) (doubled when conj_pairs).
Kernel materialize_kernel(const DiscreteSsm& ds, std::size_t length, bool conj_pairs);
// Same propagation, also returning the state sequence v_i = A_bar^i B_bar.
Kernel materialize_kernel(const DiscreteSsm& ds, std::size_t length, bool conj_pairs, std::vector<CVector>* states);

// y_t = sum_{i<=t} taps[i] x_{t-i} + d x_t.
std::vector<double> causal_conv(const Kernel& kernel, double d, std::span<const double> x);

// Recurrent full pass from the zero state.
std::vector<double> scan(const SsmParams& params, std::span<const double> x);
// Convolution-mode full pass.
std::vector<double> conv_apply(const SsmParams& params, std::span<const double> x);

// Position-wise linear map applied after concatenating the two directions.
struct PositionwiseLinear {
  Tensor weight;  // [2H, H]
  Tensor bias;    // [H]
};

// y = Linear(Concat(S4(x), rev(S4(rev(x))))), x: [T, H], one SSM per channel.
Tensor bidirectional_apply(std::span<const SsmParams> fwd, std::span<const SsmParams> bwd, const PositionwiseLinear& w,
                           const Tensor& x);

struct StabilityReport {
  bool hurwitz_by_construction = false;
  double spectral_radius_abar = 0.0;
  bool spectral_radius_converged = false;
  double max_re_lambda = 0.0;
};

StabilityReport stability_report(const SsmParams& params);

}  // namespace sashimi::ssm
