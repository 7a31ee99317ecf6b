#include "sashimi/ssm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sashimi/nn_kernels.hpp"

namespace sashimi::ssm {

std::string_view mode_name(Mode m) {
  switch (m) {
    case Mode::untied: return "untied";
    case Mode::tied: return "tied";
    case Mode::tied_exp: return "tied_exp";
  }
  return "?";
}

Mode parse_mode(std::string_view name) {
  if (name == "untied") return Mode::untied;
  if (name == "tied") return Mode::tied;
  if (name == "tied_exp") return Mode::tied_exp;
  throw std::invalid_argument("unknown SSM mode '" + std::string(name) + "' (expected untied, tied or tied_exp)");
}

DivergenceError::DivergenceError(std::size_t step, std::string layer)
    : std::runtime_error("recurrent state diverged at step " + std::to_string(step) +
                         (layer.empty() ? std::string() : " in layer " + layer)),
      step_(step),
      layer_(std::move(layer)) {}

double lambda_real(Mode mode, double raw) {
  if (mode == Mode::tied_exp) return -std::max(std::exp(raw), kMinDecay);
  return raw;
}

double lambda_real_grad(Mode mode, double raw) {
  if (mode == Mode::tied_exp) {
    const double e = std::exp(raw);
    return e > kMinDecay ? -e : 0.0;
  }
  return 1.0;
}

CVector SsmParams::lambda() const {
  CVector out(state_size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = cplx(lambda_real(mode, lambda_re_raw[i]), lambda_im[i]);
  return out;
}

void SsmParams::validate() const {
  const std::size_t n = state_size();
  if (n == 0) throw std::invalid_argument("SSM state size must be positive");
  if (lambda_re_raw.size() != n) throw std::invalid_argument("lambda real/imag parts differ in length");
  if (p.rows() != n) throw std::invalid_argument("p must have one row per state");
  if (mode == Mode::untied && (q.rows() != n || q.cols() != p.cols())) {
    throw std::invalid_argument("untied SSM needs q with the same shape as p");
  }
  if (b.size() != n || c.size() != n) throw std::invalid_argument("B and C must have one entry per state");
  if (!(delta > 0.0)) throw std::invalid_argument("step size delta must be positive");
}

CMatrix materialize_a(const SsmParams& params) {
  params.validate();
  const std::size_t n = params.state_size();
  const CVector lam = params.lambda();
  const bool tied = params.mode != Mode::untied;
  const CMatrix& right = tied ? params.p : params.q;
  const double sign = tied ? -1.0 : 1.0;
  CMatrix a(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      cplx lr{};
      for (std::size_t r = 0; r < params.p.cols(); ++r) lr += params.p(i, r) * std::conj(right(j, r));
      a(i, j) = sign * lr;
    }
    a(i, i) += lam[i];
  }
  return a;
}

DiscreteSsm discretize(const SsmParams& params) {
  const CMatrix a = materialize_a(params);
  const std::size_t n = a.rows();
  const double half = 0.5 * params.delta;
  CMatrix lhs = CMatrix::identity(n) - cplx(half) * a;
  CMatrix rhs(n, n + 1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) rhs(i, j) = (i == j ? 1.0 : 0.0) + half * a(i, j);
    rhs(i, n) = params.delta * params.b[i];
  }
  const CMatrix sol = lu_solve(lhs, rhs);
  DiscreteSsm ds;
  ds.a_bar = CMatrix(n, n);
  ds.b_bar.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) ds.a_bar(i, j) = sol(i, j);
    ds.b_bar[i] = sol(i, n);
  }
  ds.c_bar = params.c;
  ds.d_bar = params.d;
  ds.conj_pairs = params.conj_pairs;
  return ds;
}

double readout(const CVector& c, std::span<const cplx> h, bool conj_pairs) {
  double acc = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) acc += c[i].real() * h[i].real() - c[i].imag() * h[i].imag();
  return conj_pairs ? 2.0 * acc : acc;
}

double step_inplace(const DiscreteSsm& ds, RecurrentState& state, double x, std::size_t step_index,
                    std::string_view layer) {
  const std::size_t n = ds.state_size();
  if (state.h.size() != n) throw std::invalid_argument("recurrent state has the wrong dimension");
  thread_local CVector next;
  next.resize(n);
  matvec_into(ds.a_bar, state.h, next);
  bool finite = true;
  for (std::size_t i = 0; i < n; ++i) {
    next[i] += ds.b_bar[i] * x;
    finite = finite && std::isfinite(next[i].real()) && std::isfinite(next[i].imag());
  }
  state.h.swap(next);
  const double y = readout(ds.c_bar, state.h, ds.conj_pairs) + ds.d_bar * x;
  if (!finite || !std::isfinite(y)) throw DivergenceError(step_index, std::string(layer));
  return y;
}

std::pair<RecurrentState, double> step(const DiscreteSsm& ds, const RecurrentState& state, double x) {
  RecurrentState next = state;
  const double y = step_inplace(ds, next, x);
  return {std::move(next), y};
}

Kernel materialize_kernel(const DiscreteSsm& ds, std::size_t length, bool conj_pairs, std::vector<CVector>* states) {
  if (length == 0) throw std::invalid_argument("kernel length must be at least 1");
  const std::size_t n = ds.state_size();
  Kernel k;
  k.taps.resize(length);
  CVector v = ds.b_bar;
  CVector next(n);
  if (states) {
    states->clear();
    states->reserve(length);
  }
  for (std::size_t i = 0; i < length; ++i) {
    k.taps[i] = readout(ds.c_bar, v, conj_pairs);
    if (states) states->push_back(v);
    if (i + 1 < length) {
      matvec_into(ds.a_bar, v, next);
      v.swap(next);
    }
  }
  return k;
}

Kernel materialize_kernel(const DiscreteSsm& ds, std::size_t length, bool conj_pairs) {
  return materialize_kernel(ds, length, conj_pairs, nullptr);
}

std::vector<double> causal_conv(const Kernel& kernel, double d, std::span<const double> x) {
  const std::size_t t_len = x.size();
  if (kernel.length() < t_len) {
    throw std::invalid_argument("kernel of length " + std::to_string(kernel.length()) + " is shorter than the " +
                                std::to_string(t_len) + "-step input");
  }
  std::vector<double> y(t_len);
  for (std::size_t t = 0; t < t_len; ++t) {
    double acc = 0.0;
    for (std::size_t i = 0; i <= t; ++i) acc += kernel.taps[i] * x[t - i];
    y[t] = acc + d * x[t];
  }
  return y;
}

std::vector<double> scan(const SsmParams& params, std::span<const double> x) {
  const DiscreteSsm ds = discretize(params);
  RecurrentState state = RecurrentState::zeros(ds.state_size());
  std::vector<double> y(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) y[t] = step_inplace(ds, state, x[t], t);
  return y;
}

std::vector<double> conv_apply(const SsmParams& params, std::span<const double> x) {
  if (x.empty()) return {};
  const DiscreteSsm ds = discretize(params);
  return causal_conv(materialize_kernel(ds, x.size(), params.conj_pairs), params.d, x);
}

Tensor bidirectional_apply(std::span<const SsmParams> fwd, std::span<const SsmParams> bwd, const PositionwiseLinear& w,
                           const Tensor& x) {
  if (x.rank() != 2) throw std::invalid_argument("bidirectional_apply expects a [T, H] input");
  const std::size_t t_len = x.dim(0), h = x.dim(1);
  if (fwd.size() != h || bwd.size() != h) throw std::invalid_argument("need one forward and one backward SSM per channel");
  if (w.weight.rank() != 2 || w.weight.dim(0) != 2 * h || w.weight.dim(1) != h || w.bias.numel() != h) {
    throw std::invalid_argument("bidirectional linear map must be [2H, H] with an H bias");
  }
  Tensor both({t_len, 2 * h});
  std::vector<double> col(t_len);
  for (std::size_t c = 0; c < h; ++c) {
    for (std::size_t t = 0; t < t_len; ++t) col[t] = x.at(t, c);
    const auto yf = conv_apply(fwd[c], col);
    std::reverse(col.begin(), col.end());
    const auto yb = conv_apply(bwd[c], col);
    for (std::size_t t = 0; t < t_len; ++t) {
      both.at(t, c) = yf[t];
      both.at(t, h + c) = yb[t_len - 1 - t];
    }
  }
  Tensor out({t_len, h});
  for (std::size_t t = 0; t < t_len; ++t) kernels::linear_row(both.row(t), w.weight.data(), w.bias.data(), out.row(t));
  return out;
}

StabilityReport stability_report(const SsmParams& params) {
  StabilityReport rep;
  const CVector lam = params.lambda();
  rep.max_re_lambda = -std::numeric_limits<double>::infinity();
  for (const auto& l : lam) rep.max_re_lambda = std::max(rep.max_re_lambda, l.real());
  rep.hurwitz_by_construction = params.mode != Mode::untied && rep.max_re_lambda < 0.0;
  const DiscreteSsm ds = discretize(params);
  Rng rng(0x5eed5eedull);
  const SpectralRadius sr = spectral_radius(ds.a_bar, 5000, rng);
  rep.spectral_radius_abar = sr.value;
  rep.spectral_radius_converged = sr.converged;
  return rep;
}

}  // namespace sashimi::ssm
