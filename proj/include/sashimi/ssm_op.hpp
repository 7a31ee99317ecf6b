#pragma once

// Multi-channel S4 layer as a differentiable tape op (convolution mode).
//
// Tensor layout for one layer with H channels, N states, low rank r and G
// lambda groups (G == 1 shares lambda across channels, G == H unties it):
//   lambda_re_raw [G, N]   lambda_im [G, N]
//   p [N, r, 2]   q [N, r, 2] (untied only)   b [N, 2]
//   c [H, N, 2]   d [H]   log_delta [H]

#include "sashimi/autodiff.hpp"
#include "sashimi/ssm.hpp"

namespace sashimi::ssm {

struct LayerTensors {
  const Tensor* lambda_re_raw = nullptr;
  const Tensor* lambda_im = nullptr;
  const Tensor* p = nullptr;
  const Tensor* q = nullptr;
  const Tensor* b = nullptr;
  const Tensor* c = nullptr;
  const Tensor* d = nullptr;
  const Tensor* log_delta = nullptr;
  Mode mode = Mode::tied_exp;
  bool conj_pairs = true;

  std::size_t channels() const { return d->numel(); }
};

SsmParams channel_params(const LayerTensors& t, std::size_t channel);

struct LayerVars {
  ad::Var lambda_re_raw, lambda_im, p, q, b, c, d, log_delta;
};

// x: [T, H] -> [T, H]; channel h runs the SSM built by channel_params(., h).
ad::Var ssm_conv(ad::Var x, const LayerVars& vars, Mode mode, bool conj_pairs);

}  // namespace sashimi::ssm
