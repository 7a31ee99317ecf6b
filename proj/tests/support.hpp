#pragma once

// Random parameter generators shared by the unit tests and the acceptance run.

#include <cmath>

#include "sashimi/model.hpp"
#include "sashimi/rng.hpp"
#include "sashimi/ssm.hpp"

namespace sashimi::testing {

inline cplx complex_normal(Rng& rng, double scale = 1.0) { return cplx(rng.normal(), rng.normal()) * scale; }

// Stable by construction in the tied modes. Untied draws keep |p q^*| small
// next to the smallest decay so the spectrum stays in the left half-plane.
inline ssm::SsmParams random_ssm(ssm::Mode mode, std::size_t n, Rng& rng, bool conj_pairs = false) {
  ssm::SsmParams sp;
  sp.mode = mode;
  sp.conj_pairs = conj_pairs;
  const double p_scale = mode == ssm::Mode::untied ? 0.02 / std::sqrt(static_cast<double>(n)) : 0.5;
  sp.p = CMatrix(n, 1);
  sp.q = CMatrix(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double decay = 0.1 + 0.9 * rng.uniform();
    sp.lambda_re_raw.push_back(mode == ssm::Mode::tied_exp ? std::log(decay) : -decay);
    sp.lambda_im.push_back(10.0 * (rng.uniform() - 0.5));
    sp.p(i, 0) = complex_normal(rng, p_scale);
    sp.q(i, 0) = complex_normal(rng, p_scale);
    sp.b.push_back(complex_normal(rng));
    sp.c.push_back(complex_normal(rng, 1.0 / std::sqrt(static_cast<double>(n))));
  }
  sp.d = rng.normal();
  sp.delta = std::exp(std::log(1e-3) + rng.uniform() * (std::log(1e-1) - std::log(1e-3)));
  return sp;
}

inline std::vector<double> normal_sequence(std::size_t t, Rng& rng) {
  std::vector<double> x(t);
  for (auto& v : x) v = rng.normal();
  return x;
}

inline model::ModelConfig tiny_config() {
  model::ModelConfig c;
  c.d_model = 8;
  c.n_tiers = 3;
  c.pool = 4;
  c.expand = 2;
  c.down_layers = 1;
  c.up_layers = 1;
  c.center_layers = 1;
  c.state_size = 4;
  return c;
}

inline std::vector<std::uint8_t> random_tokens(std::size_t t, Rng& rng) {
  std::vector<std::uint8_t> x(t);
  for (auto& v : x) v = static_cast<std::uint8_t>(rng.below(256));
  return x;
}

// Untied model whose first SSM has diagonal A with eigenvalues +rate + i*im:
// the bilinear map sends them outside the unit disk.
inline model::SashimiModel crafted_unstable_model(Rng& rng, double rate = 1.0) {
  model::ModelConfig c = tiny_config();
  c.ssm_mode = ssm::Mode::untied;
  model::SashimiModel m(c, rng);
  const auto& idx = m.ssm_layers().front();
  for (auto& v : m.params()[idx.lambda_re_raw].value.data()) v = rate;
  for (auto& v : m.params()[idx.p].value.data()) v = 0.0;
  for (auto& v : m.params()[idx.q].value.data()) v = 0.0;
  for (auto& v : m.params()[idx.log_delta].value.data()) v = std::log(0.1);
  return m;
}

}  // namespace sashimi::testing
