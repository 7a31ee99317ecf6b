#include "sashimi/step.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sashimi/nn_kernels.hpp"

namespace sashimi::model {

bool GenState::operator==(const GenState& other) const {
  if (steps != other.steps || pools != other.pools || ssm.size() != other.ssm.size()) return false;
  for (std::size_t s = 0; s < ssm.size(); ++s) {
    if (ssm[s].size() != other.ssm[s].size()) return false;
    for (std::size_t c = 0; c < ssm[s].size(); ++c) {
      if (ssm[s][c].h != other.ssm[s][c].h) return false;
    }
  }
  return true;
}

double GenState::max_state_norm(std::size_t slot) const {
  double m = 0.0;
  for (const auto& st : ssm.at(slot)) m = std::max(m, st.norm());
  return m;
}

StepPlan compile_step_plan(const SashimiModel& model) {
  if (!model.config().causal()) throw std::logic_error("recurrent stepping requires a causal model");
  StepPlan plan;
  plan.model = &model;
  for (const auto& idx : model.ssm_layers()) {
    const ssm::LayerTensors lt = model.layer_tensors(idx);
    std::vector<ssm::DiscreteSsm> chans;
    for (std::size_t c = 0; c < lt.channels(); ++c) chans.push_back(ssm::discretize(ssm::channel_params(lt, c)));
    plan.ssm.push_back(std::move(chans));
  }
  return plan;
}

GenState init_gen_state(const SashimiModel& model) {
  if (!model.config().causal()) throw std::logic_error("recurrent stepping requires a causal model");
  GenState gs;
  for (const auto& idx : model.ssm_layers()) {
    const std::size_t channels = model.params()[idx.d].value.numel();
    gs.ssm.emplace_back(channels, ssm::RecurrentState::zeros(model.config().state_size));
  }
  const std::size_t p = model.config().pool;
  for (const auto& tier : model.tiers()) {
    if (!tier.has_pool) continue;
    PoolBuffers pb;
    pb.down.assign(p * tier.width, 0.0);
    pb.up.assign(p * tier.width, 0.0);
    gs.pools.push_back(std::move(pb));
  }
  return gs;
}

namespace {

struct Stepper {
  const StepPlan& plan;
  const SashimiModel& model;
  GenState& gs;
  std::size_t step;

  std::span<const double> p(std::size_t i) const { return model.params()[i].value.data(); }

  void s4_block(const BlockConfig& bc, const S4BlockIndex& idx, std::vector<double>& x) {
    const std::size_t h = x.size();
    std::vector<double> xhat(h), y(h);
    kernels::layer_norm_row(x, p(idx.ln_g), p(idx.ln_b), xhat, y);
    const std::size_t slot = idx.fwd.slot;
    for (std::size_t c = 0; c < h; ++c) {
      y[c] = ssm::step_inplace(plan.ssm[slot][c], gs.ssm[slot][c], y[c], step, idx.fwd.name);
    }
    if (bc.nonlinearity == Nonlinearity::glu) {
      std::vector<double> z(2 * h);
      kernels::linear_row(y, p(idx.w), p(idx.b), z);
      for (std::size_t c = 0; c < h; ++c) x[c] += z[c] * kernels::sigmoid(z[h + c]);
    } else {
      for (auto& v : y) v = kernels::gelu(v);
      std::vector<double> z(h);
      kernels::linear_row(y, p(idx.w), p(idx.b), z);
      for (std::size_t c = 0; c < h; ++c) x[c] += z[c];
    }
  }

  void ffn_block(const FfnBlockIndex& idx, std::vector<double>& x) {
    const std::size_t h = x.size();
    const std::size_t hidden = model.params()[idx.b1].value.numel();
    std::vector<double> xhat(h), y(h), mid(hidden), out(h);
    kernels::layer_norm_row(x, p(idx.ln_g), p(idx.ln_b), xhat, y);
    kernels::linear_row(y, p(idx.w1), p(idx.b1), mid);
    for (auto& v : mid) v = kernels::gelu(v);
    kernels::linear_row(mid, p(idx.w2), p(idx.b2), out);
    for (std::size_t c = 0; c < h; ++c) x[c] += out[c];
  }

  void stack(std::size_t tier, const std::vector<ResidualLayer>& layers, std::vector<double>& x) {
    const BlockConfig bc = model.block_config(tier);
    for (const auto& layer : layers) {
      s4_block(bc, layer.s4, x);
      ffn_block(layer.ffn, x);
    }
  }

  std::vector<double> tier(std::size_t k, std::vector<double> x) {
    const Tier& t = model.tiers()[k];
    stack(k, t.down, x);
    if (!t.has_pool) return x;
    const std::size_t w = t.width;
    const std::size_t pool = model.config().pool;
    PoolBuffers& pb = gs.pools[k];
    std::vector<double> pending(pb.up.begin() + pb.phase * w, pb.up.begin() + (pb.phase + 1) * w);
    std::copy(x.begin(), x.end(), pb.down.begin() + pb.phase * w);
    if (++pb.phase == pool) {
      pb.phase = 0;
      std::vector<double> z(model.params()[t.down_b].value.numel());
      kernels::linear_row(pb.down, p(t.down_w), p(t.down_b), z);
      const std::vector<double> below = tier(k + 1, std::move(z));
      kernels::linear_row(below, p(t.up_w), p(t.up_b), pb.up);
    }
    for (std::size_t c = 0; c < w; ++c) x[c] = pending[c] + x[c];
    stack(k, t.up, x);
    return x;
  }
};

}  // namespace

std::vector<double> sashimi_step(const StepPlan& plan, GenState& gs, std::uint8_t token) {
  const SashimiModel& model = *plan.model;
  const Tensor& table = model.params()[model.embed()].value;
  if (token >= table.dim(0)) throw std::out_of_range("token outside the vocabulary");
  std::vector<double> x(table.row(token).begin(), table.row(token).end());
  Stepper st{plan, model, gs, gs.steps};
  x = st.tier(0, std::move(x));
  std::vector<double> logits(model.config().vocab);
  kernels::linear_row(x, model.params()[model.head_w()].value.data(), model.params()[model.head_b()].value.data(),
                      logits);
  for (double v : logits) {
    if (!std::isfinite(v)) throw ssm::DivergenceError(gs.steps, "head");
  }
  ++gs.steps;
  return logits;
}

}  // namespace sashimi::model
