#include "sashimi/model.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

#include "sashimi/hippo.hpp"

namespace sashimi::model {

std::string_view nonlinearity_name(Nonlinearity n) { return n == Nonlinearity::gelu ? "gelu" : "glu"; }

Nonlinearity parse_nonlinearity(std::string_view s) {
  if (s == "gelu") return Nonlinearity::gelu;
  if (s == "glu") return Nonlinearity::glu;
  throw std::invalid_argument("unknown nonlinearity '" + std::string(s) + "' (expected gelu or glu)");
}

std::string_view tying_name(LambdaTying t) { return t == LambdaTying::shared ? "shared" : "per_channel"; }

LambdaTying parse_tying(std::string_view s) {
  if (s == "shared") return LambdaTying::shared;
  if (s == "per_channel") return LambdaTying::per_channel;
  throw std::invalid_argument("unknown lambda tying '" + std::string(s) + "' (expected shared or per_channel)");
}

std::size_t ModelConfig::length_multiple() const {
  std::size_t m = 1;
  for (std::size_t k = 1; k < n_tiers; ++k) m *= pool;
  return m;
}

std::size_t ModelConfig::tier_width(std::size_t tier) const {
  std::size_t w = d_model;
  for (std::size_t k = 0; k < tier; ++k) w *= expand;
  return w;
}

void ModelConfig::validate() const {
  if (d_model < 1) throw std::invalid_argument("d_model must be at least 1");
  if (n_tiers < 1) throw std::invalid_argument("n_tiers must be at least 1");
  if (n_tiers > 1) PoolConfig{pool, expand}.validate();
  if (ffn_expand < 1) throw std::invalid_argument("ffn_expand must be at least 1");
  if (state_size < 1) throw std::invalid_argument("state_size must be at least 1");
  if (vocab < 2) throw std::invalid_argument("vocab must be at least 2");
  if (!(dt_min > 0.0 && dt_max >= dt_min)) throw std::invalid_argument("need 0 < dt_min <= dt_max");
}

void PoolConfig::validate() const {
  if (p < 2) throw std::invalid_argument("pooling factor must be at least 2");
  if (q < 1) throw std::invalid_argument("expansion factor must be at least 1");
}

namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = (2.0 * rng.uniform() - 1.0) * bound;
  return t;
}

// LegS transform of size 2N; the N states with positive imaginary part are
// kept and their conjugates are accounted for by doubling the readout.
struct HalfSpectrum {
  CVector lambda;
  CVector p;
};

HalfSpectrum legs_half_spectrum(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, HalfSpectrum> cache;
  std::lock_guard lock(mu);
  if (auto it = cache.find(n); it != cache.end()) return it->second;
  const hippo::HippoSpec spec{hippo::Family::legs, 2 * n, std::nullopt};
  const hippo::DplrTransform t = hippo::dplr_from_nplr(hippo::nplr_decompose(spec));
  HalfSpectrum hs;
  for (std::size_t k = n; k < 2 * n; ++k) {
    hs.lambda.push_back(t.lambda[k]);
    hs.p.push_back(t.p_tilde(k, 0));
  }
  cache.emplace(n, hs);
  return hs;
}

}  // namespace

std::size_t SashimiModel::add_param(std::string name, Tensor value, ParamRole role) {
  for (const auto& p : params_) {
    if (p.name == name) throw std::logic_error("duplicate parameter " + name);
  }
  params_.push_back(Param{std::move(name), std::move(value), role});
  return params_.size() - 1;
}

std::size_t SashimiModel::add_linear_weight(const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  return add_param(name, uniform_tensor({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng), ParamRole::weight);
}

std::size_t SashimiModel::add_linear_bias(const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  return add_param(name, uniform_tensor({out}, 1.0 / std::sqrt(static_cast<double>(in)), rng), ParamRole::weight);
}

SsmLayerIndex SashimiModel::add_ssm(const std::string& prefix, std::size_t width, Rng& rng) {
  const std::size_t n = cfg_.state_size;
  const HalfSpectrum hs = legs_half_spectrum(n);
  const std::size_t groups = cfg_.lambda_tying == LambdaTying::shared ? 1 : width;

  Tensor lre({groups, n}), lim({groups, n});
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t i = 0; i < n; ++i) {
      const double re = hs.lambda[i].real();
      lre.at(g, i) = cfg_.ssm_mode == ssm::Mode::tied_exp ? std::log(-re) : re;
      lim.at(g, i) = hs.lambda[i].imag();
    }
  }
  Tensor p({n, 1, 2}), b({n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    p[2 * i] = hs.p[i].real();
    p[2 * i + 1] = hs.p[i].imag();
    b[2 * i] = 1.0;
  }
  Tensor c({width, n, 2});
  const double c_scale = std::sqrt(0.5 / static_cast<double>(n));
  for (auto& v : c.data()) v = rng.normal() * c_scale;
  Tensor d({width});
  for (auto& v : d.data()) v = 1.0;
  Tensor log_dt({width});
  for (std::size_t h = 0; h < width; ++h) {
    const double frac = width == 1 ? 0.5 : static_cast<double>(h) / static_cast<double>(width - 1);
    log_dt[h] = std::log(cfg_.dt_min) + frac * (std::log(cfg_.dt_max) - std::log(cfg_.dt_min));
  }

  SsmLayerIndex idx;
  idx.name = prefix;
  idx.lambda_re_raw = add_param(prefix + ".lambda_re_raw", std::move(lre), ParamRole::ssm_lambda);
  idx.lambda_im = add_param(prefix + ".lambda_im", std::move(lim), ParamRole::ssm_lambda);
  if (cfg_.ssm_mode == ssm::Mode::untied) {
    Tensor q = p;
    for (auto& v : q.data()) v = -v;
    idx.q = add_param(prefix + ".q", std::move(q), ParamRole::ssm_frozen);
  }
  idx.p = add_param(prefix + ".p", std::move(p), ParamRole::ssm_frozen);
  idx.b = add_param(prefix + ".b", std::move(b), ParamRole::ssm_frozen);
  idx.c = add_param(prefix + ".c", std::move(c), ParamRole::ssm_c);
  idx.d = add_param(prefix + ".d", std::move(d), ParamRole::ssm_d);
  idx.log_delta = add_param(prefix + ".log_delta", std::move(log_dt), ParamRole::ssm_frozen);
  idx.slot = ssm_layers_.size();
  ssm_layers_.push_back(idx);
  return idx;
}

ResidualLayer SashimiModel::add_layer(const std::string& prefix, std::size_t width, Rng& rng) {
  ResidualLayer layer;
  layer.name = prefix;
  const std::size_t h = width;
  S4BlockIndex& s4 = layer.s4;
  Tensor ones({h});
  for (auto& v : ones.data()) v = 1.0;
  s4.ln_g = add_param(prefix + ".s4.ln_g", ones, ParamRole::weight);
  s4.ln_b = add_param(prefix + ".s4.ln_b", Tensor({h}), ParamRole::weight);
  s4.fwd = add_ssm(prefix + ".s4.ssm", h, rng);
  if (cfg_.bidirectional) {
    s4.bwd = add_ssm(prefix + ".s4.ssm_bwd", h, rng);
    s4.bi_w = add_linear_weight(prefix + ".s4.bi_w", 2 * h, h, rng);
    s4.bi_b = add_linear_bias(prefix + ".s4.bi_b", 2 * h, h, rng);
  }
  const std::size_t out = cfg_.nonlinearity == Nonlinearity::glu ? 2 * h : h;
  s4.w = add_linear_weight(prefix + ".s4.w", h, out, rng);
  s4.b = add_linear_bias(prefix + ".s4.b", h, out, rng);

  FfnBlockIndex& f = layer.ffn;
  const std::size_t hidden = cfg_.ffn_expand * h;
  f.ln_g = add_param(prefix + ".ffn.ln_g", ones, ParamRole::weight);
  f.ln_b = add_param(prefix + ".ffn.ln_b", Tensor({h}), ParamRole::weight);
  f.w1 = add_linear_weight(prefix + ".ffn.w1", h, hidden, rng);
  f.b1 = add_linear_bias(prefix + ".ffn.b1", h, hidden, rng);
  f.w2 = add_linear_weight(prefix + ".ffn.w2", hidden, h, rng);
  f.b2 = add_linear_bias(prefix + ".ffn.b2", hidden, h, rng);
  return layer;
}

SashimiModel::SashimiModel(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  Tensor table({cfg_.vocab, cfg_.d_model});
  for (auto& v : table.data()) v = rng.normal();
  embed_ = add_param("embed", std::move(table), ParamRole::weight);

  tiers_.resize(cfg_.n_tiers);
  const std::size_t p = cfg_.pool, q = cfg_.expand;
  for (std::size_t k = 0; k < cfg_.n_tiers; ++k) {
    Tier& tier = tiers_[k];
    tier.width = cfg_.tier_width(k);
    const std::string tp = "t" + std::to_string(k);
    tier.has_pool = k + 1 < cfg_.n_tiers;
    const std::size_t n_down = tier.has_pool ? cfg_.down_layers : cfg_.center_layers;
    const std::string stack = tier.has_pool ? ".down." : ".center.";
    for (std::size_t i = 0; i < n_down; ++i) tier.down.push_back(add_layer(tp + stack + std::to_string(i), tier.width, rng));
    if (tier.has_pool) {
      const std::size_t w = tier.width;
      tier.down_w = add_linear_weight(tp + ".pool.down_w", p * w, q * w, rng);
      tier.down_b = add_linear_bias(tp + ".pool.down_b", p * w, q * w, rng);
      tier.up_w = add_linear_weight(tp + ".pool.up_w", q * w, p * w, rng);
      tier.up_b = add_linear_bias(tp + ".pool.up_b", q * w, p * w, rng);
    }
  }
  for (std::size_t k = cfg_.n_tiers; k-- > 0;) {
    Tier& tier = tiers_[k];
    if (!tier.has_pool) continue;
    for (std::size_t i = 0; i < cfg_.up_layers; ++i) {
      tier.up.push_back(add_layer("t" + std::to_string(k) + ".up." + std::to_string(i), tier.width, rng));
    }
  }
  head_w_ = add_linear_weight("head_w", cfg_.d_model, cfg_.vocab, rng);
  head_b_ = add_linear_bias("head_b", cfg_.d_model, cfg_.vocab, rng);
}

std::size_t SashimiModel::find(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  throw std::out_of_range("no parameter named '" + std::string(name) + "'");
}

std::size_t SashimiModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

BlockConfig SashimiModel::block_config(std::size_t tier) const {
  return BlockConfig{cfg_.tier_width(tier), cfg_.ffn_expand, cfg_.nonlinearity, cfg_.ssm_mode, true,
                     cfg_.bidirectional};
}

ssm::LayerTensors SashimiModel::layer_tensors(const SsmLayerIndex& idx) const {
  return ssm::LayerTensors{&params_[idx.lambda_re_raw].value,
                           &params_[idx.lambda_im].value,
                           &params_[idx.p].value,
                           idx.q == kNone ? nullptr : &params_[idx.q].value,
                           &params_[idx.b].value,
                           &params_[idx.c].value,
                           &params_[idx.d].value,
                           &params_[idx.log_delta].value,
                           cfg_.ssm_mode,
                           true};
}

// ---- differentiable blocks ----

ad::Var s4_block_forward(const BlockConfig& cfg, const S4BlockVars& v, ad::Var x) {
  ad::Var y = ad::layer_norm(x, v.ln_g, v.ln_b);
  if (cfg.bidirectional) {
    if (!v.bwd) throw std::invalid_argument("bidirectional block without a backward SSM");
    ad::Var fwd = ssm::ssm_conv(y, v.fwd, cfg.mode, cfg.conj_pairs);
    ad::Var bwd = ad::reverse_rows(ssm::ssm_conv(ad::reverse_rows(y), *v.bwd, cfg.mode, cfg.conj_pairs));
    y = ad::linear(ad::concat_cols(fwd, bwd), v.bi_w, v.bi_b);
  } else {
    y = ssm::ssm_conv(y, v.fwd, cfg.mode, cfg.conj_pairs);
  }
  if (cfg.nonlinearity == Nonlinearity::glu) {
    y = ad::glu(ad::linear(y, v.w, v.b));
  } else {
    y = ad::linear(ad::gelu(y), v.w, v.b);
  }
  return ad::add(x, y);
}

ad::Var ffn_block_forward(const BlockConfig&, const FfnBlockVars& v, ad::Var x) {
  ad::Var y = ad::layer_norm(x, v.ln_g, v.ln_b);
  y = ad::linear(y, v.w1, v.b1);
  y = ad::gelu(y);
  y = ad::linear(y, v.w2, v.b2);
  return ad::add(x, y);
}

ad::Var down_pool(ad::Var x, const PoolConfig& cfg, ad::Var w, ad::Var b) {
  cfg.validate();
  const Shape& s = x.shape();
  if (s.size() != 2) throw std::invalid_argument("down_pool expects [T, H]");
  const std::size_t t_len = s[0], h = s[1];
  if (t_len % cfg.p != 0) {
    throw std::invalid_argument("down_pool: length " + std::to_string(t_len) + " is not divisible by pooling factor " +
                                std::to_string(cfg.p));
  }
  ad::Var r = ad::reshape(x, {t_len / cfg.p, cfg.p * h});
  return ad::linear(r, w, b);
}

ad::Var up_pool(ad::Var x, const PoolConfig& cfg, ad::Var w, ad::Var b, bool causal) {
  cfg.validate();
  const Shape& s = x.shape();
  if (s.size() != 2) throw std::invalid_argument("up_pool expects [T, H]");
  const std::size_t low = s[0], width = s[1];
  if (width % cfg.q != 0) throw std::invalid_argument("up_pool: width not divisible by expansion factor");
  const std::size_t h = width / cfg.q;
  ad::Var y = ad::linear(x, w, b);
  y = ad::reshape(y, {low * cfg.p, h});
  if (causal) y = ad::shift_rows(y, cfg.p);
  return y;
}

std::vector<ad::Var> bind_params(const SashimiModel& model, ad::Tape& tape, const std::vector<bool>& trainable) {
  const auto& ps = model.params();
  if (trainable.size() != ps.size()) throw std::invalid_argument("trainable mask size mismatch");
  std::vector<ad::Var> out;
  out.reserve(ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) {
    Tensor t = ps[i].value;
    t.set_requires_grad(trainable[i]);
    out.push_back(tape.leaf(std::move(t)));
  }
  return out;
}

std::vector<ad::Var> bind_constants(const SashimiModel& model, ad::Tape& tape) {
  return bind_params(model, tape, std::vector<bool>(model.params().size(), false));
}

namespace {

ssm::LayerVars layer_vars(const SsmLayerIndex& idx, const std::vector<ad::Var>& pv) {
  ssm::LayerVars v;
  v.lambda_re_raw = pv[idx.lambda_re_raw];
  v.lambda_im = pv[idx.lambda_im];
  v.p = pv[idx.p];
  if (idx.q != kNone) v.q = pv[idx.q];
  v.b = pv[idx.b];
  v.c = pv[idx.c];
  v.d = pv[idx.d];
  v.log_delta = pv[idx.log_delta];
  return v;
}

}  // namespace

S4BlockVars s4_vars(const SashimiModel&, const S4BlockIndex& idx, const std::vector<ad::Var>& pv) {
  S4BlockVars v;
  v.ln_g = pv[idx.ln_g];
  v.ln_b = pv[idx.ln_b];
  v.fwd = layer_vars(idx.fwd, pv);
  if (idx.bwd) {
    v.bwd = layer_vars(*idx.bwd, pv);
    v.bi_w = pv[idx.bi_w];
    v.bi_b = pv[idx.bi_b];
  }
  v.w = pv[idx.w];
  v.b = pv[idx.b];
  return v;
}

FfnBlockVars ffn_vars(const FfnBlockIndex& idx, const std::vector<ad::Var>& pv) {
  return FfnBlockVars{pv[idx.ln_g], pv[idx.ln_b], pv[idx.w1], pv[idx.b1], pv[idx.w2], pv[idx.b2]};
}

namespace {

ad::Var run_stack(const SashimiModel& model, std::size_t tier, const std::vector<ResidualLayer>& stack,
                  const std::vector<ad::Var>& pv, ad::Var x) {
  const BlockConfig bc = model.block_config(tier);
  for (const auto& layer : stack) {
    x = s4_block_forward(bc, s4_vars(model, layer.s4, pv), x);
    x = ffn_block_forward(bc, ffn_vars(layer.ffn, pv), x);
  }
  return x;
}

ad::Var run_tier(const SashimiModel& model, std::size_t k, const std::vector<ad::Var>& pv, ad::Var x) {
  const Tier& tier = model.tiers()[k];
  x = run_stack(model, k, tier.down, pv, x);
  if (!tier.has_pool) return x;
  const PoolConfig pc = model.pool_config();
  ad::Var skip = x;
  ad::Var z = down_pool(x, pc, pv[tier.down_w], pv[tier.down_b]);
  z = run_tier(model, k + 1, pv, z);
  ad::Var u = up_pool(z, pc, pv[tier.up_w], pv[tier.up_b], model.config().causal());
  x = ad::add(u, skip);
  return run_stack(model, k, tier.up, pv, x);
}

}  // namespace

ad::Var sashimi_forward(const SashimiModel& model, const std::vector<ad::Var>& pv,
                        std::span<const std::uint8_t> tokens) {
  const std::size_t m = model.config().length_multiple();
  if (tokens.empty() || tokens.size() % m != 0) {
    throw std::invalid_argument("sequence length " + std::to_string(tokens.size()) + " must be a positive multiple of " +
                                std::to_string(m));
  }
  ad::Var x = ad::embedding(pv[model.embed()], tokens);
  x = run_tier(model, 0, pv, x);
  return ad::linear(x, pv[model.head_w()], pv[model.head_b()]);
}

Tensor sashimi_forward(const SashimiModel& model, std::span<const std::uint8_t> tokens) {
  ad::Tape tape;
  const auto pv = bind_constants(model, tape);
  return sashimi_forward(model, pv, tokens).value();
}

}  // namespace sashimi::model
