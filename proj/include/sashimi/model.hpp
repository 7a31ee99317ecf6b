#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sashimi/autodiff.hpp"
#include "sashimi/rng.hpp"
#include "sashimi/ssm.hpp"
#include "sashimi/ssm_op.hpp"

namespace sashimi::model {

inline constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

enum class Nonlinearity { gelu, glu };
enum class LambdaTying { shared, per_channel };

std::string_view nonlinearity_name(Nonlinearity n);
Nonlinearity parse_nonlinearity(std::string_view s);
std::string_view tying_name(LambdaTying t);
LambdaTying parse_tying(std::string_view s);

struct ModelConfig {
  std::size_t d_model = 8;        // width of the top tier
  std::size_t n_tiers = 3;        // 1 gives the isotropic (no pooling) model
  std::size_t pool = 4;           // pooling factor p
  std::size_t expand = 2;         // expansion factor q
  std::size_t down_layers = 1;    // residual layers per tier before each down-pool
  std::size_t up_layers = 1;      // residual layers per tier after each up-pool
  std::size_t center_layers = 1;  // residual layers in the bottom tier
  std::size_t ffn_expand = 2;     // e
  std::size_t state_size = 8;     // stored complex states per SSM
  ssm::Mode ssm_mode = ssm::Mode::tied_exp;
  Nonlinearity nonlinearity = Nonlinearity::gelu;
  LambdaTying lambda_tying = LambdaTying::shared;
  bool bidirectional = false;
  double dt_min = 1e-3;
  double dt_max = 1e-1;
  std::size_t vocab = 256;

  bool causal() const { return !bidirectional; }
  // Sequence lengths must be multiples of pool^(n_tiers - 1).
  std::size_t length_multiple() const;
  std::size_t tier_width(std::size_t tier) const;
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct BlockConfig {
  std::size_t h = 8;
  std::size_t e = 2;
  Nonlinearity nonlinearity = Nonlinearity::gelu;
  ssm::Mode mode = ssm::Mode::tied_exp;
  bool conj_pairs = true;
  bool bidirectional = false;
};

struct PoolConfig {
  std::size_t p = 4;
  std::size_t q = 2;
  void validate() const;
};

// Which tensors an optimizer may touch.
enum class ParamRole { weight, ssm_lambda, ssm_c, ssm_d, ssm_frozen };

struct Param {
  std::string name;
  Tensor value;
  ParamRole role = ParamRole::weight;
};

struct SsmLayerIndex {
  std::string name;
  std::size_t lambda_re_raw = kNone, lambda_im = kNone, p = kNone, q = kNone, b = kNone, c = kNone, d = kNone,
              log_delta = kNone;
  std::size_t slot = kNone;  // position in the model's flat SSM list
};

struct S4BlockIndex {
  std::size_t ln_g = kNone, ln_b = kNone;
  SsmLayerIndex fwd;
  std::optional<SsmLayerIndex> bwd;
  std::size_t bi_w = kNone, bi_b = kNone;
  std::size_t w = kNone, b = kNone;
};

struct FfnBlockIndex {
  std::size_t ln_g = kNone, ln_b = kNone, w1 = kNone, b1 = kNone, w2 = kNone, b2 = kNone;
};

struct ResidualLayer {
  std::string name;
  S4BlockIndex s4;
  FfnBlockIndex ffn;
};

struct Tier {
  std::size_t width = 0;
  std::vector<ResidualLayer> down;  // the only stack in the bottom tier
  bool has_pool = false;
  std::size_t down_w = kNone, down_b = kNone, up_w = kNone, up_b = kNone;
  std::vector<ResidualLayer> up;
};

class SashimiModel {
 public:
  SashimiModel() = default;
  // Structure plus deterministic initialization.
  SashimiModel(const ModelConfig& cfg, Rng& rng);

  const ModelConfig& config() const { return cfg_; }
  const std::vector<Param>& params() const { return params_; }
  std::vector<Param>& params() { return params_; }
  const std::vector<Tier>& tiers() const { return tiers_; }
  const std::vector<SsmLayerIndex>& ssm_layers() const { return ssm_layers_; }
  std::size_t embed() const { return embed_; }
  std::size_t head_w() const { return head_w_; }
  std::size_t head_b() const { return head_b_; }

  std::size_t find(std::string_view name) const;
  Tensor& tensor(std::string_view name) { return params_.at(find(name)).value; }
  const Tensor& tensor(std::string_view name) const { return params_.at(find(name)).value; }

  // Sum of element counts over all declared tensors.
  std::size_t parameter_count() const;

  BlockConfig block_config(std::size_t tier) const;
  PoolConfig pool_config() const { return PoolConfig{cfg_.pool, cfg_.expand}; }
  ssm::LayerTensors layer_tensors(const SsmLayerIndex& idx) const;

 private:
  std::size_t add_param(std::string name, Tensor value, ParamRole role);
  SsmLayerIndex add_ssm(const std::string& prefix, std::size_t width, Rng& rng);
  ResidualLayer add_layer(const std::string& prefix, std::size_t width, Rng& rng);
  std::size_t add_linear_weight(const std::string& name, std::size_t in, std::size_t out, Rng& rng);
  std::size_t add_linear_bias(const std::string& name, std::size_t in, std::size_t out, Rng& rng);
  void index_ssm_layers();

  ModelConfig cfg_;
  std::vector<Param> params_;
  std::vector<Tier> tiers_;
  std::vector<SsmLayerIndex> ssm_layers_;
  std::size_t embed_ = kNone, head_w_ = kNone, head_b_ = kNone;
};

// ---- Differentiable building blocks ----

struct S4BlockVars {
  ad::Var ln_g, ln_b;
  ssm::LayerVars fwd;
  std::optional<ssm::LayerVars> bwd;
  ad::Var bi_w, bi_b;
  ad::Var w, b;
};

struct FfnBlockVars {
  ad::Var ln_g, ln_b, w1, b1, w2, b2;
};

// y = x + W phi(S4(LayerNorm(x))) + b; with GLU the linear map widens to 2H
// and the gate brings it back to H.
ad::Var s4_block_forward(const BlockConfig& cfg, const S4BlockVars& v, ad::Var x);
// y = x + W2 phi(W1 LayerNorm(x) + b1) + b2.
ad::Var ffn_block_forward(const BlockConfig& cfg, const FfnBlockVars& v, ad::Var x);
// (T, H) -> (T/p, p*H) -> (T/p, q*H).
ad::Var down_pool(ad::Var x, const PoolConfig& cfg, ad::Var w, ad::Var b);
// (T/p, q*H) -> (T/p, p*H) -> (T, H); when causal the result is delayed by p
// rows with zero fill.
ad::Var up_pool(ad::Var x, const PoolConfig& cfg, ad::Var w, ad::Var b, bool causal);

// Tape leaves for every parameter; requires_grad set from `trainable`.
std::vector<ad::Var> bind_params(const SashimiModel& model, ad::Tape& tape, const std::vector<bool>& trainable);
std::vector<ad::Var> bind_constants(const SashimiModel& model, ad::Tape& tape);

S4BlockVars s4_vars(const SashimiModel& model, const S4BlockIndex& idx, const std::vector<ad::Var>& pv);
FfnBlockVars ffn_vars(const FfnBlockIndex& idx, const std::vector<ad::Var>& pv);

// logits [T, vocab]; logits[t] models token t+1 given tokens[0..t] when causal.
ad::Var sashimi_forward(const SashimiModel& model, const std::vector<ad::Var>& pv, std::span<const std::uint8_t> tokens);
Tensor sashimi_forward(const SashimiModel& model, std::span<const std::uint8_t> tokens);

}  // namespace sashimi::model
