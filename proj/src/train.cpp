#include "sashimi/train.hpp"

#include <cmath>
#include <stdexcept>

namespace sashimi::train {

std::string_view optimizer_name(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd") return OptimizerKind::sgd;
  throw std::invalid_argument("unknown optimizer '" + std::string(s) + "' (expected adam or sgd)");
}

std::string_view trainable_name(TrainableSet t) { return t == TrainableSet::all ? "all" : "lambda_and_c_only"; }

TrainableSet parse_trainable(std::string_view s) {
  if (s == "all") return TrainableSet::all;
  if (s == "lambda_and_c_only") return TrainableSet::lambda_and_c_only;
  throw std::invalid_argument("unknown trainable set '" + std::string(s) + "'");
}

void TrainConfig::validate(const model::ModelConfig& mc) const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("learning rate must be finite and >= 0");
  if (batch == 0) throw std::invalid_argument("batch must be at least 1");
  if (seq_len == 0 || seq_len % mc.length_multiple() != 0) {
    throw std::invalid_argument("seq_len " + std::to_string(seq_len) + " must be a positive multiple of " +
                                std::to_string(mc.length_multiple()));
  }
}

Sequence teacher_inputs(std::span<const std::uint8_t> seq) {
  Sequence in;
  in.reserve(seq.size());
  if (seq.empty()) return in;
  in.push_back(kStartToken);
  in.insert(in.end(), seq.begin(), seq.end() - 1);
  return in;
}

double nll_bits(const Tensor& logits, std::span<const std::uint8_t> targets) {
  if (logits.rank() != 2 || logits.dim(0) != targets.size()) throw std::invalid_argument("nll_bits: shape mismatch");
  double total = 0.0;
  for (std::size_t t = 0; t < targets.size(); ++t) total += neg_log2_prob(logits.row(t), targets[t]);
  return total / static_cast<double>(targets.size());
}

std::vector<bool> trainable_mask(const model::SashimiModel& m, TrainableSet set) {
  std::vector<bool> mask;
  for (const auto& p : m.params()) {
    mask.push_back(set == TrainableSet::all || p.role != model::ParamRole::ssm_frozen);
  }
  return mask;
}

Gradients compute_gradients(const model::SashimiModel& m, const Batch& batch, const std::vector<bool>& mask) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  ad::Tape tape;
  const auto pv = model::bind_params(m, tape, mask);
  ad::Var total;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Sequence in = teacher_inputs(batch[i]);
    ad::Var l = ad::nll_bits(model::sashimi_forward(m, pv, in), batch[i]);
    total = i == 0 ? l : ad::add(total, l);
  }
  ad::Var loss = ad::scale(total, 1.0 / static_cast<double>(batch.size()));
  const double value = loss.value().item();
  if (!std::isfinite(value)) throw NumericalError("non-finite training loss");
  auto leaf_grads = tape.backward(loss);
  Gradients g;
  g.loss = value;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    auto it = leaf_grads.find(pv[i].id);
    g.grads.push_back(it != leaf_grads.end() ? std::move(it->second) : Tensor::zeros_like(m.params()[i].value));
  }
  return g;
}

double batch_loss(const model::SashimiModel& m, const Batch& batch) {
  double total = 0.0;
  for (const auto& seq : batch) total += nll_bits(model::sashimi_forward(m, teacher_inputs(seq)), seq);
  return total / static_cast<double>(batch.size());
}

Optimizer::Optimizer(const TrainConfig& cfg, const model::SashimiModel& m) : cfg_(cfg) {
  for (const auto& p : m.params()) {
    m_.push_back(Tensor::zeros_like(p.value));
    v_.push_back(Tensor::zeros_like(p.value));
  }
}

void Optimizer::step(model::SashimiModel& m, const Gradients& g, const std::vector<bool>& mask) {
  ++t_;
  auto& ps = m.params();
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (!mask[i]) continue;
    auto w = ps[i].value.data();
    const auto gr = g.grads[i].data();
    if (cfg_.optimizer == OptimizerKind::sgd) {
      for (std::size_t j = 0; j < w.size(); ++j) w[j] -= cfg_.lr * gr[j];
      continue;
    }
    auto mm = m_[i].data();
    auto vv = v_[i].data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      mm[j] = cfg_.beta1 * mm[j] + (1.0 - cfg_.beta1) * gr[j];
      vv[j] = cfg_.beta2 * vv[j] + (1.0 - cfg_.beta2) * gr[j] * gr[j];
      w[j] -= cfg_.lr * (mm[j] / bc1) / (std::sqrt(vv[j] / bc2) + cfg_.eps);
    }
  }
}

double train_step(model::SashimiModel& m, const Batch& batch, const TrainConfig& cfg, Optimizer& opt) {
  for (const auto& seq : batch) {
    if (seq.size() != cfg.seq_len) throw std::invalid_argument("batch sequence length differs from seq_len");
  }
  const auto mask = trainable_mask(m, cfg.trainable);
  const Gradients g = compute_gradients(m, batch, mask);
  opt.step(m, g, mask);
  return g.loss;
}

EvalResult evaluate_nll(const model::SashimiModel& m, std::span<const std::uint8_t> data, std::size_t chunk_len) {
  if (chunk_len == 0 || chunk_len % m.config().length_multiple() != 0) {
    throw std::invalid_argument("chunk length must be a positive multiple of " +
                                std::to_string(m.config().length_multiple()));
  }
  const std::size_t chunks = data.size() / chunk_len;
  if (chunks == 0) throw std::invalid_argument("data is shorter than one chunk");
  double total = 0.0;
  for (std::size_t c = 0; c < chunks; ++c) {
    const auto chunk = data.subspan(c * chunk_len, chunk_len);
    total += nll_bits(model::sashimi_forward(m, teacher_inputs(chunk)), chunk);
  }
  return EvalResult{total / static_cast<double>(chunks), chunks};
}

GradCheckResult grad_check(const model::SashimiModel& m, const Batch& batch, std::size_t samples,
                           const std::vector<bool>& mask, Rng& rng) {
  const Gradients g = compute_gradients(m, batch, mask);
  // Flat index over trainable scalars only.
  std::vector<std::pair<std::size_t, std::size_t>> pool;
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    if (!mask[i]) continue;
    for (std::size_t j = 0; j < m.params()[i].value.numel(); ++j) pool.emplace_back(i, j);
  }
  GradCheckResult r;
  if (pool.empty()) return r;
  model::SashimiModel probe = m;
  for (std::size_t s = 0; s < samples; ++s) {
    const auto [i, j] = pool[rng.below(pool.size())];
    double& w = probe.params()[i].value[j];
    const double orig = w;
    w = orig + kGradCheckStep;
    const double up = batch_loss(probe, batch);
    w = orig - kGradCheckStep;
    const double down = batch_loss(probe, batch);
    w = orig;
    const double fd = (up - down) / (2.0 * kGradCheckStep);
    const double an = g.grads[i][j];
    const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), kGradCheckFloor});
    ++r.checked;
    if (rel >= r.max_rel_err) {
      r.max_rel_err = rel;
      r.worst = m.params()[i].name + "[" + std::to_string(j) + "]";
    }
  }
  return r;
}

Batch sample_batch(std::span<const std::uint8_t> stream, std::size_t batch, std::size_t seq_len, Rng& rng) {
  if (stream.size() < seq_len) throw std::invalid_argument("training stream shorter than seq_len");
  Batch b;
  const std::size_t starts = stream.size() - seq_len + 1;
  for (std::size_t i = 0; i < batch; ++i) {
    const std::size_t s = rng.below(starts);
    b.emplace_back(stream.begin() + s, stream.begin() + s + seq_len);
  }
  return b;
}

}  // namespace sashimi::train
