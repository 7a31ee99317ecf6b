#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sashimi/model.hpp"
#include "sashimi/rng.hpp"

namespace sashimi::train {

// Token fed before the first sample when teacher forcing (the mid-scale code).
inline constexpr std::uint8_t kStartToken = 128;

enum class OptimizerKind { sgd, adam };
enum class TrainableSet { lambda_and_c_only, all };

std::string_view optimizer_name(OptimizerKind k);
OptimizerKind parse_optimizer(std::string_view s);
std::string_view trainable_name(TrainableSet t);
TrainableSet parse_trainable(std::string_view s);

struct TrainConfig {
  double lr = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t steps = 100;
  std::size_t batch = 1;
  std::size_t seq_len = 64;
  TrainableSet trainable = TrainableSet::lambda_and_c_only;

  void validate(const model::ModelConfig& mc) const;
};

using Sequence = std::vector<std::uint8_t>;
using Batch = std::vector<Sequence>;

// [start] ++ seq[0 .. T-1): position t is asked to predict seq[t].
Sequence teacher_inputs(std::span<const std::uint8_t> seq);

// Mean over positions of -log2 softmax(logits[t])[targets[t]].
double nll_bits(const Tensor& logits, std::span<const std::uint8_t> targets);

// lambda_and_c_only freezes the SSM's p, q, B and step size; everything else
// (lambda, C, D and the surrounding network) trains.
std::vector<bool> trainable_mask(const model::SashimiModel& m, TrainableSet set);

struct Gradients {
  double loss = 0.0;
  std::vector<Tensor> grads;  // one per parameter; zeros where frozen
};

// Mean NLL in bits over the batch and its gradient.
Gradients compute_gradients(const model::SashimiModel& m, const Batch& batch, const std::vector<bool>& mask);
double batch_loss(const model::SashimiModel& m, const Batch& batch);

class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg, const model::SashimiModel& m);
  void step(model::SashimiModel& m, const Gradients& g, const std::vector<bool>& mask);
  std::size_t steps_taken() const { return t_; }

 private:
  TrainConfig cfg_;
  std::size_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

// Forward, loss, backward and one update of the trainable set. Returns the
// loss before the update; throws NumericalError on a non-finite loss.
double train_step(model::SashimiModel& m, const Batch& batch, const TrainConfig& cfg, Optimizer& opt);

struct EvalResult {
  double nll_bits = 0.0;
  std::size_t chunks = 0;
};

// Non-overlapping chunks of chunk_len, ragged tail dropped.
EvalResult evaluate_nll(const model::SashimiModel& m, std::span<const std::uint8_t> data, std::size_t chunk_len);

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "name[index]"
};

// Relative error |a - b| / max(|a|, |b|, floor).
inline constexpr double kGradCheckFloor = 1e-4;
inline constexpr double kGradCheckStep = 1e-5;

GradCheckResult grad_check(const model::SashimiModel& m, const Batch& batch, std::size_t samples,
                           const std::vector<bool>& mask, Rng& rng);

// Random windows of seq_len from a token stream.
Batch sample_batch(std::span<const std::uint8_t> stream, std::size_t batch, std::size_t seq_len, Rng& rng);

}  // namespace sashimi::train
