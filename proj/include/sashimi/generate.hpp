#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sashimi/model.hpp"
#include "sashimi/rng.hpp"
#include "sashimi/step.hpp"

namespace sashimi::gen {

inline constexpr std::size_t kTraceEvery = 64;

struct TraceEntry {
  std::size_t step = 0;             // emitted samples so far
  std::vector<double> state_norms;  // max |h| per SSM slot
};

// Stateful sampler over one immutable model.
class GenSession {
 public:
  // Teacher-forces the start token followed by `prime`.
  GenSession(const model::SashimiModel& m, std::span<const std::uint8_t> prime, Rng rng);

  // Draws one sample from the current distribution and advances the state.
  // With `feed` set, that token is fed instead of the sample.
  std::uint8_t next(std::optional<std::uint8_t> feed = std::nullopt);

  std::size_t steps() const { return steps_; }
  const model::GenState& state() const { return state_; }
  const std::vector<double>& logits() const { return logits_; }
  const std::vector<TraceEntry>& trace() const { return trace_; }
  // Largest state norm seen in the trace, over all slots.
  double max_traced_norm() const;

 private:
  void record_trace();

  const model::SashimiModel* model_;
  model::StepPlan plan_;
  model::GenState state_;
  Rng rng_;
  std::vector<double> logits_;
  std::size_t steps_ = 0;
  std::vector<TraceEntry> trace_;
};

struct GenOptions {
  std::optional<std::uint8_t> feed;  // constant input regime when set
};

struct GenResult {
  std::vector<std::uint8_t> bytes;
  std::vector<TraceEntry> trace;
  model::GenState state;
};

// Samples n bytes at temperature 1 after consuming the prime. A diverging
// state surfaces as ssm::DivergenceError with the step and layer.
GenResult generate(const model::SashimiModel& m, std::span<const std::uint8_t> prime, std::size_t n, Rng rng,
                   const GenOptions& opts = {});

// Total -log2 p(bytes) under teacher forcing, computed recurrently.
double sequence_loglik(const model::SashimiModel& m, std::span<const std::uint8_t> bytes);

// Drops floor(0.40 n) lowest and floor(0.05 n) highest scores (ties ordered
// by index); returns surviving indices in original order.
std::vector<std::size_t> rejection_filter(std::span<const double> scores);

}  // namespace sashimi::gen
