#pragma once

// Recurrent (token-by-token) execution of a causal SaShiMi model.

#include <cstdint>
#include <vector>

#include "sashimi/model.hpp"
#include "sashimi/ssm.hpp"

namespace sashimi::model {

// Discretized operators for every SSM channel, computed once per model.
struct StepPlan {
  const SashimiModel* model = nullptr;
  std::vector<std::vector<ssm::DiscreteSsm>> ssm;  // [slot][channel]
};

StepPlan compile_step_plan(const SashimiModel& model);

struct PoolBuffers {
  std::vector<double> down;  // last p inputs to the down-pool, p x width
  std::vector<double> up;    // up-pooled outputs pending emission, p x width
  std::size_t phase = 0;     // position inside the current window, in [0, p)

  bool operator==(const PoolBuffers&) const = default;
};

struct GenState {
  std::vector<std::vector<ssm::RecurrentState>> ssm;  // [slot][channel]
  std::vector<PoolBuffers> pools;                     // one per pooling tier
  std::size_t steps = 0;

  bool operator==(const GenState& other) const;
  // Largest state norm across the channels of one SSM slot.
  double max_state_norm(std::size_t slot) const;
};

GenState init_gen_state(const SashimiModel& model);

// Feeds one token and returns the logits for the next one. Down-pools fire
// once their window fills; the up-pooled signal for a window is emitted one
// window later, so the first p steps of each tier see zeros.
std::vector<double> sashimi_step(const StepPlan& plan, GenState& gs, std::uint8_t token);

}  // namespace sashimi::model
