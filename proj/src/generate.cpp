#include "sashimi/generate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "sashimi/train.hpp"

namespace sashimi::gen {

GenSession::GenSession(const model::SashimiModel& m, std::span<const std::uint8_t> prime, Rng rng)
    : model_(&m), plan_(model::compile_step_plan(m)), state_(model::init_gen_state(m)), rng_(rng) {
  logits_ = model::sashimi_step(plan_, state_, train::kStartToken);
  for (auto tok : prime) logits_ = model::sashimi_step(plan_, state_, tok);
  record_trace();
}

std::uint8_t GenSession::next(std::optional<std::uint8_t> feed) {
  const auto sample = static_cast<std::uint8_t>(categorical_sample(logits_, rng_));
  logits_ = model::sashimi_step(plan_, state_, feed.value_or(sample));
  ++steps_;
  if (steps_ % kTraceEvery == 0) record_trace();
  return sample;
}

void GenSession::record_trace() {
  TraceEntry e;
  e.step = steps_;
  for (std::size_t s = 0; s < state_.ssm.size(); ++s) e.state_norms.push_back(state_.max_state_norm(s));
  trace_.push_back(std::move(e));
}

double GenSession::max_traced_norm() const {
  double m = 0.0;
  for (const auto& e : trace_)
    for (double v : e.state_norms) m = std::max(m, v);
  return m;
}

GenResult generate(const model::SashimiModel& m, std::span<const std::uint8_t> prime, std::size_t n, Rng rng,
                   const GenOptions& opts) {
  GenSession session(m, prime, rng);
  GenResult r;
  r.bytes.reserve(n);
  for (std::size_t i = 0; i < n; ++i) r.bytes.push_back(session.next(opts.feed));
  r.trace = session.trace();
  r.state = session.state();
  return r;
}

double sequence_loglik(const model::SashimiModel& m, std::span<const std::uint8_t> bytes) {
  const auto plan = model::compile_step_plan(m);
  auto gs = model::init_gen_state(m);
  double total = 0.0;
  std::uint8_t prev = train::kStartToken;
  for (auto b : bytes) {
    const auto logits = model::sashimi_step(plan, gs, prev);
    total += neg_log2_prob(logits, b);
    prev = b;
  }
  return total;
}

std::vector<std::size_t> rejection_filter(std::span<const double> scores) {
  const std::size_t n = scores.size();
  if (n == 0) throw std::invalid_argument("rejection_filter needs at least one score");
  for (double v : scores) {
    if (std::isnan(v)) throw std::invalid_argument("rejection_filter: NaN score");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  const std::size_t low = n * 40 / 100;
  const std::size_t high = n * 5 / 100;
  std::vector<std::size_t> kept(order.begin() + static_cast<std::ptrdiff_t>(low),
                                order.end() - static_cast<std::ptrdiff_t>(high));
  std::sort(kept.begin(), kept.end());
  return kept;
}

}  // namespace sashimi::gen
