#include <gtest/gtest.h>

#include <cmath>

#include "sashimi/generate.hpp"
#include "sashimi/train.hpp"
#include "support.hpp"

using namespace sashimi;
using sashimi::testing::crafted_unstable_model;
using sashimi::testing::random_tokens;
using sashimi::testing::tiny_config;

namespace {

void zero_head(model::SashimiModel& m) {
  for (auto& v : m.params()[m.head_w()].value.data()) v = 0.0;
  for (auto& v : m.params()[m.head_b()].value.data()) v = 0.0;
}

}  // namespace

TEST(Generate, ConstantBiasMatchesSoftmax) {
  Rng rng(1);
  model::SashimiModel m(tiny_config(), rng);
  zero_head(m);
  auto& bias = m.params()[m.head_b()].value;
  for (auto& v : bias.data()) v = -30.0;
  bias[3] = std::log(0.4);
  bias[77] = std::log(0.3);
  bias[128] = std::log(0.2);
  bias[250] = std::log(0.1);
  const auto probs = softmax(bias.data());
  const std::size_t n = 10000;
  const auto r = gen::generate(m, {}, n, Rng(2));
  ASSERT_EQ(r.bytes.size(), n);
  std::vector<double> freq(256, 0.0);
  for (auto b : r.bytes) freq[b] += 1.0 / n;
  double tv = 0.0;
  for (std::size_t k = 0; k < 256; ++k) tv += 0.5 * std::abs(freq[k] - probs[k]);
  EXPECT_LT(tv, 0.02);
}

TEST(Generate, SameSeedSameBytes) {
  Rng rng(3);
  const model::SashimiModel m(tiny_config(), rng);
  const auto prime = random_tokens(10, rng);
  const auto a = gen::generate(m, prime, 300, Rng(4));
  const auto b = gen::generate(m, prime, 300, Rng(4));
  EXPECT_EQ(a.bytes, b.bytes);
  EXPECT_TRUE(a.state == b.state);
  const auto c = gen::generate(m, prime, 300, Rng(5));
  EXPECT_NE(a.bytes, c.bytes);
}

TEST(Generate, ZeroStepsMatchesTeacherForcingThePrime) {
  Rng rng(6);
  const model::SashimiModel m(tiny_config(), rng);
  const auto prime = random_tokens(23, rng);
  const auto r = gen::generate(m, prime, 0, Rng(7));
  EXPECT_TRUE(r.bytes.empty());
  const auto plan = model::compile_step_plan(m);
  auto gs = model::init_gen_state(m);
  model::sashimi_step(plan, gs, train::kStartToken);
  for (auto t : prime) model::sashimi_step(plan, gs, t);
  EXPECT_TRUE(r.state == gs);
}

TEST(Generate, StepCounterAndTrace) {
  Rng rng(8);
  const model::SashimiModel m(tiny_config(), rng);
  gen::GenSession s(m, random_tokens(5, rng), Rng(9));
  for (int i = 0; i < 200; ++i) s.next();
  EXPECT_EQ(s.steps(), 200u);
  ASSERT_EQ(s.trace().size(), 1u + 200 / gen::kTraceEvery);
  for (std::size_t i = 0; i < s.trace().size(); ++i) {
    EXPECT_EQ(s.trace()[i].step, i * gen::kTraceEvery);
    EXPECT_EQ(s.trace()[i].state_norms.size(), m.ssm_layers().size());
  }
}

TEST(Generate, SampledBytesAreFedBack) {
  Rng rng(10);
  const model::SashimiModel m(tiny_config(), rng);
  const auto r = gen::generate(m, {}, 40, Rng(11));
  // Replaying the samples as a prime reaches the same state.
  const auto replay = gen::generate(m, r.bytes, 0, Rng(0));
  EXPECT_TRUE(replay.state == r.state);
}

TEST(Loglik, UniformModelIsEightBitsPerByte) {
  Rng rng(12);
  model::SashimiModel m(tiny_config(), rng);
  zero_head(m);
  EXPECT_EQ(gen::sequence_loglik(m, random_tokens(100, rng)), 800.0);
}

TEST(Loglik, MatchesTeacherForcedNll) {
  Rng rng(13);
  const model::SashimiModel m(tiny_config(), rng);
  const auto seq = random_tokens(64, rng);
  const double nll = train::nll_bits(model::sashimi_forward(m, train::teacher_inputs(seq)), seq);
  EXPECT_NEAR(gen::sequence_loglik(m, seq), nll * 64.0, 1e-9);
}

TEST(Loglik, ChainRuleOverConcatenation) {
  Rng rng(14);
  const model::SashimiModel m(tiny_config(), rng);
  const auto a = random_tokens(30, rng);
  const auto b = random_tokens(17, rng);
  std::vector<std::uint8_t> ab = a;
  ab.insert(ab.end(), b.begin(), b.end());

  const auto plan = model::compile_step_plan(m);
  auto gs = model::init_gen_state(m);
  auto logits = model::sashimi_step(plan, gs, train::kStartToken);
  for (auto t : a) logits = model::sashimi_step(plan, gs, t);
  double conditional = 0.0;
  for (auto t : b) {
    double s = 0.0;
    const double mx = *std::max_element(logits.begin(), logits.end());
    for (double v : logits) s += std::exp(v - mx);
    conditional += (std::log(s) - (logits[t] - mx)) / std::log(2.0);
    logits = model::sashimi_step(plan, gs, t);
  }
  EXPECT_NEAR(gen::sequence_loglik(m, ab), gen::sequence_loglik(m, a) + conditional, 1e-9);
}

TEST(RejectionFilter, TwentyDistinctScores) {
  std::vector<double> scores(20);
  Rng rng(15);
  std::vector<std::size_t> order(20);
  for (std::size_t i = 0; i < 20; ++i) order[i] = i;
  for (std::size_t i = 19; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
  for (std::size_t i = 0; i < 20; ++i) scores[order[i]] = static_cast<double>(i);  // rank i at index order[i]
  const auto kept = gen::rejection_filter(scores);
  ASSERT_EQ(kept.size(), 11u);
  EXPECT_TRUE(std::is_sorted(kept.begin(), kept.end()));
  for (auto k : kept) {
    EXPECT_GE(scores[k], 8.0);
    EXPECT_LE(scores[k], 18.0);
  }
}

TEST(RejectionFilter, SingleItemKept) {
  EXPECT_EQ(gen::rejection_filter(std::vector<double>{-3.0}), (std::vector<std::size_t>{0}));
}

TEST(RejectionFilter, TiesBrokenByIndex) {
  const std::vector<double> scores(10, 1.5);
  EXPECT_EQ(gen::rejection_filter(scores), (std::vector<std::size_t>{4, 5, 6, 7, 8, 9}));
}

TEST(RejectionFilter, KeptCountForAllSizes) {
  Rng rng(16);
  for (std::size_t n = 1; n <= 100; ++n) {
    std::vector<double> scores(n);
    for (auto& s : scores) s = rng.normal();
    EXPECT_EQ(gen::rejection_filter(scores).size(), n - (n * 40) / 100 - (n * 5) / 100) << n;
  }
}

TEST(RejectionFilter, RejectsEmptyAndNan) {
  EXPECT_THROW(gen::rejection_filter(std::vector<double>{}), std::invalid_argument);
  EXPECT_THROW(gen::rejection_filter(std::vector<double>{1.0, std::nan("")}), std::invalid_argument);
}

TEST(Stability, TiedRolloutStaysBounded) {
  Rng rng(17);
  const model::SashimiModel m(tiny_config(), rng);
  gen::GenOptions opts;
  opts.feed = train::kStartToken;
  const auto prime = random_tokens(64, rng);
  const auto r = gen::generate(m, prime, 100000, Rng(18), opts);
  ASSERT_FALSE(r.trace.empty());
  double initial = 0.0, peak = 0.0;
  for (double v : r.trace.front().state_norms) initial = std::max(initial, v);
  for (const auto& e : r.trace)
    for (double v : e.state_norms) peak = std::max(peak, v);
  EXPECT_GT(initial, 0.0);
  EXPECT_LE(peak, 10.0 * initial);
}

TEST(Stability, UntiedWitnessDiverges) {
  Rng rng(19);
  const model::SashimiModel m = crafted_unstable_model(rng);
  try {
    gen::generate(m, random_tokens(8, rng), 100000, Rng(20));
    FAIL() << "expected divergence";
  } catch (const ssm::DivergenceError& e) {
    EXPECT_LT(e.step(), 100000u);
    EXPECT_EQ(e.layer(), m.ssm_layers().front().name);
  }
}
