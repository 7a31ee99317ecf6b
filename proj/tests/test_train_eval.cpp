#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstring>
#include <map>

#include "sashimi/data.hpp"
#include "sashimi/quant.hpp"
#include "sashimi/train.hpp"
#include "support.hpp"

using namespace sashimi;
using namespace sashimi::train;
using sashimi::testing::random_tokens;
using sashimi::testing::tiny_config;

namespace {

// Per-code [min, max] of inputs on a dense grid that land in that code.
std::map<int, std::pair<double, double>> enumerate_bins(std::uint8_t (*enc)(double)) {
  std::map<int, std::pair<double, double>> bins;
  const int steps = 2'000'000;
  for (int i = 0; i <= steps; ++i) {
    const double x = -1.0 + 2.0 * i / steps;
    const int c = enc(x);
    auto it = bins.find(c);
    if (it == bins.end()) {
      bins[c] = {x, x};
    } else {
      it->second.second = x;
    }
  }
  return bins;
}

std::uint8_t mulaw_default(double x) { return quant::mulaw_encode(x); }

void zero_head(model::SashimiModel& m) {
  for (auto& v : m.params()[m.head_w()].value.data()) v = 0.0;
  for (auto& v : m.params()[m.head_b()].value.data()) v = 0.0;
}

Sequence sawtooth_codes(std::size_t n) {
  data::SyntheticSpec spec;
  spec.kind = data::Kind::sawtooth;
  spec.length = n;
  Rng rng(0);
  return quant::encode_all(data::make_synthetic(spec, rng), quant::QuantSpec{});
}

}  // namespace

TEST(Mulaw, Endpoints) {
  EXPECT_EQ(quant::mulaw_encode(1.0), 255);
  EXPECT_EQ(quant::mulaw_encode(-1.0), 0);
  EXPECT_EQ(quant::mulaw_encode(0.0), 128);
}

TEST(Mulaw, OutOfRangeThrows) {
  EXPECT_THROW(quant::mulaw_encode(1.0000001), std::domain_error);
  EXPECT_THROW(quant::mulaw_encode(std::nan("")), std::domain_error);
  EXPECT_THROW(quant::linear_encode(-1.5), std::domain_error);
}

TEST(Mulaw, RoundtripWithinBinWidth) {
  const auto bins = enumerate_bins(&mulaw_default);
  EXPECT_EQ(bins.size(), 256u);
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double x = 2.0 * rng.uniform() - 1.0;
    const std::uint8_t c = quant::mulaw_encode(x);
    const auto [lo, hi] = bins.at(c);
    // Grid spacing slack on both ends of the enumerated bin.
    const double width = hi - lo + 2e-6;
    EXPECT_LE(std::abs(quant::mulaw_decode(c) - x), width) << x;
    EXPECT_GE(quant::mulaw_decode(c), lo - 1e-6);
    EXPECT_LE(quant::mulaw_decode(c), hi + 1e-6);
  }
}

TEST(Mulaw, DecodeIsBinMidpoint) {
  const auto bins = enumerate_bins(&mulaw_default);
  for (const auto& [c, range] : bins) {
    EXPECT_NEAR(quant::mulaw_decode(static_cast<std::uint8_t>(c)), 0.5 * (range.first + range.second), 2e-6) << c;
  }
}

TEST(Linear, EndpointsAndZero) {
  EXPECT_EQ(quant::linear_encode(-1.0), 0);
  EXPECT_EQ(quant::linear_encode(1.0), 255);
  EXPECT_EQ(quant::linear_encode(0.0), 128);
}

TEST(Linear, RoundtripWithinHalfBin) {
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const double x = 2.0 * rng.uniform() - 1.0;
    EXPECT_LE(std::abs(quant::linear_decode(quant::linear_encode(x)) - x), 1.0 / 255.0 + 1e-15);
  }
}

TEST(Quant, CodecsAreMonotone) {
  Rng rng(3);
  std::vector<double> xs(5000);
  for (auto& x : xs) x = 2.0 * rng.uniform() - 1.0;
  xs.push_back(-1.0);
  xs.push_back(1.0);
  xs.push_back(0.0);
  std::sort(xs.begin(), xs.end());
  for (std::size_t i = 1; i < xs.size(); ++i) {
    EXPECT_LE(quant::mulaw_encode(xs[i - 1]), quant::mulaw_encode(xs[i]));
    EXPECT_LE(quant::linear_encode(xs[i - 1]), quant::linear_encode(xs[i]));
  }
  for (int c = 1; c < 256; ++c) {
    EXPECT_LT(quant::mulaw_decode(c - 1), quant::mulaw_decode(c));
    EXPECT_LT(quant::linear_decode(c - 1), quant::linear_decode(c));
  }
}

TEST(Quant, DecodedCodesReencodeToThemselves) {
  for (int c = 0; c < 256; ++c) {
    EXPECT_EQ(quant::mulaw_encode(quant::mulaw_decode(c)), c);
    EXPECT_EQ(quant::linear_encode(quant::linear_decode(c)), c);
  }
}

TEST(Synthetic, SingleToneAmplitude) {
  data::SyntheticSpec spec;
  spec.kind = data::Kind::sine_mix;
  spec.length = 4000;
  spec.tones = {data::Tone{16.0, 0.5, 0.0}};
  Rng rng(4);
  const auto x = data::make_synthetic(spec, rng);
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  EXPECT_NEAR(peak, 0.5, 1e-12);
}

TEST(Synthetic, SawtoothRepeatsExactly) {
  data::SyntheticSpec spec;
  spec.kind = data::Kind::sawtooth;
  spec.period = 13;
  spec.length = 500;
  Rng rng(5);
  const auto x = data::make_synthetic(spec, rng);
  for (std::size_t t = spec.period; t < x.size(); ++t) EXPECT_EQ(x[t], x[t - spec.period]);
}

TEST(Synthetic, Ar1Autocorrelation) {
  data::SyntheticSpec spec;
  spec.kind = data::Kind::noise_ar1;
  spec.length = 100000;
  spec.phi = 0.9;
  Rng rng(6);
  const auto x = data::make_synthetic(spec, rng);
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= x.size();
  double num = 0.0, den = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    den += (x[t] - mean) * (x[t] - mean);
    if (t > 0) num += (x[t] - mean) * (x[t - 1] - mean);
  }
  EXPECT_NEAR(num / den, 0.9, 0.02);
}

TEST(Synthetic, DeterministicAndBounded) {
  for (auto kind : {data::Kind::sine_mix, data::Kind::sawtooth, data::Kind::noise_ar1}) {
    data::SyntheticSpec spec;
    spec.kind = kind;
    spec.tones = {data::Tone{8.0, 0.7, 0.0}, data::Tone{5.0, 0.6, 1.0}};
    spec.sigma = 0.5;
    Rng a(7), b(7);
    const auto x = data::make_synthetic(spec, a);
    EXPECT_EQ(x, data::make_synthetic(spec, b));
    for (double v : x) {
      EXPECT_LE(v, 1.0);
      EXPECT_GE(v, -1.0);
    }
  }
}

TEST(Nll, UniformLogitsGiveEightBits) {
  const Tensor logits({5, 256});
  EXPECT_EQ(nll_bits(logits, std::vector<std::uint8_t>{0, 1, 2, 200, 255}), 8.0);
}

TEST(Nll, SaturatedLogits) {
  Tensor logits({3, 256});
  const std::vector<std::uint8_t> target{4, 100, 255};
  for (std::size_t t = 0; t < 3; ++t) logits.at(t, target[t]) = 1e3;
  EXPECT_LT(nll_bits(logits, target), 1e-6);
}

TEST(Nll, TwoClassHandCase) {
  Tensor logits({1, 256});
  for (auto& v : logits.data()) v = -std::numeric_limits<double>::infinity();
  logits.at(0, 0) = std::log(3.0);
  logits.at(0, 1) = 0.0;
  EXPECT_NEAR(nll_bits(logits, std::vector<std::uint8_t>{0}), -std::log2(0.75), 1e-12);
}

TEST(Teacher, InputsStartWithMidCode) {
  const Sequence s{5, 6, 7};
  EXPECT_EQ(teacher_inputs(s), (Sequence{kStartToken, 5, 6}));
}

TEST(TrainStep, ZeroLearningRateIsNoOp) {
  Rng rng(8);
  model::SashimiModel m(tiny_config(), rng);
  const Batch batch{random_tokens(64, rng), random_tokens(64, rng)};
  TrainConfig cfg;
  cfg.lr = 0.0;
  cfg.trainable = TrainableSet::all;
  Optimizer opt(cfg, m);
  const double a = train_step(m, batch, cfg, opt);
  const double b = train_step(m, batch, cfg, opt);
  EXPECT_EQ(a, b);
}

TEST(TrainStep, FrozenGradientsAreZero) {
  Rng rng(9);
  const model::SashimiModel m(tiny_config(), rng);
  const auto mask = trainable_mask(m, TrainableSet::lambda_and_c_only);
  const Gradients g = compute_gradients(m, Batch{random_tokens(64, rng)}, mask);
  std::size_t frozen = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const bool is_frozen = m.params()[i].role == model::ParamRole::ssm_frozen;
    EXPECT_EQ(mask[i], !is_frozen) << m.params()[i].name;
    if (mask[i]) continue;
    ++frozen;
    for (double v : g.grads[i].data()) EXPECT_EQ(v, 0.0) << m.params()[i].name;
  }
  EXPECT_GT(frozen, 0u);
  const auto all = trainable_mask(m, TrainableSet::all);
  EXPECT_TRUE(std::all_of(all.begin(), all.end(), [](bool b) { return b; }));
}

TEST(TrainStep, FrozenTensorsKeepTheirBytes) {
  Rng rng(10);
  model::SashimiModel m(tiny_config(), rng);
  const model::SashimiModel before = m;
  TrainConfig cfg;
  cfg.lr = 1e-2;
  Optimizer opt(cfg, m);
  for (int i = 0; i < 5; ++i) train_step(m, Batch{random_tokens(64, rng)}, cfg, opt);
  bool moved = false;
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    const auto& now = m.params()[i].value.data();
    const auto& was = before.params()[i].value.data();
    const bool same = std::equal(now.begin(), now.end(), was.begin(), was.end(),
                                 [](double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; });
    if (m.params()[i].role == model::ParamRole::ssm_frozen) {
      EXPECT_TRUE(same) << m.params()[i].name;
    } else {
      moved = moved || !same;
    }
  }
  EXPECT_TRUE(moved);
}

TEST(TrainStep, SgdMovesAgainstGradient) {
  Rng rng(11);
  model::SashimiModel m(tiny_config(), rng);
  const Batch batch{random_tokens(64, rng)};
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::sgd;
  cfg.lr = 1e-3;
  const auto mask = trainable_mask(m, cfg.trainable);
  const Gradients g = compute_gradients(m, batch, mask);
  const model::SashimiModel before = m;
  Optimizer opt(cfg, m);
  opt.step(m, g, mask);
  for (std::size_t i = 0; i < m.params().size(); ++i)
    for (std::size_t j = 0; j < g.grads[i].numel(); ++j)
      EXPECT_DOUBLE_EQ(m.params()[i].value[j], before.params()[i].value[j] - cfg.lr * g.grads[i][j]);
}

TEST(TrainStep, NonFiniteLossThrows) {
  Rng rng(12);
  model::SashimiModel m(tiny_config(), rng);
  m.params()[m.head_b()].value[3] = std::numeric_limits<double>::infinity();
  TrainConfig cfg;
  Optimizer opt(cfg, m);
  EXPECT_THROW(train_step(m, Batch{random_tokens(64, rng)}, cfg, opt), NumericalError);
}

TEST(TrainStep, MemorizesSawtooth) {
  Rng rng(13);
  model::SashimiModel m(tiny_config(), rng);
  const Sequence seq = sawtooth_codes(64);
  const Batch batch{seq};
  TrainConfig cfg;
  Optimizer opt(cfg, m);
  std::vector<double> window_min;
  double best = std::numeric_limits<double>::infinity();
  double loss = 0.0;
  for (int step = 0; step < 2000; ++step) {
    loss = train_step(m, batch, cfg, opt);
    best = std::min(best, loss);
    if ((step + 1) % 200 == 0) {
      window_min.push_back(best);
      best = std::numeric_limits<double>::infinity();
    }
  }
  const double final_loss = batch_loss(m, batch);
  EXPECT_LT(final_loss, 4.0);
  for (std::size_t w = 1; w < window_min.size(); ++w) {
    if (window_min[w - 1] < 4.0) break;
    EXPECT_LT(window_min[w], window_min[w - 1]) << "window " << w;
  }
}

TEST(Evaluate, ZeroHeadIsEightBits) {
  Rng rng(14);
  model::SashimiModel m(tiny_config(), rng);
  zero_head(m);
  const auto r = evaluate_nll(m, random_tokens(128, rng), 64);
  EXPECT_EQ(r.nll_bits, 8.0);
  EXPECT_EQ(r.chunks, 2u);
}

TEST(Evaluate, RaggedTailDropped) {
  Rng rng(15);
  const model::SashimiModel m(tiny_config(), rng);
  const auto data = random_tokens(160, rng);
  const auto r = evaluate_nll(m, data, 64);
  EXPECT_EQ(r.chunks, 2u);
  const auto trimmed = evaluate_nll(m, std::span(data).first(128), 64);
  EXPECT_EQ(r.nll_bits, trimmed.nll_bits);
}

TEST(Evaluate, SingleChunkMatchesNll) {
  Rng rng(16);
  const model::SashimiModel m(tiny_config(), rng);
  const auto data = random_tokens(64, rng);
  const double direct = nll_bits(model::sashimi_forward(m, teacher_inputs(data)), data);
  EXPECT_EQ(evaluate_nll(m, data, 64).nll_bits, direct);
}

TEST(Evaluate, ChunkOrderDoesNotMatter) {
  Rng rng(17);
  const model::SashimiModel m(tiny_config(), rng);
  const auto data = random_tokens(192, rng);
  Sequence swapped(data.begin() + 128, data.end());
  swapped.insert(swapped.end(), data.begin(), data.begin() + 128);
  const auto a = evaluate_nll(m, data, 64);
  EXPECT_NEAR(a.nll_bits, evaluate_nll(m, swapped, 64).nll_bits, 1e-12);
  EXPECT_EQ(a.nll_bits, evaluate_nll(m, data, 64).nll_bits);
}

TEST(Evaluate, RejectsShortDataAndBadChunk) {
  Rng rng(18);
  const model::SashimiModel m(tiny_config(), rng);
  EXPECT_THROW(evaluate_nll(m, random_tokens(32, rng), 64), std::invalid_argument);
  EXPECT_THROW(evaluate_nll(m, random_tokens(128, rng), 24), std::invalid_argument);
}

TEST(GradCheck, TinyModelWithinTolerance) {
  Rng rng(19);
  const model::SashimiModel m(tiny_config(), rng);
  const Batch batch{random_tokens(64, rng)};
  Rng pick(20);
  const auto r = grad_check(m, batch, 64, trainable_mask(m, TrainableSet::all), pick);
  EXPECT_EQ(r.checked, 64u);
  EXPECT_LT(r.max_rel_err, 1e-4) << r.worst;
}

TEST(GradCheck, SkipsFrozenParameters) {
  Rng rng(21);
  const model::SashimiModel m(tiny_config(), rng);
  const Batch batch{random_tokens(64, rng)};
  std::vector<bool> mask(m.params().size(), false);
  Rng pick(22);
  EXPECT_EQ(grad_check(m, batch, 16, mask, pick).checked, 0u);
  mask[m.head_b()] = true;
  const auto r = grad_check(m, batch, 16, mask, pick);
  EXPECT_EQ(r.checked, 16u);
  EXPECT_EQ(r.worst.rfind("head_b[", 0), 0u) << r.worst;
}

TEST(GradCheck, Repeatable) {
  Rng rng(23);
  const model::SashimiModel m(tiny_config(), rng);
  const Batch batch{random_tokens(64, rng)};
  const auto mask = trainable_mask(m, TrainableSet::lambda_and_c_only);
  Rng a(24), b(24);
  const auto ra = grad_check(m, batch, 8, mask, a);
  const auto rb = grad_check(m, batch, 8, mask, b);
  EXPECT_EQ(ra.max_rel_err, rb.max_rel_err);
  EXPECT_EQ(ra.worst, rb.worst);
}

TEST(TrainConfigTest, SeqLenMustDivide) {
  TrainConfig cfg;
  cfg.seq_len = 40;
  EXPECT_THROW(cfg.validate(tiny_config()), std::invalid_argument);
  cfg.seq_len = 64;
  EXPECT_NO_THROW(cfg.validate(tiny_config()));
}

TEST(SampleBatch, WindowsComeFromStream) {
  Rng rng(25);
  Sequence stream(300);
  for (std::size_t i = 0; i < stream.size(); ++i) stream[i] = static_cast<std::uint8_t>(i);
  const Batch b = sample_batch(stream, 4, 64, rng);
  ASSERT_EQ(b.size(), 4u);
  for (const auto& s : b) {
    ASSERT_EQ(s.size(), 64u);
    for (std::size_t i = 1; i < s.size(); ++i) EXPECT_EQ(static_cast<std::uint8_t>(s[i - 1] + 1), s[i]);
  }
}
