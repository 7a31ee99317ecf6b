#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "sashimi/autodiff.hpp"
#include "sashimi/rng.hpp"
#include "sashimi/tensor.hpp"

using namespace sashimi;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = scale * rng.normal();
  return t;
}

// Central differences of f around every entry of `inputs[k]`.
template <typename F>
std::vector<Tensor> finite_differences(const std::vector<Tensor>& inputs, F f, double h = 1e-5) {
  std::vector<Tensor> out;
  std::vector<Tensor> work = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor g = Tensor::zeros_like(inputs[k]);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const double orig = work[k][i];
      work[k][i] = orig + h;
      const double up = f(work);
      work[k][i] = orig - h;
      const double down = f(work);
      work[k][i] = orig;
      g[i] = (up - down) / (2 * h);
    }
    out.push_back(g);
  }
  return out;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-4}); }

}  // namespace

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), std::invalid_argument);
  Tensor t({2, 3});
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(Tensor::scalar(4.0).item(), 4.0);
}

TEST(Tensor, NonFiniteIsReported) {
  Tensor t({2}, {1.0, std::nan("")});
  EXPECT_FALSE(t.all_finite());
  EXPECT_THROW(t.check_finite("test"), NumericalError);
}

TEST(Tensor, RoundHalfAwayFromZero) {
  EXPECT_EQ(round_half_away(127.5), 128.0);
  EXPECT_EQ(round_half_away(-127.5), -128.0);
  EXPECT_EQ(round_half_away(2.4999), 2.0);
}

TEST(Softmax, SumsToOneAndSurvivesHugeLogits) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> logits(256);
    for (auto& v : logits) v = 30.0 * rng.normal();
    const auto p = softmax(logits);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
  }
  const auto p = softmax(std::vector<double>{1e300, 0.0});
  EXPECT_DOUBLE_EQ(p[0], 1.0);
}

TEST(Backward, SquareAtThree) {
  ad::Tape tape;
  Tensor x0 = Tensor::scalar(3.0);
  x0.set_requires_grad(true);
  ad::Var x = tape.leaf(x0);
  auto g = tape.backward(ad::mul(x, x));
  EXPECT_DOUBLE_EQ(g.at(x.id).item(), 6.0);
}

TEST(Backward, SumGivesOnes) {
  ad::Tape tape;
  Tensor x0({4}, {1, 2, 3, 4}, true);
  ad::Var x = tape.leaf(x0);
  auto g = tape.backward(ad::sum(x));
  for (double v : g.at(x.id).data()) EXPECT_EQ(v, 1.0);
}

TEST(Backward, RejectsNonScalarLoss) {
  ad::Tape tape;
  ad::Var x = tape.leaf(Tensor({3}, {1, 2, 3}, true));
  EXPECT_THROW(tape.backward(x), std::invalid_argument);
}

TEST(Backward, NonParticipatingLeafGetsZeros) {
  ad::Tape tape;
  ad::Var x = tape.leaf(Tensor({2}, {1, 2}, true));
  ad::Var unused = tape.leaf(Tensor({3}, {1, 2, 3}, true));
  auto g = tape.backward(ad::sum(x));
  ASSERT_TRUE(g.count(unused.id));
  for (double v : g.at(unused.id).data()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, VisitsEachNodeOnce) {
  ad::Tape tape;
  ad::Var x = tape.leaf(Tensor({2}, {1, 2}, true));
  ad::Var y = ad::mul(x, x);
  ad::Var z = ad::add(y, x);
  ad::Var loss = ad::sum(z);
  tape.backward(loss);
  EXPECT_EQ(tape.last_backward_visits(), 3u);
}

TEST(Backward, InputsPrecedeNodes) {
  ad::Tape tape;
  ad::Var x = tape.leaf(Tensor({2}, {1, 2}, true));
  ad::Var y = ad::gelu(ad::scale(ad::mul(x, x), 0.5));
  for (ad::NodeId id = 0; id < tape.size(); ++id)
    for (auto in : tape.inputs(id)) EXPECT_LT(in, id);
  (void)y;
}

TEST(Backward, NanInForwardIsAnError) {
  ad::Tape tape;
  ad::Var x = tape.leaf(Tensor({1}, {1e300}, true));
  EXPECT_THROW(ad::mul(ad::mul(x, x), x), NumericalError);
}

TEST(Backward, TwoLayerGeluNetMatchesFiniteDifferences) {
  Rng rng(11);
  const std::vector<Tensor> inputs{random_tensor({5, 4}, rng), random_tensor({4, 6}, rng, 0.5),
                                   random_tensor({6}, rng, 0.5), random_tensor({6, 3}, rng, 0.5),
                                   random_tensor({3}, rng, 0.5)};
  auto build = [](ad::Tape& tape, const std::vector<Tensor>& in, bool grad) {
    std::vector<ad::Var> v;
    for (auto t : in) {
      t.set_requires_grad(grad);
      v.push_back(tape.leaf(t));
    }
    ad::Var h = ad::gelu(ad::linear(v[0], v[1], v[2]));
    ad::Var y = ad::linear(h, v[3], v[4]);
    return std::make_pair(v, ad::sum(ad::mul(y, y)));
  };
  ad::Tape tape;
  auto [vars, loss] = build(tape, inputs, true);
  auto grads = tape.backward(loss);
  auto fd = finite_differences(inputs, [&](const std::vector<Tensor>& in) {
    ad::Tape t;
    return build(t, in, false).second.value().item();
  });
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k)
    for (std::size_t i = 0; i < inputs[k].numel(); ++i) worst = std::max(worst, rel_err(grads.at(vars[k].id)[i], fd[k][i]));
  EXPECT_LT(worst, 1e-4);
}

TEST(Backward, ComposedOpsMatchFiniteDifferences) {
  // layer_norm, glu, shift, reverse, concat, reshape, embedding and nll in one graph.
  Rng rng(5);
  const std::vector<std::uint8_t> tokens{3, 1, 4, 1, 5, 2, 6, 0};
  const std::vector<std::uint8_t> targets{1, 4, 1, 5, 2, 6, 0, 3};
  const std::vector<Tensor> inputs{random_tensor({7, 4}, rng), random_tensor({4}, rng), random_tensor({4}, rng),
                                   random_tensor({8, 8}, rng, 0.5), random_tensor({8}, rng, 0.5)};
  std::vector<std::uint8_t> t4;
  for (auto t : targets) t4.push_back(t % 4);
  auto build4 = [&](ad::Tape& tape, const std::vector<Tensor>& in, bool grad) {
    std::vector<ad::Var> v;
    for (auto t : in) {
      t.set_requires_grad(grad);
      v.push_back(tape.leaf(t));
    }
    ad::Var x = ad::embedding(v[0], tokens);
    x = ad::layer_norm(x, v[1], v[2]);
    ad::Var both = ad::concat_cols(ad::shift_rows(x, 2), ad::reverse_rows(x));
    ad::Var z = ad::glu(ad::linear(both, v[3], v[4]));
    z = ad::reshape(z, {8, 4});
    return std::make_pair(v, ad::nll_bits(z, t4));
  };
  ad::Tape tape;
  auto [vars, loss] = build4(tape, inputs, true);
  auto grads = tape.backward(loss);
  auto fd = finite_differences(inputs, [&](const std::vector<Tensor>& in) {
    ad::Tape t;
    return build4(t, in, false).second.value().item();
  });
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k)
    for (std::size_t i = 0; i < inputs[k].numel(); ++i) worst = std::max(worst, rel_err(grads.at(vars[k].id)[i], fd[k][i]));
  EXPECT_LT(worst, 1e-4);
}

TEST(Rng, UniformInRangeAndDeterministic) {
  Rng a(12345), b(12345);
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_EQ(u, b.uniform());
  }
}

TEST(Rng, UniformMean) {
  Rng rng(7);
  double s = 0.0;
  for (int i = 0; i < 100000; ++i) s += rng.uniform();
  EXPECT_NEAR(s / 1e5, 0.5, 0.01);
}

TEST(Rng, DerivedStreamsAreIndependent) {
  EXPECT_NE(Rng::derive(1, "init").next_u64(), Rng::derive(1, "data").next_u64());
  EXPECT_EQ(Rng::derive(1, "init").next_u64(), Rng::derive(1, "init").next_u64());
}

TEST(Categorical, DegenerateLogits) {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(categorical_sample(std::vector<double>{1e9, 0, 0}, rng), 0u);
}

TEST(Categorical, EmptyThrows) {
  Rng rng(1);
  EXPECT_THROW(categorical_sample(std::vector<double>{}, rng), std::invalid_argument);
}

TEST(Categorical, UniformFrequencies) {
  Rng rng(2);
  std::vector<int> counts(4);
  for (int i = 0; i < 100000; ++i) ++counts[categorical_sample(std::vector<double>(4, 0.0), rng)];
  for (int c : counts) EXPECT_NEAR(c / 1e5, 0.25, 0.01);
}

TEST(Categorical, ThreeToOne) {
  Rng rng(3);
  int ones = 0;
  for (int i = 0; i < 100000; ++i) ones += categorical_sample(std::vector<double>{0.0, std::log(3.0)}, rng) == 1;
  EXPECT_NEAR(ones / 1e5, 0.75, 0.01);
}

TEST(Categorical, UsesExactlyOneDraw) {
  Rng a(9), b(9);
  categorical_sample(std::vector<double>{0.1, 0.2, 0.3}, a);
  b.uniform();
  EXPECT_EQ(a.state(), b.state());
}

TEST(Rng, SeedingUsesSplitmix64) {
  // Published first splitmix64 output for state 0.
  EXPECT_EQ(Rng(0).state()[0], 0xE220A8397B1DCDAFull);
}

TEST(Determinism, RepeatedGraphsAreBitIdentical) {
  auto run = [] {
    Rng rng(42);
    ad::Tape tape;
    ad::Var x = tape.leaf(random_tensor({6, 5}, rng));
    ad::Var w = tape.leaf(random_tensor({5, 5}, rng));
    ad::Var b = tape.leaf(random_tensor({5}, rng));
    return ad::gelu(ad::linear(x, w, b)).value();
  };
  EXPECT_TRUE(run().same_values(run()));
}
