#include <gtest/gtest.h>

#include <cstring>

#include "cvit/autodiff.hpp"
#include "cvit/errors.hpp"
#include "cvit/lora.hpp"
#include "cvit/ops.hpp"
#include "cvit/random.hpp"
#include "support/oracles.hpp"

using namespace cvit;
using T64 = Tensor<double>;

namespace {

T64 random_tensor(Rng& rng, Shape shape, double spread = 1.0) {
  T64 t(std::move(shape));
  for (double& v : t.mutable_data()) v = rng.uniform(-spread, spread);
  return t;
}

void randomize_b(ViTModel<double>& model, std::uint64_t seed) {
  Rng rng(seed);
  for (const auto& adapter : adapters(model)) {
    T64 b = adapter.b;
    for (double& v : b.mutable_data()) v = 0.05 * rng.normal();
  }
}

bool bitwise_equal(const T64& a, const T64& b) {
  return a.numel() == b.numel() &&
         std::memcmp(a.data().data(), b.data().data(), a.data().size_bytes()) == 0;
}

}  // namespace

TEST(LoraConfig, Validation) {
  LoraConfig c;
  EXPECT_NO_THROW(c.validate(768));
  EXPECT_DOUBLE_EQ(c.scaling(), 0.5);
  c.rank = 0;
  EXPECT_THROW(c.validate(768), ParameterError);
  c.rank = 768;
  EXPECT_THROW(c.validate(768), ParameterError);
  c = LoraConfig{};
  c.alpha = 0.0;
  EXPECT_THROW(c.validate(768), ParameterError);
  c = LoraConfig{};
  c.targets = {};
  EXPECT_THROW(c.validate(768), ParameterError);
  c.targets = {LoraTarget::kValue, LoraTarget::kValue};
  EXPECT_THROW(c.validate(768), ParameterError);
  EXPECT_EQ(parse_lora_target("q"), LoraTarget::kQuery);
  EXPECT_THROW(parse_lora_target("k"), ParameterError);
}

TEST(LoraCount, ClosedForms) {
  const ViTConfig b16 = ViTConfig::vit_b16();
  LoraConfig lora;
  EXPECT_EQ(closed_form_adapter_params(b16, lora), 12u * 2 * 2 * 768 * 8);
  EXPECT_EQ(closed_form_adapter_params(b16, lora), 294912u);
  lora.rank = 4;
  EXPECT_EQ(closed_form_adapter_params(b16, lora), 147456u);

  ViTConfig tiny = ViTConfig::toy();
  tiny.depth = 1;
  tiny.embed_dim = 8;
  LoraConfig q_only{2, 4.0, {LoraTarget::kQuery}};
  EXPECT_EQ(closed_form_adapter_params(tiny, q_only), 32u);
}

TEST(Inject, NamesShapesAndInit) {
  ViTModel<float> model(ViTConfig::toy(), 0);
  const std::size_t base = count_params(model, false);
  inject(model, LoraConfig{4, 4.0, {LoraTarget::kQuery, LoraTarget::kValue}}, 1);
  const auto list = adapters(model);
  ASSERT_EQ(list.size(), 4u);
  EXPECT_EQ(list[0].owner, "blocks.0.attn.w_q");
  EXPECT_EQ(list[1].owner, "blocks.0.attn.w_v");
  EXPECT_TRUE(model.registry().contains("lora.blocks.1.attn.w_v.b"));
  EXPECT_EQ(list[0].a.shape(), (Shape{4, 16}));
  EXPECT_EQ(list[0].b.shape(), (Shape{16, 4}));
  for (float v : list[0].b.data()) EXPECT_EQ(v, 0.0f);
  double var = 0.0;
  for (float v : list[0].a.data()) var += static_cast<double>(v) * v;
  EXPECT_NEAR(std::sqrt(var / 64.0), kLoraInitStd, 0.01);
  EXPECT_EQ(count_params(model, false), base + 4 * 2 * 16 * 4);
  EXPECT_THROW(inject(model, LoraConfig{}, 2), StateError);
}

TEST(Inject, ViTB16AdapterCount) {
  ViTModel<float> model(ViTConfig::vit_b16(), 0, ViTModel<float>::Init::kZeros);
  inject(model, LoraConfig{}, 0);
  EXPECT_EQ(adapters(model).size(), 24u);
  std::size_t total = 0;
  for (const auto& a : adapters(model)) total += a.a.numel() + a.b.numel();
  EXPECT_EQ(total, 294912u);
}

TEST(LoraProject, ZeroBEqualsBaseProjectionExactly) {
  Rng rng(1);
  const T64 x = random_tensor(rng, {3, 6});
  const T64 w = random_tensor(rng, {6, 6});
  const T64 bias = random_tensor(rng, {6});
  const LoraAdapter<double> adapter{"p", random_tensor(rng, {2, 6}), T64::zeros({6, 2})};
  EXPECT_TRUE(bitwise_equal(lora_forward(x, w, bias, adapter, 4.0, 2), linear(x, w, bias)));
}

TEST(LoraProject, AlphaScalesContributionLinearly) {
  Rng rng(2);
  const T64 x = random_tensor(rng, {3, 6});
  const T64 w = random_tensor(rng, {6, 6});
  const LoraAdapter<double> adapter{"p", random_tensor(rng, {2, 6}), random_tensor(rng, {6, 2})};
  const auto base = oracle::values_of(linear(x, w, T64{}));
  const auto one = oracle::values_of(lora_forward(x, w, T64{}, adapter, 3.0, 2));
  const auto two = oracle::values_of(lora_forward(x, w, T64{}, adapter, 6.0, 2));
  for (std::size_t i = 0; i < base.size(); ++i) {
    EXPECT_NEAR(two[i] - base[i], 2.0 * (one[i] - base[i]), 1e-12);
  }
}

TEST(LoraProject, MatchesDenseOracle) {
  Rng rng(3);
  const std::size_t d = 6, r = 2, l = 3;
  const double alpha = 4.0;
  const T64 x = random_tensor(rng, {l, d});
  const T64 w = random_tensor(rng, {d, d});
  const T64 bias = random_tensor(rng, {d});
  const LoraAdapter<double> adapter{"p", random_tensor(rng, {r, d}), random_tensor(rng, {d, r})};
  const auto dense = oracle::effective_weight(oracle::values_of(w), oracle::values_of(adapter.a),
                                              oracle::values_of(adapter.b), alpha / r, d, r);
  const auto want = oracle::linear(oracle::values_of(x), dense, oracle::values_of(bias), l, d, d);
  const auto got = oracle::values_of(lora_forward(x, w, bias, adapter, alpha, r));
  EXPECT_LE(oracle::max_relative_error(got, want, 1e-9), 1e-6);
}

TEST(LoraProject, ShapeErrors) {
  Rng rng(4);
  const T64 x = random_tensor(rng, {3, 6});
  const T64 w = random_tensor(rng, {6, 6});
  const LoraAdapter<double> adapter{"p", random_tensor(rng, {2, 6}), random_tensor(rng, {6, 2})};
  EXPECT_THROW(lora_forward(x, w, T64{}, adapter, 4.0, 3), DimensionError);
  EXPECT_THROW(lora_project(x, w, T64{}, random_tensor(rng, {2, 5}), adapter.b, 1.0), DimensionError);
  EXPECT_THROW(lora_project(x, w, T64{}, adapter.a, random_tensor(rng, {6, 3}), 1.0), DimensionError);
}

TEST(Merge, ZeroAdapterIsBitwiseIdentity) {
  Rng rng(5);
  const T64 w = random_tensor(rng, {6, 6});
  const LoraAdapter<double> adapter{"p", random_tensor(rng, {2, 6}), T64::zeros({6, 2})};
  EXPECT_TRUE(bitwise_equal(merge(w, adapter, 4.0, 2), w));
}

TEST(Merge, SubtractingUpdateRecoversWeight) {
  Rng rng(6);
  const std::size_t d = 6, r = 2;
  const T64 w = random_tensor(rng, {d, d});
  const LoraAdapter<double> adapter{"p", random_tensor(rng, {r, d}), random_tensor(rng, {d, r})};
  const auto merged = oracle::values_of(merge(w, adapter, 4.0, r));
  const auto update = oracle::matmul(oracle::values_of(adapter.b), oracle::values_of(adapter.a), d, r, d);
  auto recovered = merged;
  for (std::size_t i = 0; i < recovered.size(); ++i) recovered[i] -= 2.0 * update[i];
  EXPECT_LE(oracle::max_scaled_error(recovered, oracle::values_of(w)), 1e-6);
}

TEST(Model, InjectionPreservesLogitsExactly) {
  NoGradGuard guard;
  Rng rng(7);
  ViTModel<float> model(ViTConfig::toy(), 3);
  std::vector<Tensor<float>> before;
  std::vector<FloatImage<float>> inputs;
  for (int i = 0; i < 10; ++i) {
    inputs.push_back(oracle::random_float_image<float>(rng, 16));
    before.push_back(forward(model, inputs.back()));
  }
  inject(model, LoraConfig{4, 4.0, {LoraTarget::kQuery, LoraTarget::kValue}}, 9);
  for (int i = 0; i < 10; ++i) {
    const auto after = forward(model, inputs[i]);
    EXPECT_EQ(0, std::memcmp(after.data().data(), before[i].data().data(), after.data().size_bytes()));
  }
}

TEST(Model, MergedForwardMatchesAdapted) {
  NoGradGuard guard;
  Rng rng(8);
  ViTModel<double> model(ViTConfig::toy(), 4);
  inject(model, LoraConfig{4, 4.0, {LoraTarget::kQuery, LoraTarget::kValue}}, 5);
  randomize_b(model, 6);
  const ViTModel<double> merged = merge_adapters(model);
  EXPECT_FALSE(merged.lora().has_value());
  EXPECT_FALSE(merged.registry().contains("lora.blocks.0.attn.w_q.a"));
  EXPECT_EQ(count_params(merged, false), closed_form_params(model.config()).total);
  for (int i = 0; i < 10; ++i) {
    const auto img = oracle::random_float_image<double>(rng, 16);
    const auto a = oracle::values_of(forward(model, img));
    const auto m = oracle::values_of(forward(merged, img));
    EXPECT_LE(oracle::max_relative_error(m, a, 1e-9), 1e-5);
    // The adapted model also agrees with the straight-line oracle.
    EXPECT_LE(oracle::max_relative_error(a, oracle::vit_logits(model, img), 1e-9), 1e-5);
  }
}

TEST(Model, AdapterGradientsReachBothFactors) {
  ViTModel<double> model(ViTConfig::toy(), 4);
  inject(model, LoraConfig{4, 4.0, {LoraTarget::kQuery, LoraTarget::kValue}}, 5);
  for (auto& adapter : adapters(model)) {
    T64 a = adapter.a;
    T64 b = adapter.b;
    a.set_requires_grad(true);
    b.set_requires_grad(true);
  }
  Rng rng(9);
  T64 loss = cross_entropy(forward(model, oracle::random_float_image<double>(rng, 16)), 2);
  backward(loss);
  for (const auto& adapter : adapters(model)) {
    // B = 0 at init: B receives gradient, A's gradient is exactly zero.
    ASSERT_TRUE(adapter.b.has_grad());
    double b_norm = 0.0;
    for (double g : adapter.b.grad()) b_norm += std::abs(g);
    EXPECT_GT(b_norm, 0.0) << adapter.owner;
    if (adapter.a.has_grad()) {
      for (double g : adapter.a.grad()) EXPECT_EQ(g, 0.0);
    }
  }
}
