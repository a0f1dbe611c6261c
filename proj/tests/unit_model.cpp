#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "effloc/config.hpp"
#include "effloc/errors.hpp"
#include "effloc/loss.hpp"
#include "effloc/model.hpp"
#include "effloc/ops.hpp"

using namespace effloc;

TEST_CASE("shipped configs carry the published stage layouts") {
  const ModelConfig full = config_by_name("effloc");
  CHECK(full.widths == std::array<std::size_t, 3>{192, 288, 384});
  CHECK(full.depths == std::array<std::size_t, 3>{1, 3, 4});
  CHECK(full.heads == std::array<std::size_t, 3>{3, 3, 4});

  const ModelConfig small = config_by_name("effloc-small");
  CHECK(small.widths == std::array<std::size_t, 3>{128, 256, 384});
  CHECK(small.depths == std::array<std::size_t, 3>{1, 2, 3});
  CHECK(small.heads == std::array<std::size_t, 3>{4, 4, 4});

  const ModelConfig xs = config_by_name("effloc-xs");
  CHECK(xs.widths == std::array<std::size_t, 3>{128, 240, 320});
  CHECK(xs.heads == std::array<std::size_t, 3>{4, 3, 4});

  const ModelConfig tiny = config_by_name("tiny");
  CHECK(tiny.widths == std::array<std::size_t, 3>{16, 24, 32});
  for (std::size_t s = 0; s < 3; ++s) {
    CHECK(tiny.widths[s] % tiny.heads[s] == 0);
  }

  CHECK_THROWS_AS(config_by_name("bogus"), ConfigError);
}

TEST_CASE("config text round-trips exactly") {
  ModelConfig cfg = config_by_name("effloc-xs");
  cfg.dropout_p = 0.37;
  const ModelConfig back = ModelConfig::from_text(cfg.to_text());
  CHECK(back.to_text() == cfg.to_text());
  CHECK(back.widths == cfg.widths);
  CHECK(back.ffn_expansion == cfg.ffn_expansion);
  CHECK(back.dropout_p == cfg.dropout_p);
}

TEST_CASE("config validation rejects structural violations") {
  ModelConfig cfg = config_by_name("tiny");
  cfg.heads = {3, 2, 2};  // 16 % 3 != 0
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = config_by_name("tiny");
  cfg.input_resolution = 60;  // not divisible by 8*4
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = config_by_name("tiny");
  cfg.ffn_expansion = 0.3;  // 16 * 0.3 not integral
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  CHECK_THROWS_AS(ModelConfig::from_text("nonsense = 1\n"), ConfigError);
}

TEST_CASE("embed output shape follows the downsample factor") {
  ModelConfig tiny = config_by_name("tiny");
  EffLocModel model(tiny, 1);
  Rng rng(5);
  Tensor images = Tensor::uniform({2, 3, 64, 64}, -1, 1, rng);
  Tensor x = model.embed(images);
  CHECK(x.shape() == Shape{2, 16, 8, 8});

  // Same widths at a 16x factor: 64 / 16 = 4.
  ModelConfig f16 = tiny;
  f16.embed_downsample_factor = 16;
  f16.embed_base = 2;
  f16.validate();
  EffLocModel model16(f16, 1);
  CHECK(model16.embed(images).shape() == Shape{2, 16, 4, 4});
}

TEST_CASE("full-size embed matches the published geometry") {
  const ModelConfig cfg = config_by_name("effloc");
  CHECK(cfg.input_resolution == 256);
  CHECK(cfg.embed_downsample_factor == 16);
  CHECK(cfg.stage_resolution(0) == 16);
  CHECK(cfg.widths[0] == 192);  // so the embed yields 192 x 16 x 16
  CHECK(cfg.stage_resolution(1) == 8);
  CHECK(cfg.stage_resolution(2) == 4);
}

TEST_CASE("patches overlap: pixels outside the stride tile reach an output") {
  ModelConfig cfg = config_by_name("tiny");
  EffLocModel model(cfg, 3);
  model.set_training(false);
  Rng rng(7);
  Tensor images = Tensor::uniform({1, 3, 64, 64}, -1, 1, rng);
  Tensor base = model.embed(images);

  // Output cell (1,1) owns the non-overlapping tile [8,16)x[8,16), but the
  // stacked 3x3 stride-2 kernels give it a 15-pixel receptive field reaching
  // back to input (1,1). Poking (5,5) - strictly outside its tile - must
  // change it.
  Tensor poked = images.clone();
  const std::size_t R = 64;
  poked.values()[(0 * R + 5) * R + 5] += 0.9;
  Tensor after = model.embed(poked);
  double diff = 0.0;
  const std::size_t plane = 8 * 8;
  const std::size_t cell = 1 * 8 + 1;
  for (std::size_t c = 0; c < 16; ++c) {
    diff = std::max(diff, std::fabs(after.values()[c * plane + cell] -
                                    base.values()[c * plane + cell]));
  }
  CHECK(diff > 0.0);

  // The far side of the image stays untouched (locality sanity check).
  const std::size_t far_cell = 7 * 8 + 7;
  for (std::size_t c = 0; c < 16; ++c) {
    CHECK(after.values()[c * plane + far_cell] ==
          base.values()[c * plane + far_cell]);
  }
}

TEST_CASE("a zero-weight block is the identity map") {
  ModelConfig cfg = config_by_name("tiny");
  Rng init(9);
  ParamStore store;
  SandwichBlock block = SandwichBlock::create(store, "b", cfg, 0, init);
  for (const auto& [name, t] : store.params()) {
    Tensor(t).values().assign(t.numel(), 0.0);
  }
  Rng rng(10);
  Tensor x = Tensor::uniform({2, 16, 4, 4}, -1, 1, rng);
  Tensor y = block.forward(x, /*training=*/false);
  CHECK(y.shape() == x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    CHECK(y.values()[i] == x.values()[i]);
  }
}

TEST_CASE("block output shape equals input shape") {
  ModelConfig cfg = config_by_name("tiny");
  Rng init(11);
  ParamStore store;
  SandwichBlock block = SandwichBlock::create(store, "b", cfg, 1, init);
  Rng rng(12);
  Tensor x = Tensor::uniform({3, 24, 4, 4}, -1, 1, rng);
  CHECK(block.forward(x, false).shape() == x.shape());
}

TEST_CASE("forward yields one six-vector per image") {
  ModelConfig cfg = config_by_name("tiny");
  EffLocModel model(cfg, 21);
  model.set_training(false);
  Rng rng(22);
  Tensor images = Tensor::uniform({2, 3, 64, 64}, -1, 1, rng);
  Tensor out = model.forward(images);
  CHECK(out.shape() == Shape{2, 6});
  CHECK(out.all_finite());
}

TEST_CASE("eval forward is deterministic") {
  ModelConfig cfg = config_by_name("tiny");
  EffLocModel model(cfg, 23);
  model.set_training(false);
  Rng rng(24);
  Tensor images = Tensor::uniform({2, 3, 64, 64}, -1, 1, rng);
  Tensor a = model.forward(images);
  Tensor b = model.forward(images);
  CHECK(a.values() == b.values());
}

TEST_CASE("identically seeded models produce identical outputs") {
  ModelConfig cfg = config_by_name("tiny");
  EffLocModel m1(cfg, 77), m2(cfg, 77);
  m1.set_training(false);
  m2.set_training(false);
  Rng rng(25);
  Tensor images = Tensor::uniform({1, 3, 64, 64}, -1, 1, rng);
  CHECK(m1.forward(images).values() == m2.forward(images).values());
}

TEST_CASE("permuting the batch permutes the outputs identically") {
  ModelConfig cfg = config_by_name("tiny");
  EffLocModel model(cfg, 26);
  model.set_training(false);
  Rng rng(27);
  Tensor a = Tensor::uniform({1, 3, 64, 64}, -1, 1, rng);
  Tensor b = Tensor::uniform({1, 3, 64, 64}, -1, 1, rng);
  Tensor ab = concat({a, b}, 0);
  Tensor ba = concat({b, a}, 0);
  Tensor out_ab = model.forward(ab);
  Tensor out_ba = model.forward(ba);
  for (std::size_t j = 0; j < 6; ++j) {
    CHECK(out_ab.values()[j] == out_ba.values()[6 + j]);
    CHECK(out_ab.values()[6 + j] == out_ba.values()[j]);
  }
}

TEST_CASE("wrong resolution or channel count is a dimension error") {
  ModelConfig cfg = config_by_name("tiny");
  EffLocModel model(cfg, 28);
  CHECK_THROWS_AS(model.forward(Tensor::zeros({1, 3, 32, 32})),
                  DimensionError);
  CHECK_THROWS_AS(model.forward(Tensor::zeros({1, 1, 64, 64})),
                  DimensionError);
}

TEST_CASE("head channel splits tile the width exactly") {
  for (const auto& name : config_names()) {
    const ModelConfig cfg = config_by_name(name);
    for (std::size_t s = 0; s < 3; ++s) {
      CHECK(cfg.head_split(s) * cfg.heads[s] == cfg.widths[s]);
      CHECK(cfg.value_dim(s) == cfg.head_split(s));
    }
  }
}

TEST_CASE("every parameter receives gradient at init") {
  ModelConfig cfg = config_by_name("tiny");
  cfg.dropout_p = 0.0;  // a dropped unit would null its fan-out gradient
  EffLocModel model(cfg, 31);
  model.set_training(true);
  Rng rng(32);
  Tensor images = Tensor::uniform({2, 3, 64, 64}, -1, 1, rng);
  std::vector<Pose> truth(2);
  truth[0].position = {0.3, -0.2, 0.1};
  truth[1].position = {-0.5, 0.4, 0.2};
  truth[0].orientation = canonicalize(quat_exp({0.1, 0.05, -0.2}));
  truth[1].orientation = canonicalize(quat_exp({-0.15, 0.1, 0.12}));
  LossState state = LossState::init();
  Tensor loss = pose_loss(model.forward(images), truth, state);
  backward(loss);
  for (const auto& [name, t] : model.store().params()) {
    REQUIRE(t.has_grad());
    bool any_nonzero = false;
    for (double g : t.grad()) {
      if (g != 0.0) any_nonzero = true;
    }
    INFO("dead parameter: " << name);
    CHECK(any_nonzero);
  }
  CHECK(state.alpha.grad()[0] != 0.0);
  CHECK(state.beta.grad()[0] != 0.0);
}

TEST_CASE("parameter names are unique and grouped by module") {
  ModelConfig cfg = config_by_name("tiny");
  EffLocModel model(cfg, 33);
  std::vector<std::string> names;
  for (const auto& [name, t] : model.store().params()) names.push_back(name);
  std::vector<std::string> sorted = names;
  std::sort(sorted.begin(), sorted.end());
  CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
  CHECK(model.store().has("head.fc1.weight"));
  CHECK(model.store().has("stage1.block1.attn.h1.wq"));
  CHECK(model.store().has("embed.c1.bn.running_mean"));
}
