#include <benchmark/benchmark.h>

#include "effloc/config.hpp"
#include "effloc/loss.hpp"
#include "effloc/model.hpp"
#include "effloc/ops.hpp"
#include "effloc/profiler.hpp"
#include "effloc/scene.hpp"

using namespace effloc;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  return Tensor::uniform(std::move(shape), -1.0, 1.0, rng);
}

}  // namespace

static void BM_Matmul(benchmark::State& state) {
  const std::size_t n = std::size_t(state.range(0));
  Tensor a = random_tensor({n, n}, 1);
  Tensor b = random_tensor({n, n}, 2);
  for (auto _ : state) {
    Tensor c = matmul(a, b);
    benchmark::DoNotOptimize(c.values().data());
  }
  state.SetItemsProcessed(int64_t(state.iterations()) * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

static void BM_Conv2d(benchmark::State& state) {
  const std::size_t c = std::size_t(state.range(0));
  Tensor x = random_tensor({1, c, 32, 32}, 3);
  Tensor w = random_tensor({c, c, 3, 3}, 4);
  for (auto _ : state) {
    Tensor y = conv2d(x, w, 1, 1);
    benchmark::DoNotOptimize(y.values().data());
  }
}
BENCHMARK(BM_Conv2d)->Arg(8)->Arg(16)->Arg(32);

static void BM_DepthwiseConv2d(benchmark::State& state) {
  const std::size_t c = std::size_t(state.range(0));
  Tensor x = random_tensor({1, c, 32, 32}, 5);
  Tensor w = random_tensor({c, 1, 3, 3}, 6);
  for (auto _ : state) {
    Tensor y = depthwise_conv2d(x, w, 1, 1);
    benchmark::DoNotOptimize(y.values().data());
  }
}
BENCHMARK(BM_DepthwiseConv2d)->Arg(16)->Arg(64);

static void BM_Attention(benchmark::State& state) {
  ParamStore store;
  Rng rng(7);
  const std::size_t C = std::size_t(state.range(0));
  AttentionLayer layer =
      AttentionLayer::create(store, "a", C, 4, 16, C / 4, false, rng);
  Tensor x = random_tensor({1, C, 8, 8}, 8);
  for (auto _ : state) {
    Tensor y = layer.forward(x);
    benchmark::DoNotOptimize(y.values().data());
  }
}
BENCHMARK(BM_Attention)->Arg(64)->Arg(128);

static void BM_TinyForward(benchmark::State& state) {
  EffLocModel model(config_by_name("tiny"), 9);
  model.set_training(false);
  Tensor images = random_tensor({std::size_t(state.range(0)), 3, 64, 64}, 10);
  NoGradGuard no_grad;
  for (auto _ : state) {
    Tensor out = model.forward(images);
    benchmark::DoNotOptimize(out.values().data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TinyForward)->Arg(1)->Arg(8);

static void BM_TinyTrainStep(benchmark::State& state) {
  EffLocModel model(config_by_name("tiny"), 11);
  model.set_training(true);
  LossState loss_state = LossState::init();
  Tensor images = random_tensor({8, 3, 64, 64}, 12);
  std::vector<Pose> truth(8);
  Rng drop(13);
  for (auto _ : state) {
    model.zero_grad();
    Tensor loss = pose_loss(model.forward(images, &drop), truth, loss_state);
    backward(loss);
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK(BM_TinyTrainStep);

static void BM_RenderScene(benchmark::State& state) {
  const SceneSpec scene = default_scene();
  Pose pose;
  pose.position = {0.2, -0.1, 0.3};
  for (auto _ : state) {
    Tensor img = render(scene, pose);
    benchmark::DoNotOptimize(img.values().data());
  }
}
BENCHMARK(BM_RenderScene);

static void BM_Profile(benchmark::State& state) {
  const ModelConfig cfg = config_by_name("effloc");
  for (auto _ : state) {
    ProfileReport rep = profile(cfg, 256);
    benchmark::DoNotOptimize(rep.rows.data());
  }
}
BENCHMARK(BM_Profile);

BENCHMARK_MAIN();
