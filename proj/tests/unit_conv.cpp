#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "effloc/errors.hpp"
#include "effloc/grad_check.hpp"
#include "effloc/ops.hpp"

using namespace effloc;

namespace {

// Independent oracle: the seven-nested-loop definition of strided, padded
// cross-correlation. Deliberately nothing in common with the library path.
std::vector<double> naive_conv2d(const std::vector<double>& x,
                                 const std::vector<double>& w, std::size_t B,
                                 std::size_t Cin, std::size_t H, std::size_t W,
                                 std::size_t Cout, std::size_t kh,
                                 std::size_t kw, std::size_t stride,
                                 std::size_t pad, bool depthwise) {
  const std::size_t Ho = (H + 2 * pad - kh) / stride + 1;
  const std::size_t Wo = (W + 2 * pad - kw) / stride + 1;
  std::vector<double> out(B * Cout * Ho * Wo, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t co = 0; co < Cout; ++co)
      for (std::size_t oy = 0; oy < Ho; ++oy)
        for (std::size_t ox = 0; ox < Wo; ++ox) {
          double acc = 0.0;
          for (std::size_t ci = 0; ci < (depthwise ? 1 : Cin); ++ci)
            for (std::size_t ky = 0; ky < kh; ++ky)
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const long iy = long(oy * stride + ky) - long(pad);
                const long ix = long(ox * stride + kx) - long(pad);
                if (iy < 0 || ix < 0 || iy >= long(H) || ix >= long(W))
                  continue;
                const std::size_t cin_idx = depthwise ? co : ci;
                const double xv =
                    x[((b * Cin + cin_idx) * H + std::size_t(iy)) * W +
                      std::size_t(ix)];
                const double wv =
                    w[((co * (depthwise ? 1 : Cin) + ci) * kh + ky) * kw + kx];
                acc += xv * wv;
              }
          out[((b * Cout + co) * Ho + oy) * Wo + ox] = acc;
        }
  return out;
}

void compare_with_oracle(const Tensor& got, const std::vector<double>& want) {
  REQUIRE(got.numel() == want.size());
  double max_diff = 0.0;
  for (std::size_t i = 0; i < want.size(); ++i) {
    max_diff = std::max(max_diff, std::fabs(got.values()[i] - want[i]));
  }
  CHECK(max_diff < 1e-10);
}

}  // namespace

TEST_CASE("3x3 ones kernel over 3x3 ones sums to nine") {
  Tensor x = Tensor::ones({1, 1, 3, 3});
  Tensor w = Tensor::ones({1, 1, 3, 3});
  Tensor y = conv2d(x, w, 1, 0);
  CHECK(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y.item() == 9.0);
}

TEST_CASE("1x1 identity kernel leaves the input unchanged") {
  Rng rng(11);
  Tensor x = Tensor::uniform({2, 1, 4, 5}, -1, 1, rng);
  Tensor w = Tensor::ones({1, 1, 1, 1});
  CHECK(conv2d(x, w, 1, 0).values() == x.values());
}

TEST_CASE("strided padded conv matches the loop oracle") {
  Rng rng(12);
  Tensor x = Tensor::uniform({2, 3, 8, 8}, -1, 1, rng);
  Tensor w = Tensor::uniform({4, 3, 3, 3}, -1, 1, rng);
  Tensor y = conv2d(x, w, 2, 1);
  CHECK(y.shape() == Shape{2, 4, 4, 4});
  compare_with_oracle(
      y, naive_conv2d(x.values(), w.values(), 2, 3, 8, 8, 4, 3, 3, 2, 1,
                      false));
}

TEST_CASE("conv output size follows the floor rule") {
  Tensor x = Tensor::zeros({1, 1, 7, 7});
  Tensor w = Tensor::zeros({1, 1, 3, 3});
  CHECK(conv2d(x, w, 2, 0).shape() == Shape{1, 1, 3, 3});
  CHECK(conv2d(x, w, 2, 1).shape() == Shape{1, 1, 4, 4});
}

TEST_CASE("kernel larger than the padded input is a dimension error") {
  Tensor x = Tensor::zeros({1, 1, 2, 2});
  Tensor w = Tensor::zeros({1, 1, 5, 5});
  CHECK_THROWS_AS(conv2d(x, w, 1, 1), DimensionError);
}

TEST_CASE("channel mismatch is a dimension error") {
  CHECK_THROWS_AS(
      conv2d(Tensor::zeros({1, 3, 4, 4}), Tensor::zeros({2, 4, 3, 3}), 1, 1),
      DimensionError);
}

TEST_CASE("random cases across strides and paddings match the oracle") {
  Rng rng(13);
  for (std::size_t stride : {std::size_t(1), std::size_t(2), std::size_t(3)}) {
    for (std::size_t pad : {std::size_t(0), std::size_t(1), std::size_t(2)}) {
      Tensor x = Tensor::uniform({2, 2, 7, 6}, -1, 1, rng);
      Tensor w = Tensor::uniform({3, 2, 3, 3}, -1, 1, rng);
      compare_with_oracle(conv2d(x, w, stride, pad),
                          naive_conv2d(x.values(), w.values(), 2, 2, 7, 6, 3,
                                       3, 3, stride, pad, false));
    }
  }
}

TEST_CASE("conv gradients match finite differences") {
  Rng rng(14);
  Tensor x = Tensor::uniform({2, 2, 5, 5}, -1, 1, rng, true);
  Tensor w = Tensor::uniform({3, 2, 3, 3}, -1, 1, rng, true);
  Tensor mask = Tensor::uniform({2, 3, 3, 3}, -1, 1, rng);
  const GradCheckReport rep = check_gradients(
      [&] { return sum(mul(conv2d(x, w, 2, 1), mask)); },
      {{"x", x}, {"w", w}}, 1e-5, 1e-6, 1e-3);
  CHECK(rep.ok());
}

TEST_CASE("depthwise identity kernels leave the input unchanged") {
  Rng rng(15);
  Tensor x = Tensor::uniform({1, 2, 4, 4}, -1, 1, rng);
  Tensor w = Tensor::zeros({2, 1, 3, 3});
  w.values()[4] = 1.0;   // center of channel 0 kernel
  w.values()[13] = 1.0;  // center of channel 1 kernel
  CHECK(depthwise_conv2d(x, w, 1, 1).values() == x.values());
}

TEST_CASE("depthwise channels are independent") {
  Rng rng(16);
  Tensor x = Tensor::uniform({1, 2, 5, 5}, -1, 1, rng);
  Tensor w = Tensor::uniform({2, 1, 3, 3}, -1, 1, rng);
  Tensor base = depthwise_conv2d(x, w, 1, 1);

  Tensor x2 = x.clone();
  for (std::size_t i = 0; i < 25; ++i) x2.values()[i] += 0.5;  // channel 0
  Tensor bumped = depthwise_conv2d(x2, w, 1, 1);

  const std::size_t plane = 25;
  bool channel0_changed = false;
  for (std::size_t i = 0; i < plane; ++i) {
    if (base.values()[i] != bumped.values()[i]) channel0_changed = true;
    CHECK(base.values()[plane + i] == bumped.values()[plane + i]);
  }
  CHECK(channel0_changed);
}

TEST_CASE("depthwise conv matches the loop oracle") {
  Rng rng(17);
  Tensor x = Tensor::uniform({2, 4, 6, 6}, -1, 1, rng);
  Tensor w = Tensor::uniform({4, 1, 3, 3}, -1, 1, rng);
  compare_with_oracle(
      depthwise_conv2d(x, w, 1, 1),
      naive_conv2d(x.values(), w.values(), 2, 4, 6, 6, 4, 3, 3, 1, 1, true));
}

TEST_CASE("depthwise kernel channel mismatch is a dimension error") {
  CHECK_THROWS_AS(depthwise_conv2d(Tensor::zeros({1, 3, 4, 4}),
                                   Tensor::zeros({4, 1, 3, 3}), 1, 1),
                  DimensionError);
}

TEST_CASE("depthwise gradients match finite differences") {
  Rng rng(18);
  Tensor x = Tensor::uniform({2, 3, 4, 4}, -1, 1, rng, true);
  Tensor w = Tensor::uniform({3, 1, 3, 3}, -1, 1, rng, true);
  Tensor mask = Tensor::uniform({2, 3, 4, 4}, -1, 1, rng);
  const GradCheckReport rep = check_gradients(
      [&] { return sum(mul(depthwise_conv2d(x, w, 1, 1), mask)); },
      {{"x", x}, {"w", w}}, 1e-5, 1e-6, 1e-3);
  CHECK(rep.ok());
}
