#pragma once

#include <vector>

#include "effloc/rng.hpp"
#include "effloc/tensor.hpp"

namespace effloc {

// Arithmetic. add/mul/sub broadcast with trailing-aligned rules (a dimension
// must match or be 1; missing leading dimensions broadcast).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor neg(const Tensor& a);

// Elementwise nonlinearities.
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);  // exact erf form
Tensor exp(const Tensor& a);
Tensor abs(const Tensor& a);

// Reductions.
Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, std::size_t axis, bool keepdim = false);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, std::size_t axis, bool keepdim = false);

// Shape manipulation (all copy; round-trips are bit-identical).
Tensor reshape(const Tensor& a, Shape new_shape);
Tensor transpose(const Tensor& a, std::size_t d0, std::size_t d1);
Tensor permute(const Tensor& a, const std::vector<std::size_t>& perm);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
std::vector<Tensor> split(const Tensor& a, std::size_t axis,
                          const std::vector<std::size_t>& sizes);
Tensor narrow(const Tensor& a, std::size_t axis, std::size_t start,
              std::size_t len);

/// Batched matrix product: a [.., m, k] x b [.., k, n] -> [.., m, n].
/// Leading dimensions broadcast. Gradients: dA = dC.B^T, dB = A^T.dC, with
/// broadcast dimensions sum-reduced.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Cross-correlation (deep-learning convention, no kernel flip).
/// x [B,Cin,H,W], w [Cout,Cin,kh,kw] -> [B,Cout,H',W'] with
/// H' = (H + 2 pad - kh) / stride + 1.
Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride,
              std::size_t padding);

/// One filter per channel, no cross-channel mixing.
/// x [B,C,H,W], w [C,1,kh,kw] -> [B,C,H',W'].
Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, std::size_t stride,
                        std::size_t padding);

/// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& a, std::size_t axis);

/// Normalization over the last axis with learnable affine. The epsilon is
/// small enough that the pre-affine output has variance 1 to ~1e-12.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-12);

/// Per-channel batch normalization of [B,C,H,W]. In training mode the batch
/// statistics normalize and the running moments (plain value buffers, not on
/// the tape) are updated in place; in eval mode the running moments are used.
Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    Tensor& running_mean, Tensor& running_var, bool training,
                    double momentum = 0.1, double eps = 1e-5);

/// Inverted dropout: active only when training, kept values scaled by
/// 1/(1-p). Identity (same handle) in eval mode or when p == 0.
Tensor dropout(const Tensor& x, double p, bool training, Rng& rng);

/// [B,C,H,W] -> [B,C], mean over the spatial extent.
Tensor global_average_pool(const Tensor& x);

}  // namespace effloc
