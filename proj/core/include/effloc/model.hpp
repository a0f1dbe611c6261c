#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "effloc/config.hpp"
#include "effloc/ops.hpp"
#include "effloc/rng.hpp"
#include "effloc/tensor.hpp"

namespace effloc {

/// Ordered collection of named tensors. Parameters are trainable and take
/// gradients; buffers (batch-statistics running moments) persist in
/// checkpoints but stay off the tape. Names are unique across both groups.
class ParamStore {
 public:
  Tensor add_param(const std::string& name, Tensor t);
  Tensor add_buffer(const std::string& name, Tensor t);

  bool has(const std::string& name) const;
  Tensor get(const std::string& name) const;

  const std::vector<std::pair<std::string, Tensor>>& params() const {
    return params_;
  }
  const std::vector<std::pair<std::string, Tensor>>& buffers() const {
    return buffers_;
  }

  /// Total number of stored parameter scalars.
  std::size_t parameter_count() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor>> params_, buffers_;
  std::unordered_map<std::string, std::size_t> params_by_name_,
      buffers_by_name_;
};

struct BatchNormLayer {
  Tensor gamma, beta, running_mean, running_var;
  static BatchNormLayer create(ParamStore& store, const std::string& prefix,
                               std::size_t channels);
  Tensor forward(const Tensor& x, bool training) const;
};

/// Stride-s convolution (no bias; the following norm carries the shift),
/// batch normalization, optional smooth activation.
struct ConvBnLayer {
  Tensor weight;
  BatchNormLayer bn;
  std::size_t stride = 1, padding = 0;
  bool activated = false;
  static ConvBnLayer create(ParamStore& store, const std::string& prefix,
                            std::size_t cin, std::size_t cout, std::size_t k,
                            std::size_t stride, bool activated, Rng& rng);
  Tensor forward(const Tensor& x, bool training) const;
};

/// Channel-split grouped attention with cascading heads. The input feature
/// map is flattened to h*w tokens, layer-normalized, and split into one
/// channel group per head; head j > 1 consumes its split plus the previous
/// head's output. Query/key projections carry no bias (a key bias shifts
/// every score in a row by the same amount, which the softmax ignores).
struct AttentionLayer {
  std::size_t channels = 0, num_heads = 0, qk_dim = 0, v_dim = 0;
  bool literal_outer_softmax = false;
  Tensor ln_gamma, ln_beta;
  struct Head {
    Tensor wq, wk, wv, bv;
  };
  std::vector<Head> heads;
  Tensor wl, bl;

  static AttentionLayer create(ParamStore& store, const std::string& prefix,
                               std::size_t channels, std::size_t num_heads,
                               std::size_t qk_dim, std::size_t v_dim,
                               bool literal_outer_softmax, Rng& rng);

  /// x: [B,C,h,w] -> [B,C,h,w] (no residual; the block adds it).
  /// `score_shift` adds a constant to every pre-softmax score; a diagnostic
  /// hook for the shift-invariance property.
  Tensor forward(const Tensor& x, double score_shift = 0.0) const;
};

/// Depthwise token interaction followed by a feed-forward layer, each under
/// its own residual connection.
struct TokenFfnPair {
  Tensor dw_weight;
  BatchNormLayer dw_bn;
  Tensor ffn_w1, ffn_w2;
  BatchNormLayer ffn_bn1, ffn_bn2;
  std::size_t dw_kernel = 3;
  static TokenFfnPair create(ParamStore& store, const std::string& prefix,
                             std::size_t channels, std::size_t hidden,
                             std::size_t dw_kernel, Rng& rng);
  Tensor forward(const Tensor& x, bool training) const;
};

/// N x (token interaction + FFN), one attention layer, N x (token
/// interaction + FFN); every sublayer residual.
struct SandwichBlock {
  std::vector<TokenFfnPair> pre, post;
  AttentionLayer attn;
  static SandwichBlock create(ParamStore& store, const std::string& prefix,
                              const ModelConfig& cfg, std::size_t stage,
                              Rng& rng);
  Tensor forward(const Tensor& x, bool training) const;
};

/// The full architecture: overlapping patch embedding, three hierarchical
/// stages of sandwich blocks joined by overlapping stride-2 downsamples, a
/// pooled MLP head regressing [position(3), log-quaternion(3)].
class EffLocModel {
 public:
  EffLocModel(const ModelConfig& cfg, std::uint64_t init_seed);

  /// images: [B,3,R,R], intensities in [-1,1]. Returns [B,6].
  /// `dropout_rng` is required only in training mode with dropout_p > 0.
  Tensor forward(const Tensor& images, Rng* dropout_rng = nullptr);

  /// Patch embedding alone: [B,3,R,R] -> [B,D1,R/f,R/f].
  Tensor embed(const Tensor& images);

  void set_training(bool training) { training_ = training; }
  bool training() const { return training_; }

  const ModelConfig& config() const { return cfg_; }
  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }
  std::size_t parameter_count() const { return store_.parameter_count(); }
  void zero_grad() { store_.zero_grad(); }

 private:
  ModelConfig cfg_;
  bool training_ = false;
  ParamStore store_;
  std::vector<ConvBnLayer> embed_;
  std::vector<std::vector<SandwichBlock>> stages_;
  std::vector<ConvBnLayer> downsamples_;
  Tensor head_w1_, head_b1_, head_w2_, head_b2_;
};

}  // namespace effloc
