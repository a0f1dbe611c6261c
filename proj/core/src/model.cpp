#include "effloc/model.hpp"

#include <cmath>

#include "effloc/errors.hpp"

namespace effloc {

namespace {
constexpr double kInitSigma = 0.02;
}

// ---------------------------------------------------------------------------
// ParamStore

Tensor ParamStore::add_param(const std::string& name, Tensor t) {
  if (has(name)) throw ConfigError("duplicate parameter name: " + name);
  t.set_requires_grad(true);
  params_by_name_[name] = params_.size();
  params_.emplace_back(name, t);
  return t;
}

Tensor ParamStore::add_buffer(const std::string& name, Tensor t) {
  if (has(name)) throw ConfigError("duplicate buffer name: " + name);
  buffers_by_name_[name] = buffers_.size();
  buffers_.emplace_back(name, t);
  return t;
}

bool ParamStore::has(const std::string& name) const {
  return params_by_name_.count(name) || buffers_by_name_.count(name);
}

Tensor ParamStore::get(const std::string& name) const {
  auto it = params_by_name_.find(name);
  if (it != params_by_name_.end()) return params_[it->second].second;
  auto ib = buffers_by_name_.find(name);
  if (ib != buffers_by_name_.end()) return buffers_[ib->second].second;
  throw ConfigError("no tensor named " + name);
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

// ---------------------------------------------------------------------------
// Layers

BatchNormLayer BatchNormLayer::create(ParamStore& store,
                                      const std::string& prefix,
                                      std::size_t channels) {
  BatchNormLayer l;
  l.gamma = store.add_param(prefix + ".gamma", Tensor::ones({channels}));
  l.beta = store.add_param(prefix + ".beta", Tensor::zeros({channels}));
  l.running_mean =
      store.add_buffer(prefix + ".running_mean", Tensor::zeros({channels}));
  l.running_var =
      store.add_buffer(prefix + ".running_var", Tensor::ones({channels}));
  return l;
}

Tensor BatchNormLayer::forward(const Tensor& x, bool training) const {
  Tensor rm = running_mean, rv = running_var;
  return batch_norm2d(x, gamma, beta, rm, rv, training);
}

ConvBnLayer ConvBnLayer::create(ParamStore& store, const std::string& prefix,
                                std::size_t cin, std::size_t cout,
                                std::size_t k, std::size_t stride,
                                bool activated, Rng& rng) {
  ConvBnLayer l;
  l.weight = store.add_param(
      prefix + ".conv.weight",
      Tensor::truncated_normal({cout, cin, k, k}, kInitSigma, rng));
  l.bn = BatchNormLayer::create(store, prefix + ".bn", cout);
  l.stride = stride;
  l.padding = k / 2;
  l.activated = activated;
  return l;
}

Tensor ConvBnLayer::forward(const Tensor& x, bool training) const {
  Tensor y = conv2d(x, weight, stride, padding);
  y = bn.forward(y, training);
  return activated ? gelu(y) : y;
}

AttentionLayer AttentionLayer::create(ParamStore& store,
                                      const std::string& prefix,
                                      std::size_t channels,
                                      std::size_t num_heads,
                                      std::size_t qk_dim, std::size_t v_dim,
                                      bool literal_outer_softmax, Rng& rng) {
  if (channels % num_heads != 0) {
    throw ConfigError(prefix + ": " + std::to_string(channels) +
                      " channels cannot split across " +
                      std::to_string(num_heads) + " heads");
  }
  AttentionLayer l;
  l.channels = channels;
  l.num_heads = num_heads;
  l.qk_dim = qk_dim;
  l.v_dim = v_dim;
  l.literal_outer_softmax = literal_outer_softmax;
  l.ln_gamma = store.add_param(prefix + ".ln.gamma", Tensor::ones({channels}));
  l.ln_beta = store.add_param(prefix + ".ln.beta", Tensor::zeros({channels}));
  const std::size_t split = channels / num_heads;
  for (std::size_t j = 0; j < num_heads; ++j) {
    const std::string hp = prefix + ".h" + std::to_string(j + 1);
    Head h;
    h.wq = store.add_param(
        hp + ".wq", Tensor::truncated_normal({split, qk_dim}, kInitSigma, rng));
    h.wk = store.add_param(
        hp + ".wk", Tensor::truncated_normal({split, qk_dim}, kInitSigma, rng));
    h.wv = store.add_param(
        hp + ".wv", Tensor::truncated_normal({split, v_dim}, kInitSigma, rng));
    h.bv = store.add_param(hp + ".bv", Tensor::zeros({v_dim}));
    l.heads.push_back(h);
  }
  l.wl = store.add_param(
      prefix + ".wl",
      Tensor::truncated_normal({num_heads * v_dim, channels}, kInitSigma, rng));
  l.bl = store.add_param(prefix + ".bl", Tensor::zeros({channels}));
  return l;
}

Tensor AttentionLayer::forward(const Tensor& x, double score_shift) const {
  const std::size_t B = x.dim(0), C = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (C != channels) {
    throw DimensionError("attention: got " + std::to_string(C) +
                         " channels, layer built for " +
                         std::to_string(channels));
  }
  const std::size_t T = h * w;
  Tensor tokens = transpose(reshape(x, {B, C, T}), 1, 2);  // [B,T,C]
  tokens = layer_norm(tokens, ln_gamma, ln_beta);

  std::vector<std::size_t> sizes(num_heads, channels / num_heads);
  std::vector<Tensor> splits = split(tokens, 2, sizes);

  const double score_scale = 1.0 / std::sqrt(double(qk_dim));
  std::vector<Tensor> outs;
  outs.reserve(num_heads);
  Tensor prev;
  for (std::size_t j = 0; j < num_heads; ++j) {
    Tensor in = j == 0 ? splits[j] : add(splits[j], prev);
    Tensor q = matmul(in, heads[j].wq);
    Tensor k = matmul(in, heads[j].wk);
    Tensor v = add(matmul(in, heads[j].wv), heads[j].bv);
    Tensor scores = scale(matmul(q, transpose(k, 1, 2)), score_scale);
    if (score_shift != 0.0) {
      scores = add(scores, Tensor::scalar(score_shift));
    }
    Tensor attn = softmax(scores, 2);
    Tensor out = matmul(attn, v);  // [B,T,v]
    outs.push_back(out);
    prev = out;
  }
  Tensor cat = concat(outs, 2);  // [B,T,n*v]
  if (literal_outer_softmax) cat = softmax(cat, 2);
  Tensor y = add(matmul(cat, wl), bl);
  return reshape(transpose(y, 1, 2), {B, C, h, w});
}

TokenFfnPair TokenFfnPair::create(ParamStore& store, const std::string& prefix,
                                  std::size_t channels, std::size_t hidden,
                                  std::size_t dw_kernel, Rng& rng) {
  TokenFfnPair l;
  l.dw_kernel = dw_kernel;
  l.dw_weight = store.add_param(
      prefix + ".dw.weight",
      Tensor::truncated_normal({channels, 1, dw_kernel, dw_kernel}, kInitSigma,
                               rng));
  l.dw_bn = BatchNormLayer::create(store, prefix + ".dw.bn", channels);
  l.ffn_w1 = store.add_param(
      prefix + ".ffn.w1",
      Tensor::truncated_normal({hidden, channels, 1, 1}, kInitSigma, rng));
  l.ffn_bn1 = BatchNormLayer::create(store, prefix + ".ffn.bn1", hidden);
  l.ffn_w2 = store.add_param(
      prefix + ".ffn.w2",
      Tensor::truncated_normal({channels, hidden, 1, 1}, kInitSigma, rng));
  l.ffn_bn2 = BatchNormLayer::create(store, prefix + ".ffn.bn2", channels);
  return l;
}

Tensor TokenFfnPair::forward(const Tensor& x, bool training) const {
  Tensor t = add(x, dw_bn.forward(
                       depthwise_conv2d(x, dw_weight, 1, dw_kernel / 2),
                       training));
  Tensor f = ffn_bn1.forward(conv2d(t, ffn_w1, 1, 0), training);
  f = gelu(f);
  f = ffn_bn2.forward(conv2d(f, ffn_w2, 1, 0), training);
  return add(t, f);
}

SandwichBlock SandwichBlock::create(ParamStore& store,
                                    const std::string& prefix,
                                    const ModelConfig& cfg, std::size_t stage,
                                    Rng& rng) {
  SandwichBlock b;
  const std::size_t C = cfg.widths[stage];
  const std::size_t hidden = cfg.ffn_hidden(stage);
  for (std::size_t n = 0; n < cfg.ffn_count; ++n) {
    b.pre.push_back(TokenFfnPair::create(
        store, prefix + ".pre" + std::to_string(n + 1), C, hidden,
        cfg.dw_kernel, rng));
  }
  b.attn = AttentionLayer::create(store, prefix + ".attn", C,
                                  cfg.heads[stage], cfg.qk_dim[stage],
                                  cfg.value_dim(stage),
                                  cfg.literal_outer_softmax, rng);
  for (std::size_t n = 0; n < cfg.ffn_count; ++n) {
    b.post.push_back(TokenFfnPair::create(
        store, prefix + ".post" + std::to_string(n + 1), C, hidden,
        cfg.dw_kernel, rng));
  }
  return b;
}

Tensor SandwichBlock::forward(const Tensor& x, bool training) const {
  Tensor t = x;
  for (const auto& p : pre) t = p.forward(t, training);
  t = add(t, attn.forward(t));
  for (const auto& p : post) t = p.forward(t, training);
  return t;
}

// ---------------------------------------------------------------------------
// Model

EffLocModel::EffLocModel(const ModelConfig& cfg, std::uint64_t init_seed)
    : cfg_(cfg) {
  cfg_.validate();
  Rng rng = Rng(init_seed).fork(0x11717);

  const auto ch = cfg_.embed_channels();
  std::size_t cin = 3;
  for (std::size_t i = 0; i < ch.size(); ++i) {
    embed_.push_back(ConvBnLayer::create(
        store_, "embed.c" + std::to_string(i + 1), cin, ch[i], 3, 2,
        /*activated=*/true, rng));
    cin = ch[i];
  }

  for (std::size_t s = 0; s < 3; ++s) {
    std::vector<SandwichBlock> blocks;
    for (std::size_t b = 0; b < cfg_.depths[s]; ++b) {
      blocks.push_back(SandwichBlock::create(
          store_,
          "stage" + std::to_string(s + 1) + ".block" + std::to_string(b + 1),
          cfg_, s, rng));
    }
    stages_.push_back(std::move(blocks));
    if (s < 2) {
      downsamples_.push_back(ConvBnLayer::create(
          store_, "down" + std::to_string(s + 1), cfg_.widths[s],
          cfg_.widths[s + 1], 3, 2, /*activated=*/false, rng));
    }
  }

  const std::size_t d3 = cfg_.widths[2];
  const std::size_t hidden = cfg_.regressor_hidden;
  head_w1_ = store_.add_param(
      "head.fc1.weight", Tensor::truncated_normal({d3, hidden}, kInitSigma, rng));
  head_b1_ = store_.add_param("head.fc1.bias", Tensor::zeros({hidden}));
  head_w2_ = store_.add_param(
      "head.fc2.weight", Tensor::truncated_normal({hidden, 6}, kInitSigma, rng));
  head_b2_ = store_.add_param("head.fc2.bias", Tensor::zeros({6}));
}

Tensor EffLocModel::embed(const Tensor& images) {
  if (images.ndim() != 4 || images.dim(1) != 3 ||
      images.dim(2) != cfg_.input_resolution ||
      images.dim(3) != cfg_.input_resolution) {
    throw DimensionError(
        "forward: expected images [B,3," +
        std::to_string(cfg_.input_resolution) + "," +
        std::to_string(cfg_.input_resolution) + "], got " +
        shape_str(images.shape()));
  }
  Tensor x = images;
  for (const auto& l : embed_) x = l.forward(x, training_);
  return x;
}

Tensor EffLocModel::forward(const Tensor& images, Rng* dropout_rng) {
  Tensor x = embed(images);
  for (std::size_t s = 0; s < 3; ++s) {
    for (const auto& b : stages_[s]) x = b.forward(x, training_);
    if (s < 2) x = downsamples_[s].forward(x, training_);
  }
  x = global_average_pool(x);  // [B, D3]
  x = add(matmul(x, head_w1_), head_b1_);
  x = gelu(x);
  if (training_ && cfg_.dropout_p > 0.0) {
    if (!dropout_rng) {
      throw ContractError(
          "forward: training mode with dropout needs a generator");
    }
    x = dropout(x, cfg_.dropout_p, true, *dropout_rng);
  }
  return add(matmul(x, head_w2_), head_b2_);  // [B,6]
}

}  // namespace effloc
