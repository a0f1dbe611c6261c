#pragma once

// Shared test-side oracles. These deliberately re-derive results with plain
// loops and scalar math so they stay independent of the library kernels they
// check.

#include <cmath>
#include <cstddef>
#include <vector>

#include "effloc/model.hpp"
#include "effloc/tensor.hpp"

namespace effloc::testing {

/// Literal per-head sequential evaluation of the grouped attention with
/// cascading heads: plain vectors, explicit loops, scalar softmax. Reads the
/// layer's weights but shares no compute path with AttentionLayer::forward.
inline std::vector<double> naive_sga_forward(const AttentionLayer& layer,
                                             const std::vector<double>& x,
                                             std::size_t B, std::size_t C,
                                             std::size_t h, std::size_t w,
                                             bool cascade = true) {
  const std::size_t T = h * w;
  const std::size_t n = layer.num_heads;
  const std::size_t split = C / n;
  const std::size_t qk = layer.qk_dim;
  const std::size_t vd = layer.v_dim;

  // tokens[b][t][c] with layer norm applied
  std::vector<double> tokens(B * T * C);
  const auto& gamma = layer.ln_gamma.values();
  const auto& beta = layer.ln_beta.values();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < T; ++t) {
      double mean = 0;
      for (std::size_t c = 0; c < C; ++c) mean += x[(b * C + c) * T + t];
      mean /= double(C);
      double var = 0;
      for (std::size_t c = 0; c < C; ++c) {
        const double d = x[(b * C + c) * T + t] - mean;
        var += d * d;
      }
      var /= double(C);
      const double inv = 1.0 / std::sqrt(var + 1e-12);
      for (std::size_t c = 0; c < C; ++c) {
        tokens[(b * T + t) * C + c] =
            (x[(b * C + c) * T + t] - mean) * inv * gamma[c] + beta[c];
      }
    }

  std::vector<double> concat(B * T * n * vd, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    std::vector<double> prev;  // previous head's output, [T][vd]
    for (std::size_t j = 0; j < n; ++j) {
      const auto& wq = layer.heads[j].wq.values();
      const auto& wk = layer.heads[j].wk.values();
      const auto& wv = layer.heads[j].wv.values();
      const auto& bv = layer.heads[j].bv.values();
      // head input: the j-th channel split plus the previous head's output
      std::vector<double> in(T * split);
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t c = 0; c < split; ++c) {
          double v = tokens[(b * T + t) * C + j * split + c];
          if (cascade && j > 0) v += prev[t * vd + c];
          in[t * split + c] = v;
        }
      std::vector<double> q(T * qk, 0.0), k(T * qk, 0.0), v(T * vd, 0.0);
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t o = 0; o < qk; ++o)
          for (std::size_t c = 0; c < split; ++c) {
            q[t * qk + o] += in[t * split + c] * wq[c * qk + o];
            k[t * qk + o] += in[t * split + c] * wk[c * qk + o];
          }
        for (std::size_t o = 0; o < vd; ++o) {
          double acc = bv[o];
          for (std::size_t c = 0; c < split; ++c)
            acc += in[t * split + c] * wv[c * vd + o];
          v[t * vd + o] = acc;
        }
      }
      const double scale = 1.0 / std::sqrt(double(qk));
      std::vector<double> out(T * vd, 0.0);
      for (std::size_t t = 0; t < T; ++t) {
        std::vector<double> row(T);
        double mx = -1e300;
        for (std::size_t s = 0; s < T; ++s) {
          double acc = 0;
          for (std::size_t o = 0; o < qk; ++o)
            acc += q[t * qk + o] * k[s * qk + o];
          row[s] = acc * scale;
          mx = std::max(mx, row[s]);
        }
        double denom = 0;
        for (std::size_t s = 0; s < T; ++s) {
          row[s] = std::exp(row[s] - mx);
          denom += row[s];
        }
        for (std::size_t s = 0; s < T; ++s) {
          const double a = row[s] / denom;
          for (std::size_t o = 0; o < vd; ++o) out[t * vd + o] += a * v[s * vd + o];
        }
      }
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t o = 0; o < vd; ++o)
          concat[(b * T + t) * n * vd + j * vd + o] = out[t * vd + o];
      prev = std::move(out);
    }
  }

  // output projection, back to the [B,C,h,w] layout
  const auto& wl = layer.wl.values();
  const auto& bl = layer.bl.values();
  std::vector<double> y(B * C * T, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t c = 0; c < C; ++c) {
        double acc = bl[c];
        for (std::size_t i = 0; i < n * vd; ++i)
          acc += concat[(b * T + t) * n * vd + i] * wl[i * C + c];
        y[(b * C + c) * T + t] = acc;
      }
  return y;
}

inline double max_abs_diff(const std::vector<double>& a,
                           const std::vector<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

}  // namespace effloc::testing
