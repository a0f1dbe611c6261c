#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace effloc {

/// Full architecture description. Everything the model, profiler, and
/// checkpoints need flows through this one struct; it serializes to a flat
/// `key = value` text block (lists comma-separated) that is embedded in
/// checkpoints and accepted on the command line.
struct ModelConfig {
  std::string name = "custom";

  // Per-stage width / depth / head counts.
  std::array<std::size_t, 3> widths{192, 288, 384};
  std::array<std::size_t, 3> depths{1, 3, 4};
  std::array<std::size_t, 3> heads{3, 3, 4};

  // Sandwich block: N feed-forward layers on each side of the attention.
  std::size_t ffn_count = 1;
  double ffn_expansion = 2.0;

  // Per-head projection widths. Values carry the full channel split
  // (v_dim_ratio = 1) so head outputs can cascade into the next split.
  std::array<std::size_t, 3> qk_dim{16, 16, 16};
  double v_dim_ratio = 1.0;

  std::size_t dw_kernel = 3;

  std::size_t input_resolution = 256;
  std::size_t embed_downsample_factor = 16;
  std::size_t embed_base = 8;  // first stem width; doubles per stem conv

  std::size_t regressor_hidden = 1024;
  double dropout_p = 0.5;

  // Applies the softmax over the concatenated head outputs (the alternative
  // reading of the attention aggregation) instead of only inside each head.
  bool literal_outer_softmax = false;

  /// Throws ConfigError when any structural constraint is violated.
  void validate() const;

  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);

  // Derived dimensions (validated).
  std::size_t embed_conv_count() const;                // log2(factor)
  std::vector<std::size_t> embed_channels() const;     // stem widths, ending D1
  std::size_t stage_resolution(std::size_t stage) const;  // stage in 0..2
  std::size_t stage_tokens(std::size_t stage) const;
  std::size_t head_split(std::size_t stage) const;     // D_i / H_i
  std::size_t value_dim(std::size_t stage) const;
  std::size_t ffn_hidden(std::size_t stage) const;
};

/// Table of shipped architectures: "effloc", "effloc-small", "effloc-xs",
/// plus the desk-test "tiny".
std::vector<std::string> config_names();
ModelConfig config_by_name(const std::string& name);

}  // namespace effloc
