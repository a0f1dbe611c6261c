#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "effloc/config.hpp"
#include "effloc/model.hpp"

namespace effloc {

// Closed-form cost of the standard layers (per sample).
std::uint64_t conv2d_param_count(std::size_t cin, std::size_t cout,
                                 std::size_t k, bool bias);
std::uint64_t conv2d_macs(std::size_t cin, std::size_t cout, std::size_t k,
                          std::size_t out_h, std::size_t out_w);
std::uint64_t depthwise_macs(std::size_t channels, std::size_t k,
                             std::size_t out_h, std::size_t out_w);
std::uint64_t linear_param_count(std::size_t in, std::size_t out, bool bias);
std::uint64_t linear_macs(std::size_t in, std::size_t out);

/// One profiled submodule. `macs` counts multiply-accumulates of the matrix
/// and convolution work; headline FLOPs are 2 x MACs. Elementwise passes
/// (normalizations, activations, residual adds, softmax) cost one FLOP per
/// element per pass and are kept in their own column. `activations` counts
/// every tensor element the submodule materializes for one sample.
struct ProfileRow {
  std::string path;
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
  std::uint64_t score_macs = 0;  // attention score-matmul share of `macs`
  std::uint64_t elementwise_flops = 0;
  std::uint64_t activations = 0;

  std::uint64_t flops() const { return 2 * macs; }
};

struct ProfileReport {
  ModelConfig config;
  std::size_t resolution = 0;
  bool include_regressor = true;
  std::vector<ProfileRow> rows;

  ProfileRow total() const;
  ProfileRow backbone_total() const;  // everything except head.*

  /// Width-aligned text table, rows in definition order, both totals.
  std::string to_table() const;
  /// CSV: module,params,macs,flops,activations plus a final total row.
  std::string to_csv() const;
};

/// Walks the architecture analytically (no forward pass, no instantiation).
ProfileReport profile(const ModelConfig& config, std::size_t resolution,
                      bool include_regressor = true);

struct ParamCountDiff {
  std::string path;
  std::uint64_t analytic = 0;
  std::uint64_t actual = 0;
};

struct ParamCountCheck {
  bool ok = false;
  std::uint64_t analytic_total = 0;
  std::uint64_t actual_total = 0;
  std::vector<ParamCountDiff> diffs;  // mismatched module paths only
};

/// Compares the analytic per-module parameter counts against the literal
/// stored-tensor sizes of an instantiated model. A mismatch is a result,
/// not an exception.
ParamCountCheck verify_param_count(const EffLocModel& model);

/// Same comparison against an arbitrary named-tensor list (lets a test
/// inject faults without touching a real model).
ParamCountCheck verify_param_count(
    const ModelConfig& config,
    const std::vector<std::pair<std::string, Tensor>>& params);

}  // namespace effloc
