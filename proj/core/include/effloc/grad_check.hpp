#pragma once

#include <functional>
#include <string>
#include <vector>

#include "effloc/tensor.hpp"

namespace effloc {

struct ModelConfig;

struct GradMismatch {
  std::string name;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  std::size_t checked = 0;
  double max_rel_err = 0.0;
  std::vector<GradMismatch> failures;
  bool ok() const { return failures.empty(); }
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps finite-difference
/// round-off on near-zero gradients from being reported as a relative blowup.
double gradient_rel_err(double analytic, double numeric, double floor);

/// Checks d(scalar fn)/d(input) for every named input tensor against central
/// finite differences (loss evaluated with the element nudged +/- h). The
/// numeric side only ever calls `fn`, never the tape, so it is an oracle for
/// the backward pass.
GradCheckReport check_gradients(
    const std::function<Tensor()>& fn,
    const std::vector<std::pair<std::string, Tensor>>& inputs, double h,
    double tolerance, double floor = 1e-3);

struct ModelGradCheckOptions {
  std::uint64_t seed = 42;
  double h = 1e-5;
  double tolerance = 1e-4;
  double floor = 1e-3;
  std::size_t batch = 1;
};

/// Full-model check: random batch + random poses, training-mode forward with
/// dropout disabled, analytic backward through loss and model, then central
/// finite differences over every model parameter element plus the loss
/// balance weights. Finite-difference forwards run on independent model
/// clones so the work parallelizes.
GradCheckReport model_grad_check(const ModelConfig& config,
                                 const ModelGradCheckOptions& opts);

}  // namespace effloc
