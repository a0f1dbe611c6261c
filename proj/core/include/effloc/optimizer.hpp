#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "effloc/tensor.hpp"

namespace effloc {

/// Cosine schedule: lr0 * (1 + cos(pi * epoch / total)) / 2. Full rate at
/// epoch 0, half at the midpoint, positive until the final epoch.
double cosine_lr(std::size_t epoch, std::size_t total_epochs, double lr0);

/// AdamW with decoupled weight decay: the decay shrinks the parameter
/// directly (param -= lr * wd * param) and does not enter the moments.
/// Parameters registered with `decay = false` (the loss balance weights)
/// skip it.
class AdamW {
 public:
  AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void add_parameter(const std::string& name, Tensor param, bool decay);

  /// One update from the current gradients. `t` advances internally.
  void step(double lr, double weight_decay);

  std::size_t step_count() const { return t_; }
  void set_step_count(std::size_t t) { t_ = t; }

  void zero_grad();

  /// Moment buffers for checkpointing, in registration order:
  /// ("opt/m/<name>", m) and ("opt/v/<name>", v) per parameter.
  std::vector<std::pair<std::string, Tensor>> state_tensors() const;
  /// Restores a moment buffer written by `state_tensors`.
  void load_state_tensor(const std::string& name, const Tensor& value);

 private:
  struct Slot {
    std::string name;
    Tensor param;
    bool decay = true;
    std::vector<double> m, v;
  };
  std::vector<Slot> slots_;
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

}  // namespace effloc
