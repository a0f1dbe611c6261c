#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "effloc/config.hpp"
#include "effloc/loss.hpp"
#include "effloc/model.hpp"
#include "effloc/optimizer.hpp"
#include "effloc/tensor.hpp"

namespace effloc {

/// On-disk training state. Little-endian binary: magic "EFLC", format
/// version u32, length-prefixed key-value text block (the model config plus
/// `epoch` and `opt_step`), then the tensor table — per entry a u64 name
/// length, the name, u64 rank, u64 dims, and the raw 64-bit values.
/// Optimizer moments are stored under the `opt/` name prefix, the loss
/// balance weights as `loss/alpha` and `loss/beta`.
struct Checkpoint {
  ModelConfig config;
  std::size_t epoch = 0;     // number of completed epochs
  std::size_t opt_step = 0;  // optimizer step counter
  std::vector<std::pair<std::string, Tensor>> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Gathers model parameters and buffers, the loss weights, and (when given)
/// the optimizer moments into one checkpoint.
Checkpoint snapshot_state(const EffLocModel& model, const LossState* loss,
                          const AdamW* optimizer, std::size_t epoch);

/// Writes checkpoint tensors back into the model (and loss/optimizer when
/// given). Every destination tensor must be present with a matching shape.
void restore_state(const Checkpoint& ck, EffLocModel& model, LossState* loss,
                   AdamW* optimizer);

}  // namespace effloc
