#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "effloc/dataset.hpp"
#include "effloc/loss.hpp"
#include "effloc/model.hpp"
#include "effloc/optimizer.hpp"

namespace effloc {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double lr0 = 1e-3;
  double weight_decay = 3.5e-2;
  std::uint64_t seed = 42;
  double clip_norm = 0.0;  // 0 disables gradient clipping
  std::size_t checkpoint_interval = 5;
  JitterStrengths jitter{0.2, 0.2, 0.2, 0.05};

  void validate() const;  // throws ConfigError
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based, epoch just completed
  double lr = 0.0;
  double train_loss = 0.0;
  TrajectoryStats val;
};

std::string epoch_log_header();
std::string epoch_log_row(const EpochLog& log);

struct EvalRow {
  std::string id;
  double position_error = 0.0;
  double rotation_error_deg = 0.0;
};

struct EvalResult {
  TrajectoryStats stats;
  std::vector<EvalRow> rows;
};

/// Deterministic evaluation: central crop to the model resolution, eval
/// mode, batched forward, per-sample position/rotation errors plus their
/// median/mean aggregate.
EvalResult evaluate(EffLocModel& model, const std::vector<PoseSample>& samples,
                    std::size_t batch_size = 32);

/// Converts one [6] prediction row into a pose (position + exp of the
/// log-quaternion block).
Pose prediction_to_pose(const double* row6);

struct TrainResult {
  std::vector<EpochLog> logs;
  std::filesystem::path final_checkpoint;
};

/// Runs the training loop: seeded shuffling, random crop + color jitter,
/// forward, pose loss, backward, AdamW with the cosine schedule; per-epoch
/// validation metrics appended to `out_dir/train_log.csv` and checkpoints
/// written at the configured interval plus at the end. `start_epoch` > 0
/// continues a resumed run (model/loss/optimizer state already restored).
/// `end_epoch` stops early (0 means cfg.epochs); the learning-rate schedule
/// always spans cfg.epochs, so an interrupted-and-resumed run is
/// bit-identical to an uninterrupted one. Every random stream is a pure
/// function of (seed, epoch, sample index).
TrainResult train(EffLocModel& model, LossState& loss_state, AdamW& optimizer,
                  const LoadedDataset& data, const TrainConfig& cfg,
                  const std::filesystem::path& out_dir,
                  std::size_t start_epoch = 0, std::size_t end_epoch = 0);

}  // namespace effloc
