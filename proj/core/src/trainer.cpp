#include "effloc/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "effloc/checkpoint.hpp"
#include "effloc/errors.hpp"
#include "effloc/ops.hpp"

namespace effloc {

namespace {

// Substream tags; every stream is a pure function of (seed, tag, epoch, i).
constexpr std::uint64_t kShuffleTag = 1;
constexpr std::uint64_t kCropTag = 2;
constexpr std::uint64_t kJitterTag = 3;
constexpr std::uint64_t kDropoutTag = 4;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

Tensor stack_images(const std::vector<Tensor>& images) {
  const std::size_t B = images.size();
  const Shape& s = images[0].shape();
  std::vector<double> data;
  data.reserve(B * shape_numel(s));
  for (const auto& img : images) {
    const auto& v = img.values();
    data.insert(data.end(), v.begin(), v.end());
  }
  return Tensor::from_data({B, s[0], s[1], s[2]}, std::move(data));
}

void clip_gradients(const std::vector<Tensor>& params, double clip_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (double g : Tensor(p).grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm <= clip_norm || norm == 0.0) return;
  const double f = clip_norm / norm;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (double& g : Tensor(p).grad()) g *= f;
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("train: epochs must be positive");
  if (batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
  if (lr0 < 0.0) throw ConfigError("train: negative learning rate");
  if (weight_decay < 0.0) throw ConfigError("train: negative weight decay");
  if (clip_norm < 0.0) throw ConfigError("train: negative clip norm");
}

std::string epoch_log_header() {
  return "epoch,lr,train_loss,val_median_pos,val_mean_pos,"
         "val_median_rot_deg,val_mean_rot_deg";
}

std::string epoch_log_row(const EpochLog& log) {
  std::string row = std::to_string(log.epoch);
  row += "," + fmt(log.lr);
  row += "," + fmt(log.train_loss);
  row += "," + fmt(log.val.median_position);
  row += "," + fmt(log.val.mean_position);
  row += "," + fmt(log.val.median_rotation_deg);
  row += "," + fmt(log.val.mean_rotation_deg);
  return row;
}

Pose prediction_to_pose(const double* row6) {
  Pose p;
  p.position = {row6[0], row6[1], row6[2]};
  p.orientation = canonicalize(quat_exp({row6[3], row6[4], row6[5]}));
  return p;
}

EvalResult evaluate(EffLocModel& model, const std::vector<PoseSample>& samples,
                    std::size_t batch_size) {
  if (samples.empty()) throw ContractError("evaluate: empty sample list");
  const bool was_training = model.training();
  model.set_training(false);
  NoGradGuard no_grad;

  const std::size_t res = model.config().input_resolution;
  EvalResult result;
  std::vector<Pose> pred, truth;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, samples.size() - start);
    std::vector<Tensor> images;
    images.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      images.push_back(central_crop(samples[start + i].image, res));
    }
    Tensor out = model.forward(stack_images(images));
    const auto& ov = out.values();
    for (std::size_t i = 0; i < n; ++i) {
      const Pose p = prediction_to_pose(ov.data() + i * 6);
      pred.push_back(p);
      truth.push_back(samples[start + i].pose);
      EvalRow row;
      row.id = samples[start + i].id;
      row.position_error =
          vec3_norm(vec3_sub(p.position, samples[start + i].pose.position));
      row.rotation_error_deg =
          rotation_error_deg(p.orientation, samples[start + i].pose.orientation);
      result.rows.push_back(row);
    }
  }
  result.stats = trajectory_stats(pred, truth);
  model.set_training(was_training);
  return result;
}

TrainResult train(EffLocModel& model, LossState& loss_state, AdamW& optimizer,
                  const LoadedDataset& data, const TrainConfig& cfg,
                  const std::filesystem::path& out_dir,
                  std::size_t start_epoch, std::size_t end_epoch) {
  cfg.validate();
  if (data.samples.empty()) throw ContractError("train: empty dataset");
  if (end_epoch == 0) end_epoch = cfg.epochs;
  if (start_epoch >= end_epoch || end_epoch > cfg.epochs) {
    throw ConfigError("train: epoch range [" + std::to_string(start_epoch) +
                      ", " + std::to_string(end_epoch) +
                      ") invalid for a schedule of " +
                      std::to_string(cfg.epochs) + " epochs");
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create " + out_dir.string());

  const std::vector<std::size_t> train_idx =
      split_indices(data.samples.size(), Split::Train);
  const std::vector<std::size_t> val_idx =
      split_indices(data.samples.size(), Split::Val);
  if (train_idx.empty() || val_idx.empty()) {
    throw DataError("train: dataset too small to populate train/val splits");
  }
  std::vector<PoseSample> val_samples;
  for (std::size_t i : val_idx) val_samples.push_back(data.samples[i]);

  const std::size_t res = model.config().input_resolution;
  const Rng base(cfg.seed);

  const auto log_path = out_dir / "train_log.csv";
  std::ofstream log(log_path, start_epoch == 0
                                  ? std::ios::trunc
                                  : (std::ios::app | std::ios::ate));
  if (!log) throw DataError("cannot write " + log_path.string());
  if (start_epoch == 0) log << epoch_log_header() << "\n";

  // Collect everything the gradient clipper must see.
  std::vector<Tensor> all_params;
  for (const auto& [name, t] : model.store().params()) all_params.push_back(t);
  all_params.push_back(loss_state.alpha);
  all_params.push_back(loss_state.beta);

  TrainResult result;
  for (std::size_t epoch = start_epoch; epoch < end_epoch; ++epoch) {
    const double lr = cosine_lr(epoch, cfg.epochs, cfg.lr0);
    model.set_training(true);

    // Seeded shuffle; depends only on (seed, epoch).
    std::vector<std::size_t> order = train_idx;
    {
      Rng shuffle_rng = base.fork(kShuffleTag, epoch);
      for (std::size_t i = order.size() - 1; i > 0; --i) {
        std::swap(order[i], order[shuffle_rng.uniform_index(i + 1)]);
      }
    }

    double loss_sum = 0.0;
    std::size_t seen = 0;
    std::size_t step = 0;
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size, ++step) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      std::vector<Tensor> images;
      std::vector<Pose> truth;
      images.reserve(n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t idx = order[start + i];
        const PoseSample& s = data.samples[idx];
        Rng crop_rng = base.fork(kCropTag, epoch, idx);
        Tensor img = random_crop(s.image, res, crop_rng);
        Rng jitter_rng = base.fork(kJitterTag, epoch, idx);
        img = color_jitter(img, cfg.jitter, jitter_rng);
        images.push_back(img);
        truth.push_back(s.pose);
      }
      Rng dropout_rng = base.fork(kDropoutTag, epoch, step);
      Tensor loss;
      try {
        Tensor out = model.forward(stack_images(images), &dropout_rng);
        loss = pose_loss(out, truth, loss_state);
      } catch (const TrainingError& e) {
        throw TrainingError("epoch " + std::to_string(epoch + 1) + " batch " +
                            std::to_string(step) + ": " + e.what());
      }
      const double loss_value = loss.item();
      if (!std::isfinite(loss_value)) {
        throw TrainingError("epoch " + std::to_string(epoch + 1) + " batch " +
                            std::to_string(step) + ": non-finite loss");
      }
      loss_sum += loss_value * double(n);
      seen += n;

      model.zero_grad();
      loss_state.alpha.zero_grad();
      loss_state.beta.zero_grad();
      backward(loss);
      if (cfg.clip_norm > 0.0) clip_gradients(all_params, cfg.clip_norm);
      optimizer.step(lr, cfg.weight_decay);
    }

    EpochLog entry;
    entry.epoch = epoch + 1;
    entry.lr = lr;
    entry.train_loss = loss_sum / double(seen);
    entry.val = evaluate(model, val_samples, cfg.batch_size).stats;
    log << epoch_log_row(entry) << "\n";
    log.flush();
    result.logs.push_back(entry);

    const bool last = epoch + 1 == end_epoch;
    if (last || (cfg.checkpoint_interval > 0 &&
                 (epoch + 1) % cfg.checkpoint_interval == 0)) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%04zu.ckpt", epoch + 1);
      const auto ck_path = out_dir / name;
      save_checkpoint(ck_path,
                      snapshot_state(model, &loss_state, &optimizer, epoch + 1));
      result.final_checkpoint = ck_path;
    }
  }
  return result;
}

}  // namespace effloc
