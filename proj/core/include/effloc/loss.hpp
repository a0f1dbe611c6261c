#pragma once

#include <vector>

#include "effloc/geometry.hpp"
#include "effloc/tensor.hpp"

namespace effloc {

/// Learnable balance weights of the pose loss. Both are scalars on the tape
/// and are optimized jointly with the model (but excluded from weight decay).
struct LossState {
  Tensor alpha;
  Tensor beta;

  /// Standard initialization: alpha = -5, beta = -1.
  static LossState init(double alpha0 = -5.0, double beta0 = -1.0);
};

/// Mean over the batch of
///   |p - p_hat|_1 exp(-alpha) + alpha + |log q - log q_hat|_1 exp(-beta) + beta
/// where predictions are [B,6] rows of [position, log-quaternion] and truth
/// quaternions are hemisphere-canonicalized before their logs are taken.
/// Throws TrainingError (naming the batch index) on a non-finite prediction.
Tensor pose_loss(const Tensor& predictions, const std::vector<Pose>& truth,
                 LossState& state);

/// The [B,3] position block and [B,3] log-quaternion block of the ground
/// truth, as constant tensors (canonicalization applied).
Tensor truth_positions(const std::vector<Pose>& truth);
Tensor truth_log_quaternions(const std::vector<Pose>& truth);

}  // namespace effloc
