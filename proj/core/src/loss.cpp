#include "effloc/loss.hpp"

#include <cmath>
#include <string>

#include "effloc/errors.hpp"
#include "effloc/ops.hpp"

namespace effloc {

LossState LossState::init(double alpha0, double beta0) {
  LossState s;
  s.alpha = Tensor::scalar(alpha0, true);
  s.beta = Tensor::scalar(beta0, true);
  return s;
}

Tensor truth_positions(const std::vector<Pose>& truth) {
  std::vector<double> data;
  data.reserve(truth.size() * 3);
  for (const auto& p : truth) {
    data.push_back(p.position[0]);
    data.push_back(p.position[1]);
    data.push_back(p.position[2]);
  }
  return Tensor::from_data({truth.size(), 3}, std::move(data));
}

Tensor truth_log_quaternions(const std::vector<Pose>& truth) {
  std::vector<double> data;
  data.reserve(truth.size() * 3);
  for (const auto& p : truth) {
    const Vec3 lq = quat_log(canonicalize(p.orientation));
    data.push_back(lq[0]);
    data.push_back(lq[1]);
    data.push_back(lq[2]);
  }
  return Tensor::from_data({truth.size(), 3}, std::move(data));
}

Tensor pose_loss(const Tensor& predictions, const std::vector<Pose>& truth,
                 LossState& state) {
  if (predictions.ndim() != 2 || predictions.dim(1) != 6 ||
      predictions.dim(0) != truth.size()) {
    throw DimensionError("pose_loss: predictions " +
                         shape_str(predictions.shape()) + " do not match " +
                         std::to_string(truth.size()) + " truth poses");
  }
  const auto& pv = predictions.values();
  for (std::size_t b = 0; b < truth.size(); ++b) {
    for (std::size_t j = 0; j < 6; ++j) {
      if (!std::isfinite(pv[b * 6 + j])) {
        throw TrainingError("pose_loss: non-finite prediction at batch index " +
                            std::to_string(b));
      }
    }
  }

  auto blocks = split(predictions, 1, {3, 3});
  Tensor pos_l1 = mean(sum(abs(sub(blocks[0], truth_positions(truth))), 1));
  Tensor rot_l1 =
      mean(sum(abs(sub(blocks[1], truth_log_quaternions(truth))), 1));

  Tensor pos_term = add(mul(pos_l1, exp(neg(state.alpha))), state.alpha);
  Tensor rot_term = add(mul(rot_l1, exp(neg(state.beta))), state.beta);
  return add(pos_term, rot_term);
}

}  // namespace effloc
