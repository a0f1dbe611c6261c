#include "effloc/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "effloc/errors.hpp"

namespace effloc {

double vec3_norm(const Vec3& v) {
  return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
}

Vec3 vec3_sub(const Vec3& a, const Vec3& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}

double UnitQuaternion::norm() const {
  return std::sqrt(w * w + v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
}

bool UnitQuaternion::is_normalized(double tol) const {
  return std::fabs(norm() - 1.0) <= tol;
}

UnitQuaternion UnitQuaternion::normalized() const {
  const double n = norm();
  if (n == 0.0) throw ContractError("cannot normalize a zero quaternion");
  return {w / n, {v[0] / n, v[1] / n, v[2] / n}};
}

UnitQuaternion UnitQuaternion::negated() const {
  return {-w, {-v[0], -v[1], -v[2]}};
}

double UnitQuaternion::dot(const UnitQuaternion& o) const {
  return w * o.w + v[0] * o.v[0] + v[1] * o.v[1] + v[2] * o.v[2];
}

namespace {

void require_normalized(const UnitQuaternion& q, const char* op) {
  if (!q.is_normalized()) {
    throw ContractError(std::string(op) + ": quaternion norm " +
                        std::to_string(q.norm()) + " is off unit by > 1e-6");
  }
}

constexpr double kZeroBranch = 1e-12;

}  // namespace

Vec3 quat_log(const UnitQuaternion& q) {
  require_normalized(q, "quat_log");
  const double vn = vec3_norm(q.v);
  if (vn < kZeroBranch) return {0.0, 0.0, 0.0};
  const double u = std::clamp(q.w, -1.0, 1.0);
  const double angle = std::acos(u);
  const double s = angle / vn;
  return {q.v[0] * s, q.v[1] * s, q.v[2] * s};
}

UnitQuaternion quat_exp(const Vec3& w) {
  double theta = vec3_norm(w);
  if (theta < kZeroBranch) return UnitQuaternion{};
  double sx = w[0], sy = w[1], sz = w[2];
  if (theta > M_PI) {
    const double f = M_PI / theta;
    sx *= f;
    sy *= f;
    sz *= f;
    theta = M_PI;
  }
  const double s = std::sin(theta) / theta;
  return {std::cos(theta), {sx * s, sy * s, sz * s}};
}

UnitQuaternion canonicalize(const UnitQuaternion& q) {
  if (q.w > 0.0) return q;
  if (q.w < 0.0) return q.negated();
  // w == 0: deterministic tie-break, first nonzero imaginary component
  // becomes positive.
  for (double c : q.v) {
    if (c > 0.0) return q;
    if (c < 0.0) return q.negated();
  }
  return q;
}

double rotation_error_deg(const UnitQuaternion& q1, const UnitQuaternion& q2) {
  require_normalized(q1, "rotation_error_deg");
  require_normalized(q2, "rotation_error_deg");
  // 2 acos(min(1,|<q1,q2>|)) evaluated through the relative rotation
  // q1 conj(q2): the atan2 form is identical on the unit sphere but stays
  // exact at zero (the vector part cancels bitwise for q2 = +/-q1) and loses
  // no precision for small angles.
  const double rw = q1.dot(q2);
  const Vec3 rv{-q1.w * q2.v[0] + q2.w * q1.v[0] -
                    (q1.v[1] * q2.v[2] - q1.v[2] * q2.v[1]),
                -q1.w * q2.v[1] + q2.w * q1.v[1] -
                    (q1.v[2] * q2.v[0] - q1.v[0] * q2.v[2]),
                -q1.w * q2.v[2] + q2.w * q1.v[2] -
                    (q1.v[0] * q2.v[1] - q1.v[1] * q2.v[0])};
  return 2.0 * std::atan2(vec3_norm(rv), std::fabs(rw)) * (180.0 / M_PI);
}

Vec3 rotate_vector(const UnitQuaternion& q, const Vec3& p) {
  // q p q* expanded: p + 2 w (v x p) + 2 v x (v x p)
  const Vec3 t{2.0 * (q.v[1] * p[2] - q.v[2] * p[1]),
               2.0 * (q.v[2] * p[0] - q.v[0] * p[2]),
               2.0 * (q.v[0] * p[1] - q.v[1] * p[0])};
  return {p[0] + q.w * t[0] + (q.v[1] * t[2] - q.v[2] * t[1]),
          p[1] + q.w * t[1] + (q.v[2] * t[0] - q.v[0] * t[2]),
          p[2] + q.w * t[2] + (q.v[0] * t[1] - q.v[1] * t[0])};
}

Vec3 rotate_vector_inverse(const UnitQuaternion& q, const Vec3& p) {
  return rotate_vector({q.w, {-q.v[0], -q.v[1], -q.v[2]}}, p);
}

double lower_median(std::vector<double> values) {
  if (values.empty()) throw ContractError("median of empty list");
  std::sort(values.begin(), values.end());
  return values[(values.size() - 1) / 2];
}

TrajectoryStats trajectory_stats(const std::vector<Pose>& predictions,
                                 const std::vector<Pose>& truth) {
  if (predictions.empty() || predictions.size() != truth.size()) {
    throw ContractError("trajectory_stats: lists must be nonempty and of "
                        "equal length (" +
                        std::to_string(predictions.size()) + " vs " +
                        std::to_string(truth.size()) + ")");
  }
  std::vector<double> pos_err(predictions.size());
  std::vector<double> rot_err(predictions.size());
  double pos_sum = 0.0, rot_sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    pos_err[i] =
        vec3_norm(vec3_sub(predictions[i].position, truth[i].position));
    rot_err[i] =
        rotation_error_deg(predictions[i].orientation, truth[i].orientation);
    pos_sum += pos_err[i];
    rot_sum += rot_err[i];
  }
  TrajectoryStats st;
  st.median_position = lower_median(pos_err);
  st.mean_position = pos_sum / double(predictions.size());
  st.median_rotation_deg = lower_median(rot_err);
  st.mean_rotation_deg = rot_sum / double(predictions.size());
  return st;
}

}  // namespace effloc
