#pragma once

#include <array>
#include <vector>

namespace effloc {

using Vec3 = std::array<double, 3>;

double vec3_norm(const Vec3& v);
Vec3 vec3_sub(const Vec3& a, const Vec3& b);

/// Unit quaternion q = (w, v) with scalar real part and 3-vector imaginary
/// part. Construction does not normalize; callers that need the unit
/// invariant enforced should use `normalized` or check `is_normalized`.
struct UnitQuaternion {
  double w = 1.0;
  Vec3 v{0.0, 0.0, 0.0};

  double norm() const;
  bool is_normalized(double tol = 1e-6) const;
  UnitQuaternion normalized() const;
  UnitQuaternion negated() const;
  double dot(const UnitQuaternion& o) const;
};

/// 6-DoF pose: position in scene units plus orientation.
struct Pose {
  Vec3 position{0.0, 0.0, 0.0};
  UnitQuaternion orientation;
};

/// Log map: (v/|v|) arccos(w), with the zero branch for |v| < 1e-12. The
/// real part is clamped into [-1,1] before arccos. Throws ContractError when
/// the input is off the unit sphere by more than 1e-6.
Vec3 quat_log(const UnitQuaternion& q);

/// Exp map, inverse of quat_log on |w| <= pi (larger inputs are clamped to
/// angle pi along the same axis). quat_exp({0,0,0}) is the identity.
UnitQuaternion quat_exp(const Vec3& w);

/// Resolves the q / -q double cover by flipping to the w >= 0 hemisphere.
/// On the w == 0 boundary the first nonzero imaginary component is made
/// positive. Idempotent.
UnitQuaternion canonicalize(const UnitQuaternion& q);

/// Angular distance in degrees: 2 arccos(min(1, |<q1,q2>|)) * 180/pi.
/// Symmetric, insensitive to the hemisphere, in [0, 180].
double rotation_error_deg(const UnitQuaternion& q1, const UnitQuaternion& q2);

/// Rotates a vector by the quaternion (q p q*), treating q as the
/// body-to-world orientation.
Vec3 rotate_vector(const UnitQuaternion& q, const Vec3& p);

/// Rotates by the inverse orientation (world-to-body).
Vec3 rotate_vector_inverse(const UnitQuaternion& q, const Vec3& p);

struct TrajectoryStats {
  double median_position = 0.0;
  double mean_position = 0.0;
  double median_rotation_deg = 0.0;
  double mean_rotation_deg = 0.0;
};

/// Median (lower middle element for even counts) and mean of the position
/// and rotation errors between two equal-length pose lists.
TrajectoryStats trajectory_stats(const std::vector<Pose>& predictions,
                                 const std::vector<Pose>& truth);

/// Lower-middle-element median of an unsorted list.
double lower_median(std::vector<double> values);

}  // namespace effloc
