#pragma once

#include <array>
#include <string>
#include <vector>

#include "effloc/geometry.hpp"
#include "effloc/tensor.hpp"

namespace effloc {

struct Landmark {
  Vec3 position{0, 0, 0};
  std::array<double, 3> color{1, 1, 1};  // RGB in [0,1]
  double radius = 0.25;                  // world units
};

/// Synthetic pinhole scene: colored spherical landmarks in front of a camera
/// whose position is sampled inside a box and whose orientation is the
/// identity (looking along +z) perturbed by up to max_rotation_deg.
struct SceneSpec {
  std::vector<Landmark> landmarks;
  double focal = 70.0;  // pixels
  double cx = 36.0, cy = 36.0;
  Vec3 box_min{-1.0, -1.0, -0.5};
  Vec3 box_max{1.0, 1.0, 0.5};
  double max_rotation_deg = 8.0;
  std::size_t resolution = 72;

  /// Throws ConfigError unless >= 4 landmarks and every landmark stays in
  /// front of (and near the frustum of) every corner of the sampling box.
  void validate() const;

  /// Diagonal of the position sampling box; the scale that pose errors are
  /// reported against.
  double extent() const;

  std::string to_text() const;
  static SceneSpec from_text(const std::string& text);
};

/// Deterministic render of the landmarks as depth-scaled soft discs over a
/// dark background; returns [3,R,R] in [-1,1]. Throws RenderError when every
/// landmark falls behind the camera.
Tensor render(const SceneSpec& scene, const Pose& pose);

/// Ships a 16-landmark scene that the desk-scale training run learns from.
SceneSpec default_scene();

/// Uniform pose inside the scene's sampling ranges.
Pose sample_pose(const SceneSpec& scene, Rng& rng);

}  // namespace effloc
