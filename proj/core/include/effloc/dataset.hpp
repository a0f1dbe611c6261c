#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "effloc/geometry.hpp"
#include "effloc/rng.hpp"
#include "effloc/scene.hpp"
#include "effloc/tensor.hpp"

namespace effloc {

/// One record: image in [-1,1], ground-truth pose, stable identifier.
struct PoseSample {
  std::string id;
  Tensor image;  // [3,R,R]
  Pose pose;
};

enum class Split { Train, Val, Test };

/// 80/10/10 split decided by a hash of the sample index alone, so it is
/// stable across runs, platforms, and dataset reloads.
Split split_of_index(std::size_t index);
std::vector<std::size_t> split_indices(std::size_t count, Split which);

struct JitterStrengths {
  double brightness = 0.0;
  double contrast = 0.0;
  double saturation = 0.0;
  double hue = 0.0;
};

// Individual photometric adjustments on a [3,H,W] image in [-1,1].
// A factor of exactly 1 (or a zero hue angle) returns the input unchanged.
// Saturation and hue work in the opponent basis (g, r-g, b-g) with the base
// channel compensated through the luma weights (0.299, 0.587, 0.114), which
// keeps luma fixed and makes gray pixels exact fixed points:
//   luma   Y = g + 0.299 (r-g) + 0.114 (b-g)
//   chroma P = r - g,  Q = b - g
//   hue    [P'; Q'] = [cos t, -sin t; sin t, cos t] [P; Q]
//   g' = g + 0.299 P + 0.114 Q - 0.299 P' - 0.114 Q',  r' = g' + P',
//   b' = g' + Q'
Tensor adjust_brightness(const Tensor& image, double factor);
Tensor adjust_contrast(const Tensor& image, double factor);
Tensor adjust_saturation(const Tensor& image, double factor);
Tensor adjust_hue(const Tensor& image, double degrees);

/// Applies the four adjustments in a random order with per-call random
/// factors: brightness/contrast/saturation in [1-s, 1+s], hue rotation in
/// [-h*180, h*180] degrees. Output clamped to [-1,1]. Strength 0 disables an
/// adjustment entirely.
Tensor color_jitter(const Tensor& image, const JitterStrengths& strengths,
                    Rng& rng);

Tensor central_crop(const Tensor& image, std::size_t target);
Tensor random_crop(const Tensor& image, std::size_t target, Rng& rng);

/// Renders `count` samples of the scene into `root/images/<id>.ppm` plus
/// `root/poses.csv` (header id,px,py,pz,qw,qx,qy,qz, quaternions canonical)
/// and `root/scene.txt`. Deterministic in (scene, count, seed).
void generate_dataset(const SceneSpec& scene, std::size_t count,
                      std::uint64_t seed, const std::filesystem::path& root);

struct LoadedDataset {
  SceneSpec scene;
  std::vector<PoseSample> samples;  // at the scene's source resolution
};

/// Reads a generated tree back. Quaternions are canonicalized on load; a
/// manifest quaternion off unit norm by more than 1e-3 is a data error.
LoadedDataset load_dataset(const std::filesystem::path& root);

}  // namespace effloc
