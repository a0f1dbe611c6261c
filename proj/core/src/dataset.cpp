#include "effloc/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "effloc/errors.hpp"
#include "effloc/ppm.hpp"

namespace effloc {

namespace {

constexpr std::uint64_t kSplitSeed = 0x5EEDB0B5ULL;
constexpr double kLumaR = 0.299, kLumaG = 0.587, kLumaB = 0.114;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void check_image(const Tensor& image) {
  if (image.ndim() != 3 || image.dim(0) != 3) {
    throw DimensionError("expected [3,H,W] image, got " +
                         shape_str(image.shape()));
  }
}

double clamp_unit(double v) { return std::clamp(v, -1.0, 1.0); }

}  // namespace

Split split_of_index(std::size_t index) {
  const std::uint64_t h = Rng::mix(kSplitSeed, index);
  const std::uint64_t bucket = h % 10;
  if (bucket < 8) return Split::Train;
  return bucket == 8 ? Split::Val : Split::Test;
}

std::vector<std::size_t> split_indices(std::size_t count, Split which) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < count; ++i) {
    if (split_of_index(i) == which) out.push_back(i);
  }
  return out;
}

Tensor adjust_brightness(const Tensor& image, double factor) {
  check_image(image);
  if (factor == 1.0) return image;
  // Scales the [0,1] intensity, expressed directly in [-1,1] coordinates.
  std::vector<double> out(image.numel());
  const auto& v = image.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = clamp_unit((v[i] + 1.0) * factor - 1.0);
  }
  return Tensor::from_data(image.shape(), std::move(out));
}

Tensor adjust_contrast(const Tensor& image, double factor) {
  check_image(image);
  if (factor == 1.0) return image;
  const auto& v = image.values();
  const std::size_t plane = image.dim(1) * image.dim(2);
  double mean_luma = 0.0;
  for (std::size_t i = 0; i < plane; ++i) {
    mean_luma +=
        kLumaR * v[i] + kLumaG * v[plane + i] + kLumaB * v[2 * plane + i];
  }
  mean_luma /= double(plane);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = clamp_unit(mean_luma + (v[i] - mean_luma) * factor);
  }
  return Tensor::from_data(image.shape(), std::move(out));
}

namespace {

// Shared chroma transform: scales or rotates (P, Q) = (r-g, b-g) and
// compensates the base channel so luma is preserved. Gray pixels have
// P = Q = 0 exactly and pass through bit-identically.
template <class F>
Tensor chroma_map(const Tensor& image, F&& pq_map) {
  const auto& v = image.values();
  const std::size_t plane = image.dim(1) * image.dim(2);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < plane; ++i) {
    const double r = v[i], g = v[plane + i], b = v[2 * plane + i];
    const double p = r - g, q = b - g;
    double np = p, nq = q;
    pq_map(np, nq);
    const double ng = g + kLumaR * p + kLumaB * q - kLumaR * np - kLumaB * nq;
    out[i] = clamp_unit(ng + np);
    out[plane + i] = clamp_unit(ng);
    out[2 * plane + i] = clamp_unit(ng + nq);
  }
  return Tensor::from_data(image.shape(), std::move(out));
}

}  // namespace

Tensor adjust_saturation(const Tensor& image, double factor) {
  check_image(image);
  if (factor == 1.0) return image;
  return chroma_map(image, [factor](double& p, double& q) {
    p *= factor;
    q *= factor;
  });
}

Tensor adjust_hue(const Tensor& image, double degrees) {
  check_image(image);
  if (degrees == 0.0) return image;
  const double t = degrees * M_PI / 180.0;
  const double c = std::cos(t), s = std::sin(t);
  return chroma_map(image, [c, s](double& p, double& q) {
    const double np = c * p - s * q;
    const double nq = s * p + c * q;
    p = np;
    q = nq;
  });
}

Tensor color_jitter(const Tensor& image, const JitterStrengths& strengths,
                    Rng& rng) {
  check_image(image);
  // Draw one factor per adjustment, then apply the active ones in a random
  // order. Factors are drawn unconditionally so the stream layout does not
  // depend on the strengths.
  const double fb = 1.0 + strengths.brightness * (2.0 * rng.uniform() - 1.0);
  const double fc = 1.0 + strengths.contrast * (2.0 * rng.uniform() - 1.0);
  const double fs = 1.0 + strengths.saturation * (2.0 * rng.uniform() - 1.0);
  const double fh = strengths.hue * 180.0 * (2.0 * rng.uniform() - 1.0);
  std::array<std::size_t, 4> order{0, 1, 2, 3};
  for (std::size_t i = 3; i > 0; --i) {
    std::swap(order[i], order[rng.uniform_index(i + 1)]);
  }
  Tensor out = image;
  for (std::size_t op : order) {
    switch (op) {
      case 0:
        if (strengths.brightness > 0.0) out = adjust_brightness(out, fb);
        break;
      case 1:
        if (strengths.contrast > 0.0) out = adjust_contrast(out, fc);
        break;
      case 2:
        if (strengths.saturation > 0.0) out = adjust_saturation(out, fs);
        break;
      case 3:
        if (strengths.hue > 0.0) out = adjust_hue(out, fh);
        break;
    }
  }
  return out;
}

namespace {

Tensor crop(const Tensor& image, std::size_t target, std::size_t off_y,
            std::size_t off_x) {
  const std::size_t H = image.dim(1), W = image.dim(2);
  if (target > H || target > W) {
    throw DimensionError("crop: target " + std::to_string(target) +
                         " exceeds source " + shape_str(image.shape()));
  }
  const auto& v = image.values();
  std::vector<double> out(3 * target * target);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < target; ++y) {
      const std::size_t src = (c * H + off_y + y) * W + off_x;
      std::copy(v.begin() + src, v.begin() + src + target,
                out.begin() + (c * target + y) * target);
    }
  }
  return Tensor::from_data({3, target, target}, std::move(out));
}

}  // namespace

Tensor central_crop(const Tensor& image, std::size_t target) {
  check_image(image);
  const std::size_t H = image.dim(1), W = image.dim(2);
  if (target > H || target > W) {
    throw DimensionError("central_crop: target " + std::to_string(target) +
                         " exceeds source " + shape_str(image.shape()));
  }
  return crop(image, target, (H - target) / 2, (W - target) / 2);
}

Tensor random_crop(const Tensor& image, std::size_t target, Rng& rng) {
  check_image(image);
  const std::size_t H = image.dim(1), W = image.dim(2);
  if (target > H || target > W) {
    throw DimensionError("random_crop: target " + std::to_string(target) +
                         " exceeds source " + shape_str(image.shape()));
  }
  const std::size_t oy = rng.uniform_index(H - target + 1);
  const std::size_t ox = rng.uniform_index(W - target + 1);
  return crop(image, target, oy, ox);
}

void generate_dataset(const SceneSpec& scene, std::size_t count,
                      std::uint64_t seed, const std::filesystem::path& root) {
  if (count == 0) throw ContractError("generate_dataset: count must be >= 1");
  scene.validate();
  std::error_code ec;
  std::filesystem::create_directories(root / "images", ec);
  if (ec) {
    throw DataError("cannot create " + (root / "images").string() + ": " +
                    ec.message());
  }

  {
    std::ofstream f(root / "scene.txt");
    if (!f) throw DataError("cannot write " + (root / "scene.txt").string());
    f << scene.to_text();
  }

  std::ofstream manifest(root / "poses.csv", std::ios::binary);
  if (!manifest) {
    throw DataError("cannot write " + (root / "poses.csv").string());
  }
  manifest << "id,px,py,pz,qw,qx,qy,qz\n";

  Rng base(seed);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = base.fork(0xDA7A, i);
    const Pose pose = sample_pose(scene, rng);
    char id[16];
    std::snprintf(id, sizeof(id), "s%06zu", i);
    const Tensor image = render(scene, pose);
    write_ppm(root / "images" / (std::string(id) + ".ppm"),
              tensor_to_ppm(image));
    const auto& q = pose.orientation;
    manifest << id << "," << fmt(pose.position[0]) << ","
             << fmt(pose.position[1]) << "," << fmt(pose.position[2]) << ","
             << fmt(q.w) << "," << fmt(q.v[0]) << "," << fmt(q.v[1]) << ","
             << fmt(q.v[2]) << "\n";
  }
  if (!manifest) throw DataError("write failed: " + (root / "poses.csv").string());
}

LoadedDataset load_dataset(const std::filesystem::path& root) {
  LoadedDataset ds;
  {
    std::ifstream f(root / "scene.txt");
    if (!f) throw DataError("missing scene file: " + (root / "scene.txt").string());
    std::stringstream buf;
    buf << f.rdbuf();
    ds.scene = SceneSpec::from_text(buf.str());
  }
  std::ifstream manifest(root / "poses.csv");
  if (!manifest) {
    throw DataError("missing manifest: " + (root / "poses.csv").string());
  }
  std::string line;
  if (!std::getline(manifest, line)) {
    throw FormatError((root / "poses.csv").string() + ": empty manifest");
  }
  if (line.size() && line.back() == '\r') line.pop_back();
  if (line != "id,px,py,pz,qw,qx,qy,qz") {
    throw FormatError((root / "poses.csv").string() + ": unexpected header '" +
                      line + "'");
  }
  std::size_t row = 0;
  while (std::getline(manifest, line)) {
    if (line.size() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(is, field, ',')) fields.push_back(field);
    if (fields.size() != 8) {
      throw FormatError((root / "poses.csv").string() + ": row " +
                        std::to_string(row) + " has " +
                        std::to_string(fields.size()) + " fields");
    }
    PoseSample s;
    s.id = fields[0];
    s.pose.position = {std::stod(fields[1]), std::stod(fields[2]),
                       std::stod(fields[3])};
    UnitQuaternion q{std::stod(fields[4]),
                     {std::stod(fields[5]), std::stod(fields[6]),
                      std::stod(fields[7])}};
    if (std::fabs(q.norm() - 1.0) > 1e-3) {
      throw DataError((root / "poses.csv").string() + ": quaternion for '" +
                      s.id + "' off unit norm by more than 1e-3");
    }
    s.pose.orientation = canonicalize(q);
    const auto img_path = root / "images" / (s.id + ".ppm");
    if (!std::filesystem::exists(img_path)) {
      throw DataError("missing image file: " + img_path.string());
    }
    s.image = ppm_to_tensor(read_ppm(img_path));
    ds.samples.push_back(std::move(s));
    ++row;
  }
  if (ds.samples.empty()) {
    throw DataError((root / "poses.csv").string() + ": no samples");
  }
  return ds;
}

}  // namespace effloc
