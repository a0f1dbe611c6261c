#include "effloc/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "effloc/errors.hpp"

namespace effloc {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

constexpr double kNearPlane = 0.05;
constexpr double kBackground = 0.1;  // in [0,1]

}  // namespace

void SceneSpec::validate() const {
  if (landmarks.size() < 4) {
    throw ConfigError("scene needs at least 4 landmarks for observability");
  }
  if (focal <= 0 || resolution == 0) {
    throw ConfigError("scene: focal and resolution must be positive");
  }
  for (std::size_t d = 0; d < 3; ++d) {
    if (box_min[d] > box_max[d]) {
      throw ConfigError("scene: sampling box is inverted");
    }
  }
  // Every landmark must stay in front of, and close to the frustum of, every
  // box corner (identity orientation; the rotation range adds slack).
  const double margin = 0.25 * double(resolution);
  for (std::size_t li = 0; li < landmarks.size(); ++li) {
    for (int corner = 0; corner < 8; ++corner) {
      const Vec3 cam{(corner & 1) ? box_max[0] : box_min[0],
                     (corner & 2) ? box_max[1] : box_min[1],
                     (corner & 4) ? box_max[2] : box_min[2]};
      const Vec3 rel = vec3_sub(landmarks[li].position, cam);
      if (rel[2] <= kNearPlane) {
        throw ConfigError("scene: landmark " + std::to_string(li) +
                          " not in front of sampling box corner");
      }
      const double u = cx + focal * rel[0] / rel[2];
      const double v = cy + focal * rel[1] / rel[2];
      if (u < -margin || u > double(resolution) + margin || v < -margin ||
          v > double(resolution) + margin) {
        throw ConfigError("scene: landmark " + std::to_string(li) +
                          " leaves the frustum of the sampling box");
      }
    }
  }
}

double SceneSpec::extent() const {
  const Vec3 d = vec3_sub(box_max, box_min);
  return vec3_norm(d);
}

std::string SceneSpec::to_text() const {
  std::ostringstream os;
  os << "format_version = 1\n";
  os << "resolution = " << resolution << "\n";
  os << "focal = " << fmt(focal) << "\n";
  os << "principal_point = " << fmt(cx) << "," << fmt(cy) << "\n";
  os << "box_min = " << fmt(box_min[0]) << "," << fmt(box_min[1]) << ","
     << fmt(box_min[2]) << "\n";
  os << "box_max = " << fmt(box_max[0]) << "," << fmt(box_max[1]) << ","
     << fmt(box_max[2]) << "\n";
  os << "max_rotation_deg = " << fmt(max_rotation_deg) << "\n";
  os << "landmark_count = " << landmarks.size() << "\n";
  for (const auto& l : landmarks) {
    os << "landmark = " << fmt(l.position[0]) << "," << fmt(l.position[1])
       << "," << fmt(l.position[2]) << "," << fmt(l.color[0]) << ","
       << fmt(l.color[1]) << "," << fmt(l.color[2]) << "," << fmt(l.radius)
       << "\n";
  }
  return os.str();
}

namespace {

std::vector<double> parse_doubles(const std::string& v) {
  std::vector<double> out;
  std::istringstream is(v);
  std::string item;
  while (std::getline(is, item, ',')) out.push_back(std::stod(item));
  return out;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

SceneSpec SceneSpec::from_text(const std::string& text) {
  SceneSpec s;
  s.landmarks.clear();
  std::size_t declared = 0;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) throw FormatError("scene line without '=': " + t);
    const std::string key = trim(t.substr(0, eq));
    const std::string val = trim(t.substr(eq + 1));
    if (key == "format_version") {
      if (std::stoul(val) != 1) {
        throw FormatError("scene: unsupported format version " + val);
      }
    } else if (key == "resolution") {
      s.resolution = std::stoull(val);
    } else if (key == "focal") {
      s.focal = std::stod(val);
    } else if (key == "principal_point") {
      auto d = parse_doubles(val);
      if (d.size() != 2) throw FormatError("scene: bad principal_point");
      s.cx = d[0];
      s.cy = d[1];
    } else if (key == "box_min") {
      auto d = parse_doubles(val);
      if (d.size() != 3) throw FormatError("scene: bad box_min");
      s.box_min = {d[0], d[1], d[2]};
    } else if (key == "box_max") {
      auto d = parse_doubles(val);
      if (d.size() != 3) throw FormatError("scene: bad box_max");
      s.box_max = {d[0], d[1], d[2]};
    } else if (key == "max_rotation_deg") {
      s.max_rotation_deg = std::stod(val);
    } else if (key == "landmark_count") {
      declared = std::stoull(val);
    } else if (key == "landmark") {
      auto d = parse_doubles(val);
      if (d.size() != 7) throw FormatError("scene: bad landmark line");
      Landmark l;
      l.position = {d[0], d[1], d[2]};
      l.color = {d[3], d[4], d[5]};
      l.radius = d[6];
      s.landmarks.push_back(l);
    } else {
      throw FormatError("scene: unknown key " + key);
    }
  }
  if (declared != s.landmarks.size()) {
    throw FormatError("scene: landmark_count " + std::to_string(declared) +
                      " does not match " + std::to_string(s.landmarks.size()) +
                      " landmark lines");
  }
  s.validate();
  return s;
}

Tensor render(const SceneSpec& scene, const Pose& pose) {
  const std::size_t R = scene.resolution;
  const std::size_t plane = R * R;
  std::vector<double> img(3 * plane, kBackground);

  struct Projected {
    double u, v, r, z;
    std::array<double, 3> color;
  };
  std::vector<Projected> visible;
  for (const auto& l : scene.landmarks) {
    const Vec3 rel = vec3_sub(l.position, pose.position);
    const Vec3 cam = rotate_vector_inverse(pose.orientation, rel);
    if (cam[2] <= kNearPlane) continue;
    Projected p;
    p.u = scene.cx + scene.focal * cam[0] / cam[2];
    p.v = scene.cy + scene.focal * cam[1] / cam[2];
    p.r = scene.focal * l.radius / cam[2];
    p.z = cam[2];
    p.color = l.color;
    visible.push_back(p);
  }
  if (visible.empty()) {
    throw RenderError("render: every landmark is behind the camera");
  }
  // Painter's algorithm: far landmarks first, near ones composite on top.
  std::stable_sort(visible.begin(), visible.end(),
                   [](const Projected& a, const Projected& b) {
                     return a.z > b.z;
                   });

  for (const auto& p : visible) {
    const long y_lo = std::max(0L, long(std::floor(p.v - p.r - 1.0)));
    const long y_hi = std::min(long(R) - 1, long(std::ceil(p.v + p.r + 1.0)));
    const long x_lo = std::max(0L, long(std::floor(p.u - p.r - 1.0)));
    const long x_hi = std::min(long(R) - 1, long(std::ceil(p.u + p.r + 1.0)));
    for (long y = y_lo; y <= y_hi; ++y) {
      for (long x = x_lo; x <= x_hi; ++x) {
        const double dx = (double(x) + 0.5) - p.u;
        const double dy = (double(y) + 0.5) - p.v;
        const double dist = std::sqrt(dx * dx + dy * dy);
        // One-pixel soft rim so sub-pixel motion shows up in the image.
        const double alpha = std::clamp(p.r - dist + 0.5, 0.0, 1.0);
        if (alpha <= 0.0) continue;
        const std::size_t px = std::size_t(y) * R + std::size_t(x);
        for (std::size_t c = 0; c < 3; ++c) {
          img[c * plane + px] =
              (1.0 - alpha) * img[c * plane + px] + alpha * p.color[c];
        }
      }
    }
  }
  // Map [0,1] intensities into the [-1,1] convention.
  for (auto& v : img) v = v * 2.0 - 1.0;
  return Tensor::from_data({3, R, R}, std::move(img));
}

SceneSpec default_scene() {
  SceneSpec s;
  s.resolution = 72;
  s.focal = 70.0;
  s.cx = 36.0;
  s.cy = 36.0;
  s.box_min = {-1.0, -1.0, -0.5};
  s.box_max = {1.0, 1.0, 0.5};
  s.max_rotation_deg = 8.0;
  // Two depth rings of distinctly colored, distinctly sized markers.
  const std::array<std::array<double, 3>, 16> colors{{
      {0.95, 0.15, 0.15}, {0.15, 0.95, 0.15}, {0.20, 0.35, 0.95},
      {0.95, 0.85, 0.15}, {0.90, 0.25, 0.90}, {0.15, 0.90, 0.90},
      {0.95, 0.55, 0.15}, {0.60, 0.95, 0.30}, {0.55, 0.30, 0.90},
      {0.90, 0.90, 0.90}, {0.80, 0.45, 0.45}, {0.40, 0.70, 0.40},
      {0.35, 0.55, 0.80}, {0.75, 0.70, 0.35}, {0.70, 0.40, 0.75},
      {0.45, 0.75, 0.70},
  }};
  for (std::size_t i = 0; i < 8; ++i) {
    const double a = 2.0 * M_PI * double(i) / 8.0;
    Landmark l;
    l.position = {1.6 * std::cos(a), 1.6 * std::sin(a), 5.0 + 0.25 * double(i % 4)};
    l.color = colors[i];
    l.radius = 0.28 + 0.05 * double(i % 3);
    s.landmarks.push_back(l);
  }
  for (std::size_t i = 0; i < 8; ++i) {
    const double a = 2.0 * M_PI * (double(i) + 0.5) / 8.0;
    Landmark l;
    l.position = {0.9 * std::cos(a), 0.9 * std::sin(a), 7.5 + 0.3 * double(i % 3)};
    l.color = colors[8 + i];
    l.radius = 0.4 + 0.06 * double(i % 3);
    s.landmarks.push_back(l);
  }
  s.validate();
  return s;
}

Pose sample_pose(const SceneSpec& scene, Rng& rng) {
  Pose p;
  for (std::size_t d = 0; d < 3; ++d) {
    p.position[d] = rng.uniform(scene.box_min[d], scene.box_max[d]);
  }
  // Uniform random axis, uniform angle within the perturbation range.
  Vec3 axis{rng.normal(), rng.normal(), rng.normal()};
  const double n = vec3_norm(axis);
  if (n < 1e-12) {
    axis = {1.0, 0.0, 0.0};
  } else {
    axis = {axis[0] / n, axis[1] / n, axis[2] / n};
  }
  const double angle =
      rng.uniform(0.0, scene.max_rotation_deg * M_PI / 180.0);
  p.orientation = quat_exp({axis[0] * angle / 2.0, axis[1] * angle / 2.0,
                            axis[2] * angle / 2.0});
  p.orientation = canonicalize(p.orientation);
  return p;
}

}  // namespace effloc
