#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "effloc/dataset.hpp"
#include "effloc/errors.hpp"
#include "effloc/ppm.hpp"
#include "effloc/scene.hpp"

using namespace effloc;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  return p;
}

Tensor test_image(std::uint64_t seed) {
  Rng rng(seed);
  return Tensor::uniform({3, 8, 8}, -1, 1, rng);
}

Tensor gray_image(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> data(3 * 64);
  for (std::size_t i = 0; i < 64; ++i) {
    const double v = rng.uniform(-0.9, 0.9);
    data[i] = v;
    data[64 + i] = v;
    data[128 + i] = v;
  }
  return Tensor::from_data({3, 8, 8}, std::move(data));
}

}  // namespace

TEST_CASE("ppm write/read round-trips the bytes") {
  Rng rng(1);
  PpmImage img;
  img.width = 9;
  img.height = 5;
  img.pixels.resize(9 * 5 * 3);
  for (auto& b : img.pixels) b = std::uint8_t(rng.uniform_index(256));
  const fs::path p = temp_dir("effloc_ppm") ;
  fs::create_directories(p);
  write_ppm(p / "x.ppm", img);
  const PpmImage back = read_ppm(p / "x.ppm");
  CHECK(back.width == img.width);
  CHECK(back.height == img.height);
  CHECK(back.pixels == img.pixels);
  fs::remove_all(p);
}

TEST_CASE("byte -> tensor -> byte is exact") {
  Rng rng(2);
  PpmImage img;
  img.width = img.height = 6;
  img.pixels.resize(108);
  for (auto& b : img.pixels) b = std::uint8_t(rng.uniform_index(256));
  CHECK(tensor_to_ppm(ppm_to_tensor(img)).pixels == img.pixels);
}

TEST_CASE("truncated ppm raises a format error") {
  const fs::path p = temp_dir("effloc_ppm_bad");
  fs::create_directories(p);
  std::ofstream f(p / "bad.ppm", std::ios::binary);
  f << "P6\n4 4\n255\n";
  f << "short";
  f.close();
  CHECK_THROWS_AS(read_ppm(p / "bad.ppm"), FormatError);
  fs::remove_all(p);
}

TEST_CASE("rendering the same pose twice is bit-identical") {
  const SceneSpec scene = default_scene();
  Pose pose;
  pose.position = {0.2, -0.3, 0.1};
  CHECK(render(scene, pose).values() == render(scene, pose).values());
}

TEST_CASE("moving the camera along +x shifts projections toward -x") {
  SceneSpec scene = default_scene();
  Pose a, b;
  a.position = {0, 0, 0};
  b.position = {0.4, 0, 0};
  const Tensor ia = render(scene, a);
  const Tensor ib = render(scene, b);
  // Compare horizontal brightness centroids of the red channel.
  auto centroid = [&](const Tensor& img) {
    const std::size_t R = scene.resolution;
    double sum = 0, weighted = 0;
    for (std::size_t y = 0; y < R; ++y)
      for (std::size_t x = 0; x < R; ++x) {
        const double v = img.values()[y * R + x] + 1.0;
        sum += v;
        weighted += v * double(x);
      }
    return weighted / sum;
  };
  CHECK(centroid(ib) < centroid(ia) - 1.0);
}

TEST_CASE("a landmark on the optical axis projects to the principal point") {
  SceneSpec scene = default_scene();
  scene.landmarks.clear();
  for (int i = 0; i < 4; ++i) {
    Landmark l;
    l.position = {0.3 * (i - 1.5), 0.4, 6.0};
    l.color = {0.0, 0.0, 0.0};  // invisible helpers for the 4-landmark floor
    l.radius = 0.01;
    scene.landmarks.push_back(l);
  }
  Landmark axis;
  axis.position = {0.0, 0.0, 5.0};
  axis.color = {1.0, 1.0, 1.0};
  axis.radius = 0.2;
  scene.landmarks.push_back(axis);

  Pose pose;  // camera at the origin looking along +z
  const Tensor img = render(scene, pose);
  const std::size_t R = scene.resolution;
  // Brightest pixel must be at the principal point (36, 36) +- the disc.
  double best = -2;
  std::size_t bx = 0, by = 0;
  for (std::size_t y = 0; y < R; ++y)
    for (std::size_t x = 0; x < R; ++x) {
      const double v = img.values()[y * R + x];
      if (v > best) {
        best = v;
        bx = x;
        by = y;
      }
    }
  CHECK(std::llabs(long(bx) - 36) <= 3);
  CHECK(std::llabs(long(by) - 36) <= 3);
}

TEST_CASE("a pose with every landmark behind the camera fails to render") {
  const SceneSpec scene = default_scene();
  Pose pose;
  pose.position = {0, 0, 20.0};  // far beyond every landmark
  CHECK_THROWS_AS(render(scene, pose), RenderError);
}

TEST_CASE("scene text round-trips") {
  const SceneSpec scene = default_scene();
  const SceneSpec back = SceneSpec::from_text(scene.to_text());
  CHECK(back.to_text() == scene.to_text());
  CHECK(back.landmarks.size() == scene.landmarks.size());
  CHECK(back.extent() == scene.extent());
}

TEST_CASE("scene validation enforces the landmark floor") {
  SceneSpec s = default_scene();
  s.landmarks.resize(3);
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("split is stable, index-only, and roughly 80/10/10") {
  std::size_t train = 0, val = 0, test = 0;
  for (std::size_t i = 0; i < 10000; ++i) {
    CHECK(split_of_index(i) == split_of_index(i));
    switch (split_of_index(i)) {
      case Split::Train: ++train; break;
      case Split::Val: ++val; break;
      case Split::Test: ++test; break;
    }
  }
  CHECK(train > 7700);
  CHECK(train < 8300);
  CHECK(val > 700);
  CHECK(test > 700);
  const auto tr = split_indices(100, Split::Train);
  const auto va = split_indices(100, Split::Val);
  const auto te = split_indices(100, Split::Test);
  CHECK(tr.size() + va.size() + te.size() == 100);
}

TEST_CASE("zero-strength jitter is the identity") {
  const Tensor img = test_image(3);
  Rng rng(4);
  const Tensor out = color_jitter(img, {0, 0, 0, 0}, rng);
  CHECK(out.values() == img.values());
}

TEST_CASE("unit factors leave the image unchanged") {
  const Tensor img = test_image(5);
  CHECK(adjust_brightness(img, 1.0).values() == img.values());
  CHECK(adjust_contrast(img, 1.0).values() == img.values());
  CHECK(adjust_saturation(img, 1.0).values() == img.values());
  CHECK(adjust_hue(img, 0.0).values() == img.values());
}

TEST_CASE("gray images are exact fixed points of saturation and hue") {
  const Tensor gray = gray_image(6);
  CHECK(adjust_saturation(gray, 0.35).values() == gray.values());
  CHECK(adjust_saturation(gray, 1.7).values() == gray.values());
  CHECK(adjust_hue(gray, 83.0).values() == gray.values());
  CHECK(adjust_hue(gray, -140.0).values() == gray.values());
  Rng rng(7);
  const Tensor out = color_jitter(gray, {0, 0, 0.8, 0.5}, rng);
  CHECK(out.values() == gray.values());
}

TEST_CASE("jitter keeps values inside the unit range") {
  const Tensor img = test_image(8);
  Rng rng(9);
  for (int i = 0; i < 20; ++i) {
    const Tensor out = color_jitter(img, {0.7, 0.7, 0.7, 0.5}, rng);
    for (double v : out.values()) {
      CHECK(v >= -1.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("jitter changes non-gray images and is seed-reproducible") {
  const Tensor img = test_image(10);
  Rng r1(11), r2(11), r3(12);
  const Tensor a = color_jitter(img, {0.5, 0.5, 0.5, 0.3}, r1);
  const Tensor b = color_jitter(img, {0.5, 0.5, 0.5, 0.3}, r2);
  const Tensor c = color_jitter(img, {0.5, 0.5, 0.5, 0.3}, r3);
  CHECK(a.values() == b.values());
  CHECK(a.values() != img.values());
  CHECK(a.values() != c.values());
}

TEST_CASE("hue rotation preserves luma while the gamut is not clipped") {
  Rng rng(13);
  const Tensor img = Tensor::uniform({3, 8, 8}, -0.35, 0.35, rng);
  const Tensor out = adjust_hue(img, 60.0);
  const std::size_t plane = 64;
  for (std::size_t i = 0; i < plane; ++i) {
    const auto luma = [&](const Tensor& t) {
      return 0.299 * t.values()[i] + 0.587 * t.values()[plane + i] +
             0.114 * t.values()[2 * plane + i];
    };
    CHECK(std::fabs(luma(out) - luma(img)) < 1e-12);
  }
}

TEST_CASE("central crop picks the exact center window") {
  Rng rng(14);
  Tensor img = Tensor::uniform({3, 256, 256}, -1, 1, rng);
  Tensor crop = central_crop(img, 224);
  CHECK(crop.shape() == Shape{3, 224, 224});
  // Manual index arithmetic oracle: offset (256-224)/2 = 16.
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y : {std::size_t(0), std::size_t(100), std::size_t(223)})
      for (std::size_t x : {std::size_t(0), std::size_t(57), std::size_t(223)}) {
        CHECK(crop.values()[(c * 224 + y) * 224 + x] ==
              img.values()[(c * 256 + y + 16) * 256 + x + 16]);
      }
}

TEST_CASE("random crop windows stay in bounds and vary") {
  Rng rng(15);
  Tensor img = Tensor::uniform({3, 72, 72}, -1, 1, rng);
  Rng c1(16), c2(17);
  Tensor a = random_crop(img, 64, c1);
  Tensor b = random_crop(img, 64, c2);
  CHECK(a.shape() == Shape{3, 64, 64});
  CHECK(a.values() != b.values());
  CHECK_THROWS_AS(random_crop(img, 80, c1), DimensionError);
}

TEST_CASE("generate/load round trip preserves everything") {
  const fs::path root = temp_dir("effloc_ds_roundtrip");
  const SceneSpec scene = default_scene();
  generate_dataset(scene, 25, 7, root);

  const LoadedDataset ds = load_dataset(root);
  CHECK(ds.samples.size() == 25);
  CHECK(ds.scene.to_text() == scene.to_text());
  for (const auto& s : ds.samples) {
    CHECK(s.image.shape() == Shape{3, 72, 72});
    for (double v : s.image.values()) {
      CHECK(v >= -1.0);
      CHECK(v <= 1.0);
    }
    CHECK(s.pose.orientation.w >= 0.0);  // manifest stores canonical form
  }

  // Re-rendering from the loaded poses reproduces the stored bytes exactly.
  for (const auto& s : ds.samples) {
    const PpmImage rerendered = tensor_to_ppm(render(ds.scene, s.pose));
    const PpmImage stored = read_ppm(root / "images" / (s.id + ".ppm"));
    CHECK(rerendered.pixels == stored.pixels);
  }
  fs::remove_all(root);
}

TEST_CASE("generation is byte-deterministic in the seed") {
  const fs::path r1 = temp_dir("effloc_ds_det1");
  const fs::path r2 = temp_dir("effloc_ds_det2");
  const SceneSpec scene = default_scene();
  generate_dataset(scene, 10, 99, r1);
  generate_dataset(scene, 10, 99, r2);
  for (const auto& name : {"poses.csv", "scene.txt"}) {
    std::ifstream a(r1 / name, std::ios::binary), b(r2 / name, std::ios::binary);
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    CHECK(sa.str() == sb.str());
  }
  for (int i = 0; i < 10; ++i) {
    char id[16];
    std::snprintf(id, sizeof(id), "s%06d.ppm", i);
    CHECK(read_ppm(r1 / "images" / id).pixels ==
          read_ppm(r2 / "images" / id).pixels);
  }
  fs::remove_all(r1);
  fs::remove_all(r2);
}

TEST_CASE("manifest row count equals the sample count") {
  const fs::path root = temp_dir("effloc_ds_count");
  generate_dataset(default_scene(), 10, 1, root);
  std::ifstream f(root / "poses.csv");
  std::string line;
  std::size_t rows = 0;
  std::getline(f, line);  // header
  while (std::getline(f, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == 10);
  fs::remove_all(root);
}

TEST_CASE("loading rejects a missing image and a bad quaternion") {
  const fs::path root = temp_dir("effloc_ds_bad");
  generate_dataset(default_scene(), 6, 3, root);

  SUBCASE("missing image file") {
    fs::remove(root / "images" / "s000002.ppm");
    CHECK_THROWS_WITH_AS(load_dataset(root), doctest::Contains("s000002"),
                         DataError);
  }
  SUBCASE("denormalized quaternion") {
    std::ifstream in(root / "poses.csv");
    std::stringstream buf;
    buf << in.rdbuf();
    in.close();
    std::string text = buf.str();
    // Corrupt the first data row's qw field.
    const std::size_t header_end = text.find('\n');
    std::size_t field = text.find(',', header_end);
    for (int skip = 0; skip < 3; ++skip) field = text.find(',', field + 1);
    text = text.substr(0, field + 1) + "0.5" +
           text.substr(text.find(',', field + 1));
    std::ofstream out(root / "poses.csv", std::ios::binary);
    out << text;
    out.close();
    CHECK_THROWS_AS(load_dataset(root), DataError);
  }
  fs::remove_all(root);
}
