#include "effloc/ppm.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include "effloc/errors.hpp"

namespace effloc {

void write_ppm(const std::filesystem::path& path, const PpmImage& img) {
  if (img.pixels.size() != img.width * img.height * 3) {
    throw FormatError("write_ppm: pixel buffer does not match dimensions");
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open for writing: " + path.string());
  f << "P6\n" << img.width << " " << img.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.pixels.data()),
          std::streamsize(img.pixels.size()));
  if (!f) throw DataError("write failed: " + path.string());
}

PpmImage read_ppm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open: " + path.string());
  std::string magic;
  f >> magic;
  if (magic != "P6") {
    throw FormatError(path.string() + ": not a binary PPM (magic '" + magic +
                      "')");
  }
  // The header allows comment lines starting with '#'.
  auto next_token = [&]() -> long {
    std::string tok;
    while (f >> tok) {
      if (tok[0] == '#') {
        std::string rest;
        std::getline(f, rest);
        continue;
      }
      return std::stol(tok);
    }
    throw FormatError(path.string() + ": truncated PPM header");
  };
  const long w = next_token();
  const long h = next_token();
  const long maxval = next_token();
  if (w <= 0 || h <= 0) {
    throw FormatError(path.string() + ": bad PPM dimensions");
  }
  if (maxval != 255) {
    throw FormatError(path.string() + ": unsupported maxval " +
                      std::to_string(maxval));
  }
  f.get();  // single whitespace byte after maxval
  PpmImage img;
  img.width = std::size_t(w);
  img.height = std::size_t(h);
  img.pixels.resize(img.width * img.height * 3);
  f.read(reinterpret_cast<char*>(img.pixels.data()),
         std::streamsize(img.pixels.size()));
  if (std::size_t(f.gcount()) != img.pixels.size()) {
    throw FormatError(path.string() + ": truncated pixel data (got " +
                      std::to_string(f.gcount()) + " of " +
                      std::to_string(img.pixels.size()) + " bytes)");
  }
  return img;
}

PpmImage tensor_to_ppm(const Tensor& image) {
  if (image.ndim() != 3 || image.dim(0) != 3) {
    throw DimensionError("tensor_to_ppm: expected [3,H,W], got " +
                         shape_str(image.shape()));
  }
  const std::size_t h = image.dim(1), w = image.dim(2);
  PpmImage img;
  img.width = w;
  img.height = h;
  img.pixels.resize(3 * w * h);
  const auto& v = image.values();
  const std::size_t plane = h * w;
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double x = (v[c * plane + i] + 1.0) * 127.5;
      const double q = std::nearbyint(x);
      img.pixels[i * 3 + c] =
          std::uint8_t(q < 0.0 ? 0.0 : (q > 255.0 ? 255.0 : q));
    }
  }
  return img;
}

Tensor ppm_to_tensor(const PpmImage& img) {
  const std::size_t plane = img.width * img.height;
  std::vector<double> data(3 * plane);
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      data[c * plane + i] = double(img.pixels[i * 3 + c]) / 127.5 - 1.0;
    }
  }
  return Tensor::from_data({3, img.height, img.width}, std::move(data));
}

}  // namespace effloc
