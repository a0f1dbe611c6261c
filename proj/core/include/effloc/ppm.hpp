#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "effloc/tensor.hpp"

namespace effloc {

/// 8-bit RGB raster, row-major, interleaved.
struct PpmImage {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> pixels;  // 3 * width * height
};

/// Binary portable pixmap, P6, maxval 255.
void write_ppm(const std::filesystem::path& path, const PpmImage& img);
PpmImage read_ppm(const std::filesystem::path& path);

/// [3,H,W] tensor in [-1,1] -> bytes (round, clamp). Quantization is the
/// only lossy step in the dataset pipeline; byte -> tensor -> byte is exact.
PpmImage tensor_to_ppm(const Tensor& image);
Tensor ppm_to_tensor(const PpmImage& img);

}  // namespace effloc
