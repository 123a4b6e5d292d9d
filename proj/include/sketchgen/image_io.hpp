#pragma once

#include <filesystem>

#include "sketchgen/tensor.hpp"

namespace sketchgen::io {

// 8-bit grayscale PNG <-> [H,W] float tensor with values in [0,1].
TensorF read_png_gray(const std::filesystem::path& path);
void write_png_gray(const std::filesystem::path& path, const TensorF& image);

// Nearest-neighbour resize for icons whose stored resolution differs from the
// configured one.
TensorF resize_nearest(const TensorF& image, int64_t out_h, int64_t out_w);

} // namespace sketchgen::io
