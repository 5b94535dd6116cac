#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "zsl/tensor.hpp"

namespace zsl {

// Images are Tensor[H x W x C] with values in [0, 1].

// Reads a binary 8-bit PPM (P6). Returns Tensor[H x W x 3].
Tensor read_ppm(const std::filesystem::path& path);
// Writes Tensor[H x W x 3] (or [H x W x 1], replicated) as P6, rounding to
// the nearest of 256 levels after clamping to [0, 1].
void write_ppm(const std::filesystem::path& path, const Tensor& image);
std::vector<unsigned char> encode_ppm(const Tensor& image);

enum class PixelAlignment {
  // Corner pixel centers of source and destination coincide.
  kCorners,
  // Pixel centers at (i + 0.5) in both grids, edges clamped.
  kHalfPixel,
};

// Bilinear resize of a row-major [h x w x c] buffer.
std::vector<double> resize_bilinear(const std::vector<double>& src, std::size_t h, std::size_t w, std::size_t c,
                                    std::size_t out_h, std::size_t out_w, PixelAlignment align);

Tensor resize_image(const Tensor& image, std::size_t out_h, std::size_t out_w);

// ITU-R BT.601 luma, one channel [H x W x 1].
Tensor grayscale(const Tensor& image);

}  // namespace zsl
