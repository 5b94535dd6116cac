#pragma once

#include <cstddef>
#include <filesystem>
#include <span>

#include "zsl/dataset.hpp"
#include "zsl/rng.hpp"

namespace zsl {

// Number of distinct drawable primitives; caps the attribute count M.
//
// The image is split into a 4 x 4 grid of cells. Primitive k lives in cell
// (k / 4, k % 4) and has a fixed shape and colour (see kPrimitives in
// synthetic.cpp). Attribute k = 1 draws primitive k; the background is 0.5
// grey. Shapes are deliberately not rotation symmetric so the rotation of a
// rendered image is recoverable.
inline constexpr std::size_t kNumPrimitives = 16;

struct SyntheticSpec {
  std::size_t num_classes = 10;
  std::size_t num_seen = 8;
  std::size_t num_attributes = 16;
  std::size_t image_size = 32;
  std::size_t samples_per_class = 100;
  double noise_std = 0.05;
  // Share of each seen class held out as test_seen.
  double test_fraction = 0.2;

  void validate() const;
};

// Draws primitive k for every attribute with value >= 0.5 onto a grey canvas.
Tensor render_attributes(std::span<const double> attributes, std::size_t image_size);

// Builds the dataset in memory. Pixels are quantized to 8 bits so the bundle
// equals what load_dataset reads back after write_dataset.
DatasetBundle make_synthetic(const SyntheticSpec& spec, Rng& rng);

// make_synthetic + write_dataset.
DatasetBundle generate_synthetic(const SyntheticSpec& spec, Rng& rng, const std::filesystem::path& out_dir);

}  // namespace zsl
