#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "zsl/tensor.hpp"
#include "zsl/vit.hpp"

namespace zsl {

inline constexpr const char* kRolloutMethod = "rollout";
inline constexpr double kFusionAlpha = 0.5;

struct AttentionMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> heat;  // row-major, [0, 1]
  std::string sample_id;
  std::string method;
  // Range of the raw upsampled map before min-max normalization.
  double raw_min = 0.0;
  double raw_max = 0.0;
  bool constant = false;

  double at(std::size_t y, std::size_t x) const { return heat[y * width + x]; }
};

// Head-averaged, identity-augmented, row-renormalized attention of one layer
// ([T x T], row-stochastic).
std::vector<double> processed_layer(const AttentionTrace& trace, std::size_t layer);

// Product of the processed layers, last layer leftmost: A_L ... A_1.
std::vector<double> rollout_matrix(const AttentionTrace& trace);

// Class-token row of the rollout over the patch grid, half-pixel bilinear
// upsampling to height x width, min-max normalized. A constant map is
// flagged and set to zero.
AttentionMap rollout(const AttentionTrace& trace, std::size_t height, std::size_t width, std::string sample_id = {});

// Six-stop linear lookup: black, blue, cyan, green, yellow, red. Zero heat is
// black, so a fusion with an all-zero map stays achromatic.
inline constexpr std::array<std::array<double, 3>, 6> kColorStops{{
    {0.0, 0.0, 0.0},
    {0.0, 0.0, 1.0},
    {0.0, 1.0, 1.0},
    {0.0, 1.0, 0.0},
    {1.0, 1.0, 0.0},
    {1.0, 0.0, 0.0},
}};
std::array<double, 3> colormap(double t);

// Heat map as an RGB image [H x W x 3].
Tensor colorize(const AttentionMap& map);

// (1 - alpha) * grayscale(image) + alpha * colorize(map), per channel.
Tensor fuse(const AttentionMap& map, const Tensor& image, double alpha = kFusionAlpha);

nlohmann::json map_metadata(const AttentionMap& map);

struct VizFiles {
  std::filesystem::path map;
  std::filesystem::path fusion;
  std::filesystem::path sidecar;
};

// Writes <id>.<method>.ppm, <id>.<method>.fusion.ppm and <id>.<method>.json.
VizFiles write_visualization(const std::filesystem::path& dir, const AttentionMap& map, const Tensor& image);

}  // namespace zsl
