#include "zsl/attention_viz.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "zsl/errors.hpp"
#include "zsl/image.hpp"
#include "kernels.hpp"

namespace zsl {

std::vector<double> processed_layer(const AttentionTrace& trace, std::size_t layer) {
  const std::size_t t = trace.tokens;
  if (layer >= trace.layers) throw ContractError("layer index out of range");
  std::vector<double> a(t * t, 0.0);
  for (std::size_t h = 0; h < trace.heads; ++h)
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = 0; j < t; ++j) a[i * t + j] += trace.at(layer, h, i, j);
  const double inv_heads = 1.0 / static_cast<double>(trace.heads);
  for (std::size_t i = 0; i < t; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < t; ++j) {
      double& v = a[i * t + j];
      v = v * inv_heads + (i == j ? 1.0 : 0.0);
      row += v;
    }
    for (std::size_t j = 0; j < t; ++j) a[i * t + j] /= row;
  }
  return a;
}

std::vector<double> rollout_matrix(const AttentionTrace& trace) {
  const std::size_t t = trace.tokens;
  if (trace.layers == 0 || trace.heads == 0 || t == 0) throw DimensionError("empty attention trace");
  if (trace.probs.size() != trace.layers * trace.heads * t * t) {
    throw DimensionError("attention trace holds " + std::to_string(trace.probs.size()) + " values, expected " +
                         std::to_string(trace.layers * trace.heads * t * t));
  }
  std::vector<double> r = processed_layer(trace, 0);
  std::vector<double> next(t * t);
  for (std::size_t l = 1; l < trace.layers; ++l) {
    const auto a = processed_layer(trace, l);
    kernels::gemm_nn(t, t, t, a.data(), t, r.data(), t, next.data(), t, false);
    r.swap(next);
  }
  return r;
}

AttentionMap rollout(const AttentionTrace& trace, std::size_t height, std::size_t width, std::string sample_id) {
  const std::size_t n = trace.grid_h * trace.grid_w;
  if (n + 1 != trace.tokens) throw DimensionError("patch grid does not match the token count");
  const auto r = rollout_matrix(trace);
  std::vector<double> grid(r.begin() + 1, r.begin() + static_cast<std::ptrdiff_t>(trace.tokens));

  AttentionMap map;
  map.height = height;
  map.width = width;
  map.sample_id = std::move(sample_id);
  map.method = kRolloutMethod;
  map.heat = resize_bilinear(grid, trace.grid_h, trace.grid_w, 1, height, width, PixelAlignment::kHalfPixel);
  const auto [lo, hi] = std::minmax_element(map.heat.begin(), map.heat.end());
  map.raw_min = *lo;
  map.raw_max = *hi;
  const double span = map.raw_max - map.raw_min;
  // Relative threshold: rounding in the layer product leaves ~1e-17 ripples.
  map.constant = !(span > 1e-12 * std::max(1.0, std::abs(map.raw_max)));
  for (double& v : map.heat) v = map.constant ? 0.0 : (v - map.raw_min) / span;
  return map;
}

std::array<double, 3> colormap(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const double pos = t * static_cast<double>(kColorStops.size() - 1);
  const auto i = std::min(static_cast<std::size_t>(pos), kColorStops.size() - 2);
  const double f = pos - static_cast<double>(i);
  std::array<double, 3> out{};
  for (std::size_t c = 0; c < 3; ++c) out[c] = (1.0 - f) * kColorStops[i][c] + f * kColorStops[i + 1][c];
  return out;
}

Tensor colorize(const AttentionMap& map) {
  Tensor out({map.height, map.width, 3});
  auto o = out.values();
  for (std::size_t p = 0; p < map.heat.size(); ++p) {
    const auto rgb = colormap(map.heat[p]);
    std::copy(rgb.begin(), rgb.end(), o.begin() + static_cast<std::ptrdiff_t>(3 * p));
  }
  return out;
}

Tensor fuse(const AttentionMap& map, const Tensor& image, double alpha) {
  if (image.shape().size() != 3 || image.shape()[0] != map.height || image.shape()[1] != map.width) {
    throw DimensionError("fuse: image " + shape_str(image.shape()) + " does not match map " +
                         std::to_string(map.height) + "x" + std::to_string(map.width));
  }
  if (map.heat.size() != map.height * map.width) throw DimensionError("fuse: heat map size mismatch");
  const Tensor gray = grayscale(image);
  const Tensor color = colorize(map);
  Tensor out({map.height, map.width, 3});
  auto g = gray.values();
  auto c = color.values();
  auto o = out.values();
  for (std::size_t p = 0; p < g.size(); ++p)
    for (std::size_t k = 0; k < 3; ++k) o[3 * p + k] = (1.0 - alpha) * g[p] + alpha * c[3 * p + k];
  return out;
}

nlohmann::json map_metadata(const AttentionMap& map) {
  return {
      {"sample_id", map.sample_id},
      {"method", map.method},
      {"height", map.height},
      {"width", map.width},
      {"normalization", {{"type", "min-max"}, {"raw_min", map.raw_min}, {"raw_max", map.raw_max}}},
      {"constant", map.constant},
      {"fusion_alpha", kFusionAlpha},
      {"colormap", "black-blue-cyan-green-yellow-red linear, 6 stops"},
  };
}

VizFiles write_visualization(const std::filesystem::path& dir, const AttentionMap& map, const Tensor& image) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const std::string stem = map.sample_id + "." + map.method;
  VizFiles files{dir / (stem + ".ppm"), dir / (stem + ".fusion.ppm"), dir / (stem + ".json")};
  write_ppm(files.map, colorize(map));
  write_ppm(files.fusion, fuse(map, image));
  std::ofstream js(files.sidecar, std::ios::binary);
  if (!js) throw IoError("cannot write " + files.sidecar.string());
  js << map_metadata(map).dump(2) << "\n";
  return files;
}

}  // namespace zsl
