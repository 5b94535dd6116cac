#include <doctest.h>

#include <cmath>
#include <fstream>
#include <iterator>

#include "test_util.hpp"
#include "zsl/attention_viz.hpp"
#include "zsl/errors.hpp"
#include "zsl/image.hpp"
#include "zsl/vit.hpp"

using namespace zsl;

namespace {

AttentionTrace uniform_trace(std::size_t layers, std::size_t heads, std::size_t grid) {
  AttentionTrace t;
  t.layers = layers;
  t.heads = heads;
  t.grid_h = t.grid_w = grid;
  t.tokens = grid * grid + 1;
  t.probs.assign(layers * heads * t.tokens * t.tokens, 1.0 / static_cast<double>(t.tokens));
  return t;
}

// Random row-stochastic attention.
AttentionTrace random_trace(std::size_t layers, std::size_t heads, std::size_t grid, Rng& rng) {
  auto t = uniform_trace(layers, heads, grid);
  for (std::size_t r = 0; r < layers * heads * t.tokens; ++r) {
    oracle::Vec logits(t.tokens);
    for (double& x : logits) x = 2.0 * rng.normal();
    auto p = oracle::softmax(logits);
    std::copy(p.begin(), p.end(), t.probs.begin() + static_cast<std::ptrdiff_t>(r * t.tokens));
  }
  return t;
}

ViTModel seeded_model() {
  ViTConfig c;
  c.height = c.width = 16;
  c.patch = 4;
  c.dim = 16;
  c.depth = 2;
  c.heads = 2;
  c.mlp_ratio = 2;
  c.num_attributes = 4;
  Rng rng(7);
  auto m = ViTModel::initialize(c, rng);
  // Larger weights than the default init so the map has visible structure.
  for (auto& p : m.parameters())
    if (p.name.find("norm") == std::string::npos)
      for (double& x : p.tensor.values()) x = 0.5 * rng.normal();
  return m;
}

Tensor seeded_image() {
  Rng rng(77);
  Tensor img({16, 16, 3});
  for (double& x : img.values()) x = rng.uniform();
  return img;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_SUITE("attention-viz") {
  TEST_CASE("uniform attention gives a constant map") {
    auto map = rollout(uniform_trace(1, 2, 3), 12, 12, "u");
    CHECK(map.constant);
    CHECK(map.method == kRolloutMethod);
    CHECK(map.sample_id == "u");
    for (double h : map.heat) CHECK(h == 0.0);
  }

  TEST_CASE("processed layers are row-stochastic") {
    Rng rng(1);
    auto t = random_trace(3, 4, 3, rng);
    for (std::size_t l = 0; l < 3; ++l) {
      auto a = processed_layer(t, l);
      for (std::size_t i = 0; i < t.tokens; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < t.tokens; ++j) {
          CHECK(a[i * t.tokens + j] >= 0.0);
          s += a[i * t.tokens + j];
        }
        CHECK(std::abs(s - 1.0) < 1e-14);
      }
    }
    // So is their product.
    auto r = rollout_matrix(t);
    for (std::size_t i = 0; i < t.tokens; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < t.tokens; ++j) s += r[i * t.tokens + j];
      CHECK(std::abs(s - 1.0) < 1e-13);
    }
  }

  TEST_CASE("rollout matches the matrix-product oracle") {
    auto m = seeded_model();
    auto f = forward(m, seeded_image());
    REQUIRE(f.trace.layers == 2);
    const auto want = oracle::rollout_class_row(f.trace.probs, 2, 2, f.trace.tokens);
    const auto r = rollout_matrix(f.trace);
    for (std::size_t j = 1; j < f.trace.tokens; ++j) CHECK(std::abs(r[j] - want[j - 1]) < 1e-10);

    // At grid resolution the heat is the min-max normalized class row.
    auto map = rollout(f.trace, 4, 4);
    const double lo = *std::min_element(want.begin(), want.end());
    const double hi = *std::max_element(want.begin(), want.end());
    for (std::size_t p = 0; p < 16; ++p) CHECK(std::abs(map.heat[p] - (want[p] - lo) / (hi - lo)) < 1e-10);
    CHECK(map.raw_min == doctest::Approx(lo).epsilon(1e-12));
    CHECK(map.raw_max == doctest::Approx(hi).epsilon(1e-12));
  }

  TEST_CASE("normalized map spans [0, 1]") {
    Rng rng(2);
    auto map = rollout(random_trace(2, 2, 4, rng), 32, 32);
    CHECK_FALSE(map.constant);
    CHECK(*std::min_element(map.heat.begin(), map.heat.end()) == 0.0);
    CHECK(*std::max_element(map.heat.begin(), map.heat.end()) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(map.heat.size() == 32u * 32u);
  }

  TEST_CASE("rollout does not depend on head order") {
    Rng rng(3);
    auto t = random_trace(2, 3, 3, rng);
    auto swapped = t;
    const std::size_t block = t.tokens * t.tokens;
    for (std::size_t l = 0; l < t.layers; ++l) {
      auto base = swapped.probs.begin() + static_cast<std::ptrdiff_t>(l * t.heads * block);
      std::rotate(base, base + static_cast<std::ptrdiff_t>(block), base + static_cast<std::ptrdiff_t>(3 * block));
    }
    auto a = rollout(t, 12, 12), b = rollout(swapped, 12, 12);
    for (std::size_t i = 0; i < a.heat.size(); ++i) CHECK(std::abs(a.heat[i] - b.heat[i]) < 1e-12);
  }

  TEST_CASE("upsampling keeps a dominant patch brightest") {
    // Half-pixel bilinear sampling never lands on a patch centre at an even
    // scale factor, so the guarantee needs a peak that stands out from its
    // neighbours; here every row attends mostly to one random patch.
    Rng rng(4);
    for (int trial = 0; trial < 10; ++trial) {
      auto t = random_trace(2, 2, 4, rng);
      const std::size_t peak = 1 + rng.below(16);
      for (std::size_t r = 0; r < t.layers * t.heads * t.tokens; ++r) {
        auto row = t.probs.begin() + static_cast<std::ptrdiff_t>(r * t.tokens);
        for (std::size_t j = 0; j < t.tokens; ++j) row[static_cast<std::ptrdiff_t>(j)] *= 0.3;
        row[static_cast<std::ptrdiff_t>(peak)] += 0.7;
      }
      auto r = rollout_matrix(t);
      std::size_t best = 1;
      for (std::size_t j = 2; j < t.tokens; ++j)
        if (r[j] > r[best]) best = j;
      REQUIRE(best == peak);
      const std::size_t py = (best - 1) / 4, px = (best - 1) % 4;
      auto map = rollout(t, 32, 32);
      std::size_t arg = 0;
      for (std::size_t i = 1; i < map.heat.size(); ++i)
        if (map.heat[i] > map.heat[arg]) arg = i;
      CHECK(arg / 32 / 8 == py);
      CHECK(arg % 32 / 8 == px);
    }
  }

  TEST_CASE("colormap endpoints and stops") {
    CHECK(colormap(0.0) == kColorStops.front());
    CHECK(colormap(1.0) == kColorStops.back());
    CHECK(colormap(-3.0) == kColorStops.front());
    CHECK(colormap(7.0) == kColorStops.back());
    CHECK(colormap(0.4) == kColorStops[2]);
  }

  TEST_CASE("fusion is a convex combination") {
    Rng rng(5);
    auto map = rollout(random_trace(2, 2, 4, rng), 16, 16);
    auto img = seeded_image();
    const double alpha = 0.3;
    auto fused = fuse(map, img, alpha);
    for (int k = 0; k < 10; ++k) {
      const std::size_t p = rng.below(256);
      const auto& v = img.values();
      const double gray = 0.299 * v[3 * p] + 0.587 * v[3 * p + 1] + 0.114 * v[3 * p + 2];
      const auto rgb = colormap(map.heat[p]);
      for (std::size_t c = 0; c < 3; ++c)
        CHECK(fused.values()[3 * p + c] == doctest::Approx((1 - alpha) * gray + alpha * rgb[c]).epsilon(1e-14));
    }
  }

  TEST_CASE("zero heat leaves a grayscale image") {
    AttentionMap map;
    map.height = map.width = 16;
    map.heat.assign(256, 0.0);
    auto fused = fuse(map, seeded_image());
    const auto gray = grayscale(seeded_image());
    for (std::size_t p = 0; p < 256; ++p) {
      CHECK(fused.values()[3 * p] == fused.values()[3 * p + 1]);
      CHECK(fused.values()[3 * p] == fused.values()[3 * p + 2]);
      CHECK(fused.values()[3 * p] == doctest::Approx((1 - kFusionAlpha) * gray.values()[p]));
    }
  }

  TEST_CASE("fusion geometry mismatch") {
    AttentionMap map;
    map.height = map.width = 8;
    map.heat.assign(64, 0.0);
    CHECK_THROWS_AS(fuse(map, seeded_image()), DimensionError);
  }

  TEST_CASE("visualization files and golden output") {
    auto m = seeded_model();
    auto img = seeded_image();
    auto map = rollout(forward(m, img).trace, 16, 16, "golden");
    const auto dir = testutil::temp_dir("viz");
    auto files = write_visualization(dir, map, img);
    CHECK(files.map.filename() == "golden.rollout.ppm");
    CHECK(files.fusion.filename() == "golden.rollout.fusion.ppm");
    CHECK(files.sidecar.filename() == "golden.rollout.json");
    auto meta = nlohmann::json::parse(slurp(files.sidecar));
    CHECK(meta["method"] == "rollout");
    CHECK(meta["sample_id"] == "golden");
    CHECK(meta["fusion_alpha"].get<double>() == kFusionAlpha);
    const std::filesystem::path golden = ZSL_TEST_DATA_DIR;
    CHECK(slurp(files.map) == slurp(golden / "golden.rollout.ppm"));
    CHECK(slurp(files.fusion) == slurp(golden / "golden.rollout.fusion.ppm"));
  }
}
