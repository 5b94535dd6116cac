#include "zsl/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <set>

#include "zsl/errors.hpp"

namespace zsl {

namespace {

using Rgb = std::array<double, 3>;

enum class Glyph { kTopLeftSquare, kHorizontalStripe, kVerticalStripe, kBottomRight, kTopBar, kCorner };

struct Primitive {
  Glyph glyph;
  Rgb colour;
};

constexpr Rgb kRed{0.9, 0.1, 0.1};
constexpr Rgb kGreen{0.1, 0.8, 0.1};
constexpr Rgb kBlue{0.1, 0.2, 0.9};
constexpr Rgb kYellow{0.95, 0.9, 0.1};
constexpr Rgb kMagenta{0.8, 0.1, 0.8};
constexpr Rgb kCyan{0.1, 0.8, 0.85};
constexpr Rgb kWhite{1.0, 1.0, 1.0};
constexpr Rgb kBlack{0.0, 0.0, 0.0};

constexpr std::array<Primitive, kNumPrimitives> kPrimitives{{
    {Glyph::kTopLeftSquare, kRed},      {Glyph::kHorizontalStripe, kGreen}, {Glyph::kVerticalStripe, kBlue},
    {Glyph::kBottomRight, kYellow},     {Glyph::kTopBar, kMagenta},         {Glyph::kCorner, kCyan},
    {Glyph::kHorizontalStripe, kWhite}, {Glyph::kTopLeftSquare, kBlack},    {Glyph::kVerticalStripe, kRed},
    {Glyph::kCorner, kGreen},           {Glyph::kBottomRight, kBlue},       {Glyph::kTopBar, kYellow},
    {Glyph::kVerticalStripe, kMagenta}, {Glyph::kTopLeftSquare, kCyan},     {Glyph::kCorner, kWhite},
    {Glyph::kHorizontalStripe, kBlack},
}};

// u = row, v = column inside a cell of side s.
bool covers(Glyph glyph, std::size_t u, std::size_t v, std::size_t s) {
  const std::size_t q = std::max<std::size_t>(s / 4, 1);
  const std::size_t h = std::max<std::size_t>(s / 2, 1);
  switch (glyph) {
    case Glyph::kTopLeftSquare: return u < h && v < h;
    case Glyph::kHorizontalStripe: return u >= q && u < h;
    case Glyph::kVerticalStripe: return v >= q && v < h;
    case Glyph::kBottomRight: return u >= h && v >= q;
    case Glyph::kTopBar: return u < q;
    case Glyph::kCorner: return u >= s - q || v < q;
  }
  return false;
}

double quantize(double x) { return std::lround(std::clamp(x, 0.0, 1.0) * 255.0) / 255.0; }

}  // namespace

void SyntheticSpec::validate() const {
  if (num_classes < 2) throw ValidationError("synthetic data needs at least 2 classes");
  if (num_seen == 0 || num_seen >= num_classes) {
    throw ValidationError("need 0 < seen (" + std::to_string(num_seen) + ") < classes (" + std::to_string(num_classes) +
                          "): at least one unseen class is required");
  }
  if (num_attributes == 0 || num_attributes > kNumPrimitives) {
    throw ValidationError("attribute count must be in [1, " + std::to_string(kNumPrimitives) + "], got " +
                          std::to_string(num_attributes));
  }
  if (image_size < 8 || image_size % 4 != 0) throw ValidationError("synthetic image size must be a multiple of 4, >= 8");
  if (samples_per_class < 2) throw ValidationError("need at least 2 samples per class");
  if (!(noise_std >= 0.0)) throw ValidationError("noise_std must be >= 0");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ValidationError("test_fraction must be in (0, 1)");
}

Tensor render_attributes(std::span<const double> attributes, std::size_t image_size) {
  if (attributes.size() > kNumPrimitives) throw ValidationError("more attributes than drawable primitives");
  const std::size_t n = image_size, cell = n / 4;
  Tensor img({n, n, 3});
  auto px = img.values();
  std::fill(px.begin(), px.end(), 0.5);
  for (std::size_t k = 0; k < attributes.size(); ++k) {
    if (attributes[k] < 0.5) continue;
    const auto& prim = kPrimitives[k];
    const std::size_t r0 = (k / 4) * cell, c0 = (k % 4) * cell;
    for (std::size_t u = 0; u < cell; ++u)
      for (std::size_t v = 0; v < cell; ++v) {
        if (!covers(prim.glyph, u, v, cell)) continue;
        for (std::size_t ch = 0; ch < 3; ++ch) px[((r0 + u) * n + (c0 + v)) * 3 + ch] = prim.colour[ch];
      }
  }
  return img;
}

DatasetBundle make_synthetic(const SyntheticSpec& spec, Rng& rng) {
  spec.validate();
  const std::size_t k = spec.num_classes, m = spec.num_attributes;

  std::vector<double> rows;
  bool ok = false;
  for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
    rows.assign(k * m, 0.0);
    for (double& v : rows) v = rng.below(2) ? 1.0 : 0.0;
    std::set<std::vector<double>> distinct;
    ok = true;
    for (std::size_t c = 0; c < k && ok; ++c) {
      std::vector<double> row(rows.begin() + c * m, rows.begin() + (c + 1) * m);
      const bool all_zero = std::all_of(row.begin(), row.end(), [](double v) { return v == 0.0; });
      ok = !all_zero && distinct.insert(row).second;
    }
  }
  if (!ok) throw ValidationError("could not draw distinct nonzero attribute rows in 100 attempts");

  std::vector<int> ids(k);
  for (std::size_t c = 0; c < k; ++c) ids[c] = static_cast<int>(c);

  DatasetBundle bundle;
  bundle.attributes = AttributeMatrix(ids, m, rows);

  std::vector<int> order = ids;
  rng.shuffle(order);
  bundle.splits.seen_classes.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(spec.num_seen));
  bundle.splits.unseen_classes.assign(order.begin() + static_cast<std::ptrdiff_t>(spec.num_seen), order.end());
  std::sort(bundle.splits.seen_classes.begin(), bundle.splits.seen_classes.end());
  std::sort(bundle.splits.unseen_classes.begin(), bundle.splits.unseen_classes.end());

  const auto n_test = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(spec.test_fraction * static_cast<double>(spec.samples_per_class))));
  for (int c : ids) {
    const Tensor clean = render_attributes(bundle.attributes.row(c), spec.image_size);
    const bool seen = bundle.is_seen(c);
    for (std::size_t i = 0; i < spec.samples_per_class; ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "c%03d_%04zu", c, i);
      Tensor px = clean.clone();
      for (double& v : px.values()) v = quantize(v + (spec.noise_std > 0.0 ? spec.noise_std * rng.normal() : 0.0));
      bundle.images.push_back(ImageRecord{name, px, c});
      if (!seen) {
        bundle.splits.test_unseen.push_back(name);
      } else if (i < spec.samples_per_class - n_test) {
        bundle.splits.train_samples.push_back(name);
      } else {
        bundle.splits.test_seen.push_back(name);
      }
    }
  }
  bundle.reindex();
  validate_bundle(bundle);
  return bundle;
}

DatasetBundle generate_synthetic(const SyntheticSpec& spec, Rng& rng, const std::filesystem::path& out_dir) {
  DatasetBundle bundle = make_synthetic(spec, rng);
  write_dataset(bundle, out_dir);
  return bundle;
}

}  // namespace zsl
