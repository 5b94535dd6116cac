#include "zsl/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "zsl/errors.hpp"

namespace zsl {

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in) {
  std::string tok;
  char ch;
  while (in.get(ch)) {
    if (ch == '#') {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(ch);
  }
  return tok;
}

}  // namespace

Tensor read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  if (header_token(in) != "P6") throw ValidationError(path.string() + ": not a binary PPM (P6)");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(header_token(in));
    h = std::stoul(header_token(in));
    maxval = std::stoul(header_token(in));
  } catch (const std::exception&) {
    throw ValidationError(path.string() + ": malformed PPM header");
  }
  if (w == 0 || h == 0 || maxval != 255) throw ValidationError(path.string() + ": only 8-bit PPM with nonzero size is supported");
  std::vector<unsigned char> raw(w * h * 3);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw ValidationError(path.string() + ": truncated pixel data");
  std::vector<double> px(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) px[i] = raw[i] / 255.0;
  return Tensor({h, w, 3}, std::move(px));
}

std::vector<unsigned char> encode_ppm(const Tensor& image) {
  if (image.dim() != 3 || (image.size(2) != 3 && image.size(2) != 1)) {
    throw DimensionError("PPM output needs [H x W x 3] or [H x W x 1], got " + shape_str(image.shape()));
  }
  const std::size_t h = image.size(0), w = image.size(1), c = image.size(2);
  std::string header = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<unsigned char> bytes(header.begin(), header.end());
  bytes.reserve(bytes.size() + h * w * 3);
  auto v = image.values();
  for (std::size_t p = 0; p < h * w; ++p) {
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const double x = std::clamp(v[p * c + (c == 3 ? ch : 0)], 0.0, 1.0);
      bytes.push_back(static_cast<unsigned char>(std::lround(x * 255.0)));
    }
  }
  return bytes;
}

void write_ppm(const std::filesystem::path& path, const Tensor& image) {
  const auto bytes = encode_ppm(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<double> resize_bilinear(const std::vector<double>& src, std::size_t h, std::size_t w, std::size_t c,
                                    std::size_t out_h, std::size_t out_w, PixelAlignment align) {
  if (src.size() != h * w * c) throw DimensionError("resize: buffer does not match geometry");
  std::vector<double> dst(out_h * out_w * c);
  auto coord = [align](std::size_t i, std::size_t in, std::size_t out) {
    if (align == PixelAlignment::kCorners) {
      if (out == 1 || in == 1) return 0.0;
      return static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(out - 1);
    }
    const double s = (static_cast<double>(i) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
    return std::clamp(s, 0.0, static_cast<double>(in - 1));
  };
  for (std::size_t i = 0; i < out_h; ++i) {
    const double y = coord(i, h, out_h);
    const std::size_t y0 = static_cast<std::size_t>(std::floor(y));
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double fy = y - static_cast<double>(y0);
    for (std::size_t j = 0; j < out_w; ++j) {
      const double x = coord(j, w, out_w);
      const std::size_t x0 = static_cast<std::size_t>(std::floor(x));
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double fx = x - static_cast<double>(x0);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double a = src[(y0 * w + x0) * c + ch];
        const double b = src[(y0 * w + x1) * c + ch];
        const double d = src[(y1 * w + x0) * c + ch];
        const double e = src[(y1 * w + x1) * c + ch];
        const double top = a + (b - a) * fx;
        const double bottom = d + (e - d) * fx;
        dst[(i * out_w + j) * c + ch] = top + (bottom - top) * fy;
      }
    }
  }
  return dst;
}

Tensor resize_image(const Tensor& image, std::size_t out_h, std::size_t out_w) {
  if (image.dim() != 3) throw DimensionError("resize_image needs [H x W x C], got " + shape_str(image.shape()));
  const std::size_t h = image.size(0), w = image.size(1), c = image.size(2);
  if (h == out_h && w == out_w) return image.clone();
  std::vector<double> src(image.values().begin(), image.values().end());
  return Tensor({out_h, out_w, c}, resize_bilinear(src, h, w, c, out_h, out_w, PixelAlignment::kCorners));
}

Tensor grayscale(const Tensor& image) {
  if (image.dim() != 3) throw DimensionError("grayscale needs [H x W x C], got " + shape_str(image.shape()));
  const std::size_t h = image.size(0), w = image.size(1), c = image.size(2);
  Tensor out({h, w, 1});
  auto v = image.values();
  auto o = out.values();
  for (std::size_t p = 0; p < h * w; ++p) {
    o[p] = c >= 3 ? 0.299 * v[p * c] + 0.587 * v[p * c + 1] + 0.114 * v[p * c + 2] : v[p * c];
  }
  return out;
}

}  // namespace zsl
