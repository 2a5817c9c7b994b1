#include "nodebnn/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "nodebnn/rng.hpp"

namespace nodebnn {

namespace {

// 5x7 bitmap font, row-major, one string per digit.
constexpr const char* kGlyphs[10] = {
    "01110"
    "10001"
    "10011"
    "10101"
    "11001"
    "10001"
    "01110",
    "00100"
    "01100"
    "00100"
    "00100"
    "00100"
    "00100"
    "01110",
    "01110"
    "10001"
    "00001"
    "00010"
    "00100"
    "01000"
    "11111",
    "11111"
    "00010"
    "00100"
    "00010"
    "00001"
    "10001"
    "01110",
    "00010"
    "00110"
    "01010"
    "10010"
    "11111"
    "00010"
    "00010",
    "11111"
    "10000"
    "11110"
    "00001"
    "00001"
    "10001"
    "01110",
    "00110"
    "01000"
    "10000"
    "11110"
    "10001"
    "10001"
    "01110",
    "11111"
    "00001"
    "00010"
    "00100"
    "01000"
    "01000"
    "01000",
    "01110"
    "10001"
    "10001"
    "01110"
    "10001"
    "10001"
    "01110",
    "01110"
    "10001"
    "10001"
    "01111"
    "00001"
    "00010"
    "01100"};

constexpr int kGlyphW = 5;
constexpr int kGlyphH = 7;
constexpr int kImage = 28;

bool glyph_on(int digit, double gx, double gy) {
  const int cx = static_cast<int>(std::floor(gx));
  const int cy = static_cast<int>(std::floor(gy));
  if (cx < 0 || cx >= kGlyphW || cy < 0 || cy >= kGlyphH) return false;
  return kGlyphs[digit][cy * kGlyphW + cx] == '1';
}

}  // namespace

Dataset make_synthetic_digits(int count, std::uint64_t seed) {
  Dataset data;
  data.classes = 10;
  data.images = Tensor(Shape{count, 1, kImage, kImage});
  data.labels.resize(static_cast<std::size_t>(count));

  for (int idx = 0; idx < count; ++idx) {
    Rng rng(combine_seed(seed, 0xd191f5ULL, static_cast<std::uint64_t>(idx)));
    const int digit = static_cast<int>(rng.integer(10));
    data.labels[static_cast<std::size_t>(idx)] = digit;

    const double scale = 2.9 + 0.7 * rng.uniform();  // font cells -> pixels
    const double glyph_w = kGlyphW * scale;
    const double glyph_h = kGlyphH * scale;
    const double x0 = (kImage - glyph_w) / 2.0 + 5.0 * (rng.uniform() - 0.5);
    const double y0 = (kImage - glyph_h) / 2.0 + 5.0 * (rng.uniform() - 0.5);
    const double intensity = 0.75 + 0.25 * rng.uniform();

    double* img = data.images.data() + static_cast<std::int64_t>(idx) * kImage * kImage;
    for (int y = 0; y < kImage; ++y) {
      for (int x = 0; x < kImage; ++x) {
        // 2x2 supersampling gives soft edges under sub-pixel placement.
        double cover = 0.0;
        for (int sy = 0; sy < 2; ++sy) {
          for (int sx = 0; sx < 2; ++sx) {
            const double px = x + 0.25 + 0.5 * sx;
            const double py = y + 0.25 + 0.5 * sy;
            if (glyph_on(digit, (px - x0) / scale, (py - y0) / scale)) cover += 0.25;
          }
        }
        double v = intensity * cover + rng.normal(0.0, 0.02);
        img[y * kImage + x] = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return data;
}

}  // namespace nodebnn
