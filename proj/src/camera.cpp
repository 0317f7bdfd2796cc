#include <algorithm>
#include <cmath>
#include <vector>

#include "cubesim/obc.hpp"
#include "cubesim/rng.hpp"

namespace cubesim::obc {

namespace {

constexpr std::array<Rgb, 8> kBars{{
    {255, 255, 255},
    {255, 255, 0},
    {0, 255, 255},
    {0, 255, 0},
    {255, 0, 255},
    {255, 0, 0},
    {0, 0, 255},
    {0, 0, 0},
}};

constexpr int kBarRows = 160;
constexpr int kStampRow = 224;
constexpr int kStampBits = 16;

// Separable box filter with edge clamping, one channel plane at a time.
std::vector<double> box_blur(const std::vector<double>& src, int w, int h, int r) {
  std::vector<double> tmp(src.size()), out(src.size());
  const double norm = 1.0 / (2 * r + 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int k = -r; k <= r; ++k) s += src[static_cast<std::size_t>(y * w + std::clamp(x + k, 0, w - 1))];
      tmp[static_cast<std::size_t>(y * w + x)] = s * norm;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int k = -r; k <= r; ++k) s += tmp[static_cast<std::size_t>(std::clamp(y + k, 0, h - 1) * w + x)];
      out[static_cast<std::size_t>(y * w + x)] = s * norm;
    }
  return out;
}

}  // namespace

ImageRaster render_test_scene(int id) {
  ImageRaster img;
  const int w = img.width(), h = img.height();
  const int bar_w = w / static_cast<int>(kBars.size());
  for (int y = 0; y < kBarRows; ++y)
    for (int x = 0; x < w; ++x) img.set(x, y, kBars[static_cast<std::size_t>(std::min(x / bar_w, 7))]);
  for (int y = kBarRows; y < kStampRow; ++y)
    for (int x = 0; x < w; ++x) {
      const auto v = static_cast<std::uint8_t>((x * 255 + (w - 1) / 2) / (w - 1));
      img.set(x, y, {v, v, v});
    }
  const int cell = w / kStampBits;
  for (int y = kStampRow; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int bit = kStampBits - 1 - std::min(x / cell, kStampBits - 1);
      const bool on = (static_cast<unsigned>(id) >> bit) & 1u;
      img.set(x, y, on ? Rgb{255, 255, 255} : Rgb{0, 0, 0});
    }
  return img;
}

ImageRaster capture_image(int id, const CameraParams& params, std::uint64_t seed) {
  ImageRaster img = render_test_scene(id);
  if (params.blur_radius <= 0 && params.noise_sigma <= 0.0) return img;

  const int w = img.width(), h = img.height();
  const auto n = static_cast<std::size_t>(w * h);
  std::array<std::vector<double>, 3> planes;
  for (std::size_t c = 0; c < 3; ++c) {
    planes[c].resize(n);
    for (std::size_t i = 0; i < n; ++i) planes[c][i] = img.bytes()[i * 3 + c];
    if (params.blur_radius > 0) planes[c] = box_blur(planes[c], w, h, params.blur_radius);
  }

  GaussianSource noise(mix_seed(seed, static_cast<std::uint64_t>(id)));
  auto px = img.bytes();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      double v = planes[c][i];
      if (params.noise_sigma > 0.0) v += params.noise_sigma * noise.next();
      px[i * 3 + c] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  return img;
}

}  // namespace cubesim::obc
