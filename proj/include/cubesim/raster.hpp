#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

namespace cubesim {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

/// Row-major RGB raster, 8 bits per channel.
class ImageRaster {
 public:
  static constexpr int kWidth = 320;
  static constexpr int kHeight = 240;

  ImageRaster() : ImageRaster(kWidth, kHeight) {}
  ImageRaster(int width, int height);
  ImageRaster(int width, int height, std::vector<std::uint8_t> rgb);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }

  Rgb at(int x, int y) const noexcept {
    const auto* p = &pixels_[index(x, y)];
    return {p[0], p[1], p[2]};
  }
  void set(int x, int y, Rgb c) noexcept {
    auto* p = &pixels_[index(x, y)];
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }

  std::span<const std::uint8_t> row(int y) const noexcept {
    return std::span<const std::uint8_t>(pixels_).subspan(index(0, y), static_cast<std::size_t>(width_) * 3);
  }
  std::span<const std::uint8_t> bytes() const noexcept { return pixels_; }
  std::span<std::uint8_t> bytes() noexcept { return pixels_; }

  bool operator==(const ImageRaster&) const = default;

 private:
  std::size_t index(int x, int y) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) * 3;
  }

  int width_;
  int height_;
  std::vector<std::uint8_t> pixels_;
};

class RasterError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary portable pixmap, P6 with maxval 255.
std::vector<std::uint8_t> ppm_encode(const ImageRaster& img);
ImageRaster ppm_decode(std::span<const std::uint8_t> bytes);
void ppm_write(const ImageRaster& img, const std::filesystem::path& path);
ImageRaster ppm_read(const std::filesystem::path& path);

/// PNG with 8-bit RGB, zlib-compressed.
std::vector<std::uint8_t> png_encode(const ImageRaster& img);

/// Peak signal-to-noise ratio over all channels, in dB. Identical images give +inf.
double psnr(const ImageRaster& a, const ImageRaster& b);

}  // namespace cubesim
