#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

#include "cubesim/raster.hpp"

namespace cubesim {

ImageRaster::ImageRaster(int width, int height)
    : width_(width), height_(height),
      pixels_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3, 0) {
  if (width <= 0 || height <= 0) throw RasterError("raster dimensions must be positive");
}

ImageRaster::ImageRaster(int width, int height, std::vector<std::uint8_t> rgb)
    : width_(width), height_(height), pixels_(std::move(rgb)) {
  if (width <= 0 || height <= 0) throw RasterError("raster dimensions must be positive");
  if (pixels_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3)
    throw RasterError("raster byte count does not match dimensions");
}

std::vector<std::uint8_t> ppm_encode(const ImageRaster& img) {
  const std::string header = "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.bytes().begin(), img.bytes().end());
  return out;
}

ImageRaster ppm_decode(std::span<const std::uint8_t> b) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < b.size()) {
      if (b[pos] == '#') {
        while (pos < b.size() && b[pos] != '\n') ++pos;
      } else if (std::isspace(b[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&] {
    skip_space();
    long v = 0;
    bool any = false;
    while (pos < b.size() && std::isdigit(b[pos])) {
      v = v * 10 + (b[pos++] - '0');
      any = true;
      if (v > 1'000'000) throw RasterError("ppm: header value too large");
    }
    if (!any) throw RasterError("ppm: malformed header");
    return static_cast<int>(v);
  };

  if (b.size() < 2 || b[0] != 'P' || b[1] != '6') throw RasterError("ppm: not a binary P6 pixmap");
  pos = 2;
  const int w = read_int();
  const int h = read_int();
  const int maxval = read_int();
  if (maxval != 255) throw RasterError("ppm: only maxval 255 is supported");
  if (pos >= b.size() || !std::isspace(b[pos])) throw RasterError("ppm: malformed header");
  ++pos;
  const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3;
  if (b.size() - pos < need) throw RasterError("ppm: truncated pixel data");
  return ImageRaster(w, h, std::vector<std::uint8_t>(b.begin() + static_cast<std::ptrdiff_t>(pos),
                                                     b.begin() + static_cast<std::ptrdiff_t>(pos + need)));
}

void ppm_write(const ImageRaster& img, const std::filesystem::path& path) {
  const auto bytes = ppm_encode(img);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw RasterError("ppm: cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw RasterError("ppm: write failed for " + path.string());
}

ImageRaster ppm_read(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw RasterError("ppm: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return ppm_decode(bytes);
}

double psnr(const ImageRaster& a, const ImageRaster& b) {
  if (a.width() != b.width() || a.height() != b.height()) throw RasterError("psnr: dimension mismatch");
  double se = 0.0;
  const auto x = a.bytes(), y = b.bytes();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    se += d * d;
  }
  if (se == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = se / static_cast<double>(x.size());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

}  // namespace cubesim
