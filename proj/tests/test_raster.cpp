#include <zlib.h>

#include <cmath>
#include <limits>
#include <random>

#include "cubesim/bytes.hpp"
#include "cubesim/raster.hpp"
#include "doctest.h"
#include "patterns.hpp"

using namespace cubesim;

TEST_CASE("ppm round trip and header") {
  const auto img = patterns::color_bars();
  const auto bytes = ppm_encode(img);
  const std::string header(bytes.begin(), bytes.begin() + 15);
  CHECK(header == "P6\n320 240\n255\n");
  CHECK(bytes.size() == 15 + 320 * 240 * 3);
  CHECK(ppm_decode(bytes) == img);

  const std::string commented = "P6\n# made by hand\n2 1\n255\n";
  Bytes small(commented.begin(), commented.end());
  small.insert(small.end(), {1, 2, 3, 4, 5, 6});
  const auto s = ppm_decode(small);
  CHECK(s.width() == 2);
  CHECK(s.at(1, 0) == Rgb{4, 5, 6});
}

TEST_CASE("ppm rejects other formats") {
  const std::string p3 = "P3\n1 1\n255\n0 0 0\n";
  CHECK_THROWS_AS(ppm_decode(Bytes(p3.begin(), p3.end())), RasterError);
  const std::string deep = "P6\n1 1\n65535\n";
  CHECK_THROWS_AS(ppm_decode(Bytes(deep.begin(), deep.end())), RasterError);
  const std::string short_body = "P6\n2 2\n255\n\x01\x02";
  CHECK_THROWS_AS(ppm_decode(Bytes(short_body.begin(), short_body.end())), RasterError);
}

TEST_CASE("psnr against a hand computation") {
  const auto a = patterns::uniform(100);
  CHECK(std::isinf(psnr(a, a)));
  const auto b = patterns::uniform(110);
  CHECK(psnr(a, b) == doctest::Approx(10.0 * std::log10(255.0 * 255.0 / 100.0)));
  CHECK_THROWS_AS(psnr(a, ImageRaster(10, 10)), RasterError);
}

TEST_CASE("png structure inflates back to the raster") {
  std::mt19937_64 rng(1);
  ImageRaster img(17, 5);
  for (auto& v : img.bytes()) v = static_cast<std::uint8_t>(rng());
  const auto png = png_encode(img);
  REQUIRE(png.size() > 8 + 25 + 12 + 12);
  CHECK(Bytes(png.begin(), png.begin() + 8) == Bytes{0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'});

  std::size_t at = 8;
  Bytes idat;
  std::vector<std::string> tags;
  while (at < png.size()) {
    const auto len = get_u32be(png, at);
    const std::string tag(png.begin() + static_cast<std::ptrdiff_t>(at + 4), png.begin() + static_cast<std::ptrdiff_t>(at + 8));
    const auto crc = crc32(0L, png.data() + at + 4, 4 + len);
    CHECK(get_u32be(png, at + 8 + len) == crc);
    if (tag == "IHDR") {
      CHECK(get_u32be(png, at + 8) == 17);
      CHECK(get_u32be(png, at + 12) == 5);
      CHECK(png[at + 16] == 8);
      CHECK(png[at + 17] == 2);
    }
    if (tag == "IDAT") idat.insert(idat.end(), png.begin() + static_cast<std::ptrdiff_t>(at + 8), png.begin() + static_cast<std::ptrdiff_t>(at + 8 + len));
    tags.push_back(tag);
    at += 12 + len;
  }
  CHECK(tags == std::vector<std::string>{"IHDR", "IDAT", "IEND"});

  Bytes raw(5 * (1 + 17 * 3));
  uLongf raw_len = raw.size();
  REQUIRE(uncompress(raw.data(), &raw_len, idat.data(), idat.size()) == Z_OK);
  REQUIRE(raw_len == raw.size());
  for (int y = 0; y < 5; ++y) {
    const std::size_t row = static_cast<std::size_t>(y) * (1 + 17 * 3);
    CHECK(raw[row] == 0);
    CHECK(Bytes(raw.begin() + static_cast<std::ptrdiff_t>(row + 1), raw.begin() + static_cast<std::ptrdiff_t>(row + 1 + 51)) ==
          Bytes(img.row(y).begin(), img.row(y).end()));
  }
}
