#include <zlib.h>

#include "cubesim/bytes.hpp"
#include "cubesim/raster.hpp"

namespace cubesim {

namespace {

void put_chunk(Bytes& out, const char (&tag)[5], std::span<const std::uint8_t> data) {
  put_u32be(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t tag_at = out.size();
  out.insert(out.end(), tag, tag + 4);
  out.insert(out.end(), data.begin(), data.end());
  const uLong crc = crc32(0L, out.data() + tag_at, static_cast<uInt>(4 + data.size()));
  put_u32be(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

std::vector<std::uint8_t> png_encode(const ImageRaster& img) {
  Bytes out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};

  Bytes ihdr;
  put_u32be(ihdr, static_cast<std::uint32_t>(img.width()));
  put_u32be(ihdr, static_cast<std::uint32_t>(img.height()));
  ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});  // 8-bit truecolor, no interlace
  put_chunk(out, "IHDR", ihdr);

  Bytes raw;
  raw.reserve(static_cast<std::size_t>(img.height()) * (1 + img.row(0).size()));
  for (int y = 0; y < img.height(); ++y) {
    raw.push_back(0);  // filter: none
    const auto row = img.row(y);
    raw.insert(raw.end(), row.begin(), row.end());
  }
  uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
  Bytes z(zlen);
  if (compress2(z.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()), Z_DEFAULT_COMPRESSION) != Z_OK)
    throw RasterError("png: compression failed");
  z.resize(zlen);
  put_chunk(out, "IDAT", z);
  put_chunk(out, "IEND", {});
  return out;
}

}  // namespace cubesim
