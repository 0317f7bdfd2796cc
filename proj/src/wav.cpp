#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "cubesim/audio.hpp"

namespace cubesim::audio {

namespace {

constexpr double kFullScale = 32767.0;

void put_u16le(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  put_u16le(out, static_cast<std::uint16_t>(v & 0xFFFF));
  put_u16le(out, static_cast<std::uint16_t>(v >> 16));
}

void put_tag(std::vector<std::uint8_t>& out, const char (&tag)[5]) { out.insert(out.end(), tag, tag + 4); }

std::uint16_t get_u16le(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

std::uint32_t get_u32le(std::span<const std::uint8_t> b, std::size_t at) {
  return get_u16le(b, at) | (static_cast<std::uint32_t>(get_u16le(b, at + 2)) << 16);
}

bool tag_is(std::span<const std::uint8_t> b, std::size_t at, const char* tag) {
  return std::memcmp(b.data() + at, tag, 4) == 0;
}

}  // namespace

std::vector<std::uint8_t> wav_encode(const AudioBuffer& buf) {
  if (buf.rate <= 0) throw WavError("wav: sample rate must be positive");
  const auto data_bytes = static_cast<std::uint32_t>(buf.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32le(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32le(out, 16);
  put_u16le(out, 1);  // PCM
  put_u16le(out, 1);  // mono
  put_u32le(out, static_cast<std::uint32_t>(buf.rate));
  put_u32le(out, static_cast<std::uint32_t>(buf.rate) * 2);
  put_u16le(out, 2);   // block align
  put_u16le(out, 16);  // bits per sample
  put_tag(out, "data");
  put_u32le(out, data_bytes);
  for (double s : buf.samples) {
    const auto q = static_cast<std::int16_t>(std::lround(std::clamp(s, -1.0, 1.0) * kFullScale));
    put_u16le(out, static_cast<std::uint16_t>(q));
  }
  return out;
}

AudioBuffer wav_decode(std::span<const std::uint8_t> b) {
  if (b.size() < 12 || !tag_is(b, 0, "RIFF") || !tag_is(b, 8, "WAVE")) throw WavError("wav: not a RIFF/WAVE file");

  bool have_fmt = false;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= b.size()) {
    const std::uint32_t chunk_len = get_u32le(b, pos + 4);
    const std::size_t body = pos + 8;
    if (chunk_len > b.size() - body) throw WavError("wav: chunk extends past end of file");

    if (tag_is(b, pos, "fmt ")) {
      if (chunk_len < 16) throw WavError("wav: fmt chunk too short");
      const auto format = get_u16le(b, body);
      const auto channels = get_u16le(b, body + 2);
      rate = get_u32le(b, body + 4);
      const auto bits = get_u16le(b, body + 14);
      if (format != 1) throw WavError("wav: unsupported format tag " + std::to_string(format) + " (only PCM is read)");
      if (channels != 1) throw WavError("wav: unsupported channel count " + std::to_string(channels) + " (mono only)");
      if (bits != 16) throw WavError("wav: unsupported bit depth " + std::to_string(bits) + " (16-bit only)");
      if (rate == 0) throw WavError("wav: zero sample rate");
      have_fmt = true;
    } else if (tag_is(b, pos, "data")) {
      if (!have_fmt) throw WavError("wav: data chunk before fmt chunk");
      AudioBuffer out(static_cast<int>(rate));
      out.samples.resize(chunk_len / 2);
      for (std::size_t i = 0; i < out.samples.size(); ++i) {
        const auto v = static_cast<std::int16_t>(get_u16le(b, body + 2 * i));
        out.samples[i] = std::max(-1.0, v / kFullScale);
      }
      return out;
    }
    pos = body + chunk_len + (chunk_len & 1);
  }
  throw WavError(have_fmt ? "wav: missing data chunk" : "wav: missing fmt chunk");
}

void wav_write(const AudioBuffer& buf, const std::filesystem::path& path) {
  const auto bytes = wav_encode(buf);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw WavError("wav: cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw WavError("wav: write failed for " + path.string());
}

AudioBuffer wav_read(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw WavError("wav: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return wav_decode(bytes);
}

AudioBuffer wav_read_canonical(const std::filesystem::path& path) {
  auto buf = wav_read(path);
  if (buf.rate != kCanonicalRate) buf = resample_linear(buf, kCanonicalRate);
  return buf;
}

}  // namespace cubesim::audio
