#include <array>
#include <stdexcept>

#include "cubesim/afsk.hpp"

namespace cubesim::afsk {

bool is_known_frame_type(std::uint8_t t) noexcept { return t >= 0x01 && t <= 0x04; }

const char* frame_type_name(FrameType t) noexcept {
  switch (t) {
    case FrameType::Housekeeping: return "housekeeping";
    case FrameType::EventLog: return "event-log";
    case FrameType::Ack: return "ack";
    case FrameType::ImageMeta: return "image-meta";
  }
  return "unknown";
}

const char* diagnostic_kind_name(FrameDiagnostic::Kind k) noexcept {
  switch (k) {
    case FrameDiagnostic::Kind::CrcMismatch: return "crc-mismatch";
    case FrameDiagnostic::Kind::Truncated: return "truncated";
    case FrameDiagnostic::Kind::Resync: return "resync";
  }
  return "unknown";
}

std::uint16_t crc16(std::span<const std::uint8_t> data) noexcept {
  static const auto table = [] {
    std::array<std::uint16_t, 256> t{};
    for (unsigned i = 0; i < 256; ++i) {
      std::uint16_t c = static_cast<std::uint16_t>(i << 8);
      for (int b = 0; b < 8; ++b) c = (c & 0x8000) ? static_cast<std::uint16_t>((c << 1) ^ 0x1021) : static_cast<std::uint16_t>(c << 1);
      t[i] = c;
    }
    return t;
  }();
  std::uint16_t crc = 0xFFFF;
  for (auto byte : data) crc = static_cast<std::uint16_t>((crc << 8) ^ table[((crc >> 8) ^ byte) & 0xFF]);
  return crc;
}

namespace {

Bytes crc_body(std::uint8_t version, std::uint8_t type, std::span<const std::uint8_t> payload) {
  Bytes body;
  body.reserve(3 + payload.size());
  body.push_back(version);
  body.push_back(type);
  body.push_back(static_cast<std::uint8_t>(payload.size()));
  body.insert(body.end(), payload.begin(), payload.end());
  return body;
}

}  // namespace

TelemetryFrame make_frame(FrameType type, Bytes payload) {
  if (payload.size() > kMaxPayload)
    throw std::invalid_argument("frame payload of " + std::to_string(payload.size()) + " bytes exceeds 255");
  TelemetryFrame f;
  f.type = type;
  f.crc = crc16(crc_body(f.version, static_cast<std::uint8_t>(type), payload));
  f.payload = std::move(payload);
  return f;
}

Bytes frame_encode(FrameType type, std::span<const std::uint8_t> payload) {
  if (payload.size() > kMaxPayload)
    throw std::invalid_argument("frame payload of " + std::to_string(payload.size()) + " bytes exceeds 255");
  Bytes out(kPreambleLength, kPreambleByte);
  out.push_back(kSyncByte);
  const Bytes body = crc_body(kFrameVersion, static_cast<std::uint8_t>(type), payload);
  out.insert(out.end(), body.begin(), body.end());
  put_u16be(out, crc16(body));
  return out;
}

Bytes frame_encode(const TelemetryFrame& frame) { return frame_encode(frame.type, frame.payload); }

ParseResult frame_parse(std::span<const std::uint8_t> s) {
  ParseResult result;
  std::size_t garbage_start = 0;
  bool in_garbage = false;
  std::size_t quiet_until = 0;  // bytes covered by a frame that failed its CRC

  auto note_garbage = [&](std::size_t at) {
    if (!in_garbage) {
      in_garbage = true;
      garbage_start = at;
    }
  };
  auto flush_garbage = [&](std::size_t end) {
    if (in_garbage) {
      result.diagnostics.push_back({FrameDiagnostic::Kind::Resync, garbage_start,
                                    "skipped " + std::to_string(end - garbage_start) + " unframed bytes"});
      in_garbage = false;
    }
  };

  std::size_t i = 0;
  while (i < s.size()) {
    const std::uint8_t b = s[i];
    // A sync candidate is 0x7E directly after preamble, carrying a plausible header.
    const bool candidate = b == kSyncByte && i >= 1 && s[i - 1] == kPreambleByte && i + 2 < s.size() &&
                           s[i + 1] == kFrameVersion && is_known_frame_type(s[i + 2]);
    if (!candidate) {
      if (b != kPreambleByte && i >= quiet_until) note_garbage(i);
      ++i;
      continue;
    }
    flush_garbage(i);

    if (i + 3 >= s.size()) {
      result.diagnostics.push_back({FrameDiagnostic::Kind::Truncated, i, "stream ends inside frame header"});
      break;
    }
    const std::size_t len = s[i + 3];
    const std::size_t end = i + 4 + len + 2;
    if (end > s.size()) {
      result.diagnostics.push_back({FrameDiagnostic::Kind::Truncated, i,
                                    "frame declares " + std::to_string(len) + " payload bytes past end of stream"});
      quiet_until = s.size();
      ++i;
      continue;
    }
    const auto body = s.subspan(i + 1, 3 + len);
    const std::uint16_t want = get_u16be(s, i + 4 + len);
    const std::uint16_t got = crc16(body);
    if (want != got) {
      result.diagnostics.push_back({FrameDiagnostic::Kind::CrcMismatch, i,
                                    "crc " + to_hex(std::span<const std::uint8_t>(s.data() + i + 4 + len, 2)) +
                                        " does not match computed value"});
      quiet_until = end;
      ++i;
      continue;
    }
    TelemetryFrame f;
    f.version = s[i + 1];
    f.type = static_cast<FrameType>(s[i + 2]);
    f.payload.assign(s.begin() + static_cast<std::ptrdiff_t>(i + 4), s.begin() + static_cast<std::ptrdiff_t>(i + 4 + len));
    f.crc = want;
    result.frames.push_back({std::move(f), i});
    i = end;
  }
  flush_garbage(s.size());
  return result;
}

}  // namespace cubesim::afsk
