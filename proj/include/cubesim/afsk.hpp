#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cubesim/audio.hpp"
#include "cubesim/bytes.hpp"

namespace cubesim::afsk {

// ---------------------------------------------------------------------------
// Telemetry framing
//
//   preamble 16 x 0x55 | 0x7E | version | ftype | len | payload[len] | crc16 (BE)
//
// The CRC covers version..payload and is CRC-16/CCITT-FALSE.
// ---------------------------------------------------------------------------

inline constexpr std::uint8_t kFrameVersion = 1;
inline constexpr std::uint8_t kPreambleByte = 0x55;
inline constexpr std::uint8_t kSyncByte = 0x7E;
inline constexpr std::size_t kPreambleLength = 16;
inline constexpr std::size_t kMaxPayload = 255;

enum class FrameType : std::uint8_t {
  Housekeeping = 0x01,
  EventLog = 0x02,
  Ack = 0x03,
  ImageMeta = 0x04,
};

bool is_known_frame_type(std::uint8_t t) noexcept;
const char* frame_type_name(FrameType t) noexcept;

/// CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no xor-out.
std::uint16_t crc16(std::span<const std::uint8_t> data) noexcept;

struct TelemetryFrame {
  std::uint8_t version = kFrameVersion;
  FrameType type = FrameType::Housekeeping;
  Bytes payload;
  std::uint16_t crc = 0;

  bool operator==(const TelemetryFrame&) const = default;
};

/// Builds a frame with its CRC filled in. Throws on payloads over 255 bytes.
TelemetryFrame make_frame(FrameType type, Bytes payload);

/// Wire form including preamble.
Bytes frame_encode(FrameType type, std::span<const std::uint8_t> payload);
Bytes frame_encode(const TelemetryFrame& frame);

struct FrameDiagnostic {
  enum class Kind { CrcMismatch, Truncated, Resync };
  Kind kind;
  std::size_t offset;  // byte offset in the scanned stream
  std::string detail;
};

const char* diagnostic_kind_name(FrameDiagnostic::Kind k) noexcept;

struct ParsedFrame {
  TelemetryFrame frame;
  std::size_t offset;  // offset of the sync byte
};

struct ParseResult {
  std::vector<ParsedFrame> frames;
  std::vector<FrameDiagnostic> diagnostics;
};

/// Scans a byte stream for frames. Corrupt frames are skipped and reported.
ParseResult frame_parse(std::span<const std::uint8_t> stream);

// ---------------------------------------------------------------------------
// Modem
// ---------------------------------------------------------------------------

/// Bell-202 defaults, 8N1 LSB-first.
struct AfskConfig {
  double baud = 1200.0;
  double mark_hz = 1200.0;
  double space_hz = 2200.0;
  int leader_bits = 48;
  int trailer_bits = 8;
  double amplitude = audio::kDefaultAmplitude;

  void validate(int rate) const;
};

audio::AudioBuffer afsk_modulate(std::span<const std::uint8_t> bytes, const AfskConfig& cfg = {},
                                 int rate = audio::kCanonicalRate);

/// Recovers bytes from AFSK audio. Returns an empty vector when nothing decodes.
Bytes afsk_demodulate(const audio::AudioBuffer& buf, const AfskConfig& cfg = {});

}  // namespace cubesim::afsk
