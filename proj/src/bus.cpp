#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "cubesim/bus.hpp"
#include "cubesim/rng.hpp"

namespace cubesim::bus {

namespace {
constexpr std::array<std::uint8_t, 256> make_crc8_table() {
  std::array<std::uint8_t, 256> t{};
  for (int i = 0; i < 256; ++i) {
    auto c = static_cast<std::uint8_t>(i);
    for (int b = 0; b < 8; ++b) c = static_cast<std::uint8_t>((c & 0x80) ? (c << 1) ^ 0x07 : c << 1);
    t[static_cast<std::size_t>(i)] = c;
  }
  return t;
}
constexpr auto kCrc8Table = make_crc8_table();
}  // namespace

std::uint8_t crc8(std::span<const std::uint8_t> data) noexcept {
  std::uint8_t c = 0;
  for (auto b : data) c = kCrc8Table[c ^ b];
  return c;
}

const char* command_name(std::uint8_t cmd) noexcept {
  switch (cmd) {
    case 0x01: return "PING";
    case 0x02: return "READ_SENSOR";
    case 0x03: return "SET_PWM";
    case 0x04: return "READ_ALL";
    default: return "UNKNOWN";
  }
}

const char* status_name(Status s) noexcept {
  switch (s) {
    case Status::Ok: return "OK";
    case Status::BadCrc: return "BAD_CRC";
    case Status::UnknownCmd: return "UNKNOWN_CMD";
    case Status::BadArg: return "BAD_ARG";
  }
  return "?";
}

const char* parse_status_name(ParseStatus s) noexcept {
  switch (s) {
    case ParseStatus::Ok: return "ok";
    case ParseStatus::Incomplete: return "incomplete";
    case ParseStatus::BadSync: return "bad-sync";
    case ParseStatus::BadCrc: return "bad-crc";
    case ParseStatus::BadLength: return "bad-length";
  }
  return "?";
}

std::array<std::uint8_t, kRequestSize> encode_request(const BusRequest& r) noexcept {
  std::array<std::uint8_t, kRequestSize> out{kRequestSync, r.cmd, r.arg0, r.arg1, 0};
  out[4] = crc8(std::span<const std::uint8_t>(out).subspan(1, 3));
  return out;
}

std::array<std::uint8_t, kRequestSize> encode_request(Command cmd, std::uint8_t arg0, std::uint8_t arg1) noexcept {
  return encode_request(BusRequest{static_cast<std::uint8_t>(cmd), arg0, arg1});
}

Bytes encode_response(const BusResponse& r) {
  if (r.payload.size() > kMaxResponsePayload) throw std::invalid_argument("bus response payload exceeds 32 bytes");
  Bytes out;
  out.reserve(r.payload.size() + 4);
  out.push_back(kResponseSync);
  out.push_back(static_cast<std::uint8_t>(r.status));
  out.push_back(static_cast<std::uint8_t>(r.payload.size()));
  for (auto b : r.payload) out.push_back(b);
  out.push_back(crc8(std::span<const std::uint8_t>(out).subspan(1)));
  return out;
}

RequestParse parse_request(std::span<const std::uint8_t> bytes) noexcept {
  if (bytes.size() < kRequestSize) return {ParseStatus::Incomplete, {}};
  if (bytes.size() > kRequestSize) return {ParseStatus::BadLength, {}};
  if (bytes[0] != kRequestSync) return {ParseStatus::BadSync, {}};
  if (crc8(bytes.subspan(1, 3)) != bytes[4]) return {ParseStatus::BadCrc, {}};
  return {ParseStatus::Ok, {bytes[1], bytes[2], bytes[3]}};
}

ResponseParse parse_response(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) return {ParseStatus::Incomplete, {}, 0};
  if (bytes[0] != kResponseSync) {
    const auto next = std::find(bytes.begin() + 1, bytes.end(), kResponseSync);
    return {ParseStatus::BadSync, {}, static_cast<std::size_t>(next - bytes.begin())};
  }
  if (bytes.size() < 3) return {ParseStatus::Incomplete, {}, 0};
  const std::size_t len = bytes[2];
  if (len > kMaxResponsePayload) return {ParseStatus::BadLength, {}, 1};
  const std::size_t total = 3 + len + 1;
  if (bytes.size() < total) return {ParseStatus::Incomplete, {}, 0};
  if (crc8(bytes.subspan(1, 2 + len)) != bytes[total - 1]) return {ParseStatus::BadCrc, {}, total};
  if (bytes[1] > static_cast<std::uint8_t>(Status::BadArg)) return {ParseStatus::BadCrc, {}, total};
  BusResponse r{static_cast<Status>(bytes[1]), Bytes(bytes.begin() + 3, bytes.begin() + 3 + static_cast<std::ptrdiff_t>(len))};
  return {ParseStatus::Ok, std::move(r), total};
}

// ---------------------------------------------------------------------------

const char* sensor_name(Sensor s) noexcept {
  static constexpr const char* kNames[kSensorCount] = {"gyro_x", "gyro_y", "gyro_z", "mag_x", "mag_y", "mag_z",
                                                       "accel_x", "accel_y", "accel_z", "temp", "battery"};
  const auto i = static_cast<std::size_t>(s);
  return i < kSensorCount ? kNames[i] : "?";
}

double sensor_scale(Sensor s) noexcept {
  switch (s) {
    case Sensor::GyroX:
    case Sensor::GyroY:
    case Sensor::GyroZ: return 100.0;
    case Sensor::MagX:
    case Sensor::MagY:
    case Sensor::MagZ: return 10.0;
    case Sensor::AccelX:
    case Sensor::AccelY:
    case Sensor::AccelZ: return 1000.0;
    case Sensor::Temperature: return 10.0;
    case Sensor::Battery: return 1.0;
  }
  return 1.0;
}

std::uint16_t to_counts(Sensor s, double value) noexcept {
  const double c = std::round(value * sensor_scale(s));
  if (s == Sensor::Battery) return static_cast<std::uint16_t>(std::clamp(c, 0.0, 65535.0));
  return static_cast<std::uint16_t>(static_cast<std::int16_t>(std::clamp(c, -32768.0, 32767.0)));
}

double from_counts(Sensor s, std::uint16_t counts) noexcept {
  if (s == Sensor::Battery) return counts;
  return static_cast<std::int16_t>(counts) / sensor_scale(s);
}

double sensor_value(const SensorProfile& p, double t) {
  double v = p.bias + p.amplitude * std::sin(2.0 * std::numbers::pi * p.freq_hz * t + p.phase);
  if (p.sigma > 0.0) {
    const auto t_us = static_cast<std::uint64_t>(std::llround(t * 1e6));
    const std::uint64_t h = mix_seed(p.seed, t_us);
    v += p.sigma * box_muller(splitmix64(h), splitmix64(h ^ 0xA5A5A5A5A5A5A5A5ull));
  }
  return v;
}

SensorProfiles default_profiles(std::uint64_t seed) {
  SensorProfiles p{};
  // gyro, deg/s: slow residual tumble
  p[0] = {1.2, 0.6, 0.05, 0.0, 0.05};
  p[1] = {-0.8, 0.4, 0.05, 1.0, 0.05};
  p[2] = {0.5, 0.3, 0.05, 2.0, 0.05};
  // magnetometer, uT
  p[3] = {18.0, 12.0, 0.02, 0.0, 0.2};
  p[4] = {-6.0, 9.0, 0.02, 1.5, 0.2};
  p[5] = {38.0, 5.0, 0.02, 3.0, 0.2};
  // accelerometer, g
  p[6] = {0.0, 0.0, 0.0, 0.0, 0.002};
  p[7] = {0.0, 0.0, 0.0, 0.0, 0.002};
  p[8] = {0.0, 0.0, 0.0, 0.0, 0.002};
  // temperature degC, battery mV
  p[9] = {21.5, 1.5, 0.002, 0.0, 0.05};
  p[10] = {3900.0, 40.0, 0.001, 0.0, 2.0};
  for (std::size_t i = 0; i < kSensorCount; ++i) p[i].seed = mix_seed(seed, i);
  return p;
}

}  // namespace cubesim::bus
