#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cubesim/bytes.hpp"

namespace cubesim::bus {

// Request:  A5 | cmd | arg0 | arg1 | crc8(cmd..arg1)
// Response: 5A | status | len | payload[len] | crc8(status..payload)

inline constexpr std::uint8_t kRequestSync = 0xA5;
inline constexpr std::uint8_t kResponseSync = 0x5A;
inline constexpr std::size_t kRequestSize = 5;
inline constexpr std::size_t kMaxResponsePayload = 32;

/// CRC-8, poly 0x07, init 0x00, no reflection.
std::uint8_t crc8(std::span<const std::uint8_t> data) noexcept;

enum class Command : std::uint8_t { Ping = 0x01, ReadSensor = 0x02, SetPwm = 0x03, ReadAll = 0x04 };
enum class Status : std::uint8_t { Ok = 0x00, BadCrc = 0x01, UnknownCmd = 0x02, BadArg = 0x03 };

const char* command_name(std::uint8_t cmd) noexcept;
const char* status_name(Status s) noexcept;

struct BusRequest {
  std::uint8_t cmd = 0;
  std::uint8_t arg0 = 0;
  std::uint8_t arg1 = 0;
  bool operator==(const BusRequest&) const = default;
};

struct BusResponse {
  Status status = Status::Ok;
  Bytes payload;
  bool operator==(const BusResponse&) const = default;
};

std::array<std::uint8_t, kRequestSize> encode_request(const BusRequest& r) noexcept;
std::array<std::uint8_t, kRequestSize> encode_request(Command cmd, std::uint8_t arg0 = 0, std::uint8_t arg1 = 0) noexcept;
/// Throws std::invalid_argument when the payload exceeds 32 bytes.
Bytes encode_response(const BusResponse& r);

enum class ParseStatus { Ok, Incomplete, BadSync, BadCrc, BadLength };
const char* parse_status_name(ParseStatus s) noexcept;

struct RequestParse {
  ParseStatus status;
  BusRequest request;
};

/// Parses exactly one 5-byte request.
RequestParse parse_request(std::span<const std::uint8_t> bytes) noexcept;

struct ResponseParse {
  ParseStatus status;
  BusResponse response;
  std::size_t consumed = 0;  // bytes to drop from the front of the input
};

/// Parses a response at the front of `bytes`. On BadSync, `consumed` skips to the
/// next candidate sync byte; on Incomplete nothing is consumed.
ResponseParse parse_response(std::span<const std::uint8_t> bytes);

// ---------------------------------------------------------------------------
// Sensors
// ---------------------------------------------------------------------------

enum class Sensor : std::uint8_t {
  GyroX, GyroY, GyroZ,
  MagX, MagY, MagZ,
  AccelX, AccelY, AccelZ,
  Temperature,
  Battery,
};
inline constexpr std::size_t kSensorCount = 11;
inline constexpr std::size_t kPwmChannels = 4;
/// READ_ALL payload: every sensor as 2 bytes, in Sensor order.
inline constexpr std::size_t kReadAllSize = 2 * kSensorCount;

const char* sensor_name(Sensor s) noexcept;
/// Engineering units to wire counts: gyro deg/s x100, mag uT x10, accel g x1000,
/// temperature degC x10, battery mV x1.
double sensor_scale(Sensor s) noexcept;
/// Scaled, rounded and saturated wire value. Battery is unsigned, the rest signed.
std::uint16_t to_counts(Sensor s, double value) noexcept;
double from_counts(Sensor s, std::uint16_t counts) noexcept;

/// value(t) = bias + amplitude sin(2 pi freq t + phase) + N(0, sigma)
struct SensorProfile {
  double bias = 0.0;
  double amplitude = 0.0;
  double freq_hz = 0.0;
  double phase = 0.0;
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

/// Deterministic in (profile, t): the noise term is a hash of the seed and t in microseconds.
double sensor_value(const SensorProfile& p, double t);

using SensorProfiles = std::array<SensorProfile, kSensorCount>;
SensorProfiles default_profiles(std::uint64_t seed);

struct FaultConfig {
  double bit_flip_prob = 0.0;  // per response, one random bit flipped
  double drop_prob = 0.0;      // per response
  std::uint64_t seed = 0;
};

struct McuConfig {
  SensorProfiles profiles{};
  FaultConfig faults{};
  /// Gyro readings are scaled by exp(-gain * integral of mean |duty| / 100 dt).
  double coupling_gain = 0.0;
};

/// Emulated sensor/actuator microcontroller.
class Mcu {
 public:
  explicit Mcu(McuConfig cfg);

  /// Handles one request frame at logical time t (seconds). Never throws.
  /// Returns nothing only when fault injection drops the reply.
  std::optional<Bytes> handle(std::span<const std::uint8_t> request, double t);

  /// Byte-stream front end: buffers input, scans for sync and answers every
  /// complete frame. Garbage before a sync byte is discarded.
  std::vector<Bytes> receive(std::span<const std::uint8_t> bytes, double t);

  /// Signed duty in percent; negative means reverse direction.
  int pwm(std::size_t channel) const { return duty_[channel]; }
  double coupling_factor() const;
  std::size_t resync_count() const noexcept { return resyncs_; }
  const McuConfig& config() const noexcept { return cfg_; }

 private:
  BusResponse respond(const BusRequest& r, double t);
  void advance(double t);
  double reading(Sensor s, double t) const;

  McuConfig cfg_;
  std::array<int, kPwmChannels> duty_{};
  double duty_integral_ = 0.0;
  double last_t_ = 0.0;
  Bytes rx_;
  std::size_t resyncs_ = 0;
  std::mt19937_64 fault_rng_;
};

/// Ordered byte pipe with a fixed per-byte transfer time. Times in microseconds.
class ByteLink {
 public:
  explicit ByteLink(std::int64_t byte_time_us = 87) : byte_time_us_(byte_time_us) {}

  void send(std::span<const std::uint8_t> bytes, std::int64_t now_us);
  /// Bytes whose arrival time is at or before `now_us`.
  Bytes receive(std::int64_t now_us);
  bool idle() const noexcept { return queue_.empty(); }

 private:
  std::int64_t byte_time_us_;
  std::int64_t line_free_us_ = 0;
  std::deque<std::pair<std::int64_t, std::uint8_t>> queue_;
};

}  // namespace cubesim::bus
