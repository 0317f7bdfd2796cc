#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "cubesim/afsk.hpp"
#include "cubesim/bus.hpp"
#include "cubesim/dtmf.hpp"
#include "cubesim/raster.hpp"

namespace cubesim::obc {

enum class Mode : std::uint8_t { Boot = 0, Safe = 1, Nominal = 2, Adcs = 3, Payload = 4, Downlink = 5 };
inline constexpr std::array<Mode, 6> kAllModes{Mode::Boot, Mode::Safe, Mode::Nominal, Mode::Adcs, Mode::Payload, Mode::Downlink};

const char* mode_name(Mode m) noexcept;
std::optional<Mode> mode_from_number(int n) noexcept;

// Trigger names used by the kernel.
inline constexpr const char* kBootTimer = "boot";
inline constexpr const char* kHousekeepingTimer = "housekeeping";
inline constexpr const char* kGyroMagnitude = "gyro_mag";
inline constexpr const char* kCaptureTask = "capture";
inline constexpr const char* kDownlinkTask = "downlink";
/// Entering this GPS region in NOMINAL starts an autonomous capture.
inline constexpr const char* kImagingRegion = "imaging";

struct GroundCommand {
  dtmf::UplinkCommand command;
};
struct SensorThreshold {
  std::string name;
  double value = 0.0;
};
struct SubroutineDone {
  std::string name;
  bool ok = true;
};
struct Timer {
  std::string name;
};
struct GpsRegion {
  std::string name;
  bool enter = true;
};

using Trigger = std::variant<GroundCommand, SensorThreshold, SubroutineDone, Timer, GpsRegion>;

struct Event {
  std::int64_t clock_ms = 0;
  Trigger trigger;
};

std::string describe(const Trigger& t);

enum class AckStatus : std::uint8_t { Ok = 0, Rejected = 1, BadArg = 2 };
const char* ack_status_name(AckStatus s) noexcept;

enum class ActionKind {
  Ack,
  StartCapture,
  StartDetumble,
  StopDetumble,
  StartImageDownlink,
  QueueHousekeeping,
  QueueTelemetry,
  Reboot,
};
const char* action_name(ActionKind k) noexcept;

struct Action {
  explicit Action(ActionKind k) : kind(k) {}

  ActionKind kind;
  dtmf::Opcode opcode = dtmf::Opcode::Ping;  // Ack only
  AckStatus status = AckStatus::Ok;          // Ack only
  std::string args;                          // Ack only: echoed argument digits
  int image_id = 0;                          // StartImageDownlink only

  bool operator==(const Action&) const = default;
};

struct TransitionParams {
  double omega_high = 10.0;  // deg/s
  double omega_low = 2.0;    // deg/s
  int image_count = 0;       // stored images carry ids 1..image_count
};

struct Transition {
  Mode next;
  std::vector<Action> actions;
};

/// The mode transition table. Pure; actions are directives for the kernel.
Transition compute_state(Mode current, const Event& event, const TransitionParams& params);

// ---------------------------------------------------------------------------
// Attitude control
// ---------------------------------------------------------------------------

using Vec3 = std::array<double, 3>;

/// Plugin interface for attitude control: sensor samples in, signed PWM duties (percent) out.
class AttitudeController {
 public:
  virtual ~AttitudeController() = default;
  virtual void reset() = 0;
  /// gyro deg/s, mag uT, dt seconds since the previous sample.
  virtual Vec3 step(const Vec3& gyro, const Vec3& mag, double dt) = 0;
};

/// B-dot: m = -k dB/dt per axis, duty = clamp(|m| / m_max, 0, 1) * 100 with sign as direction.
/// Throws std::invalid_argument unless dt > 0, k > 0 and m_max > 0.
Vec3 detumble_step(const Vec3& gyro, const Vec3& mag, const Vec3& mag_prev, double dt, double k, double m_max);

class BdotController final : public AttitudeController {
 public:
  BdotController(double k, double m_max) : k_(k), m_max_(m_max) {}
  void reset() override { prev_.reset(); }
  Vec3 step(const Vec3& gyro, const Vec3& mag, double dt) override;

 private:
  double k_;
  double m_max_;
  std::optional<Vec3> prev_;
};

/// SET_PWM requests for magnetorquer channels 0..2.
std::vector<bus::BusRequest> pwm_requests(const Vec3& duty);

// ---------------------------------------------------------------------------
// Telemetry payloads
// ---------------------------------------------------------------------------

/// Decoded READ_ALL reply.
struct SensorSample {
  std::int64_t clock_ms = 0;
  std::array<std::uint16_t, bus::kSensorCount> counts{};
  std::array<int, bus::kPwmChannels> pwm{};

  double value(bus::Sensor s) const { return bus::from_counts(s, counts[static_cast<std::size_t>(s)]); }
  Vec3 gyro() const;
  Vec3 mag() const;
  double gyro_magnitude() const;

  /// Parses a 22- or 26-byte READ_ALL payload.
  static std::optional<SensorSample> from_payload(std::span<const std::uint8_t> payload, std::int64_t clock_ms);
};

/// 21-byte housekeeping record, big-endian.
struct Housekeeping {
  static constexpr std::size_t kSize = 21;
  static constexpr std::uint8_t kNoDataFlag = 0x80;

  std::uint32_t clock_ms = 0;
  std::uint8_t mode = 0;  // top bit set when no sensor data has been read yet
  std::uint16_t battery_mv = 0;
  std::int16_t temp_c_x10 = 0;
  std::array<std::int16_t, 3> gyro{};  // centi-deg/s
  std::array<std::int16_t, 3> mag{};   // tenth-uT

  Bytes pack() const;
  static std::optional<Housekeeping> unpack(std::span<const std::uint8_t> payload);
  bool has_data() const noexcept { return (mode & kNoDataFlag) == 0; }
  bool operator==(const Housekeeping&) const = default;
};

struct AckPayload {
  std::uint8_t opcode = 0;
  AckStatus status = AckStatus::Ok;
  std::uint16_t counter = 0;  // commands received since boot of the simulation
  std::string args;           // echoed digits

  Bytes pack() const;
  static std::optional<AckPayload> unpack(std::span<const std::uint8_t> payload);
};

struct ImageMeta {
  std::uint16_t id = 0;
  std::uint16_t width = ImageRaster::kWidth;
  std::uint16_t height = ImageRaster::kHeight;
  std::uint32_t capture_ms = 0;

  Bytes pack() const;
  static std::optional<ImageMeta> unpack(std::span<const std::uint8_t> payload);
};

struct LogEntry {
  std::int64_t clock_ms = 0;
  std::string kind;
  std::string detail;
  bool operator==(const LogEntry&) const = default;
};

/// Most recent log entries that fit one frame: u32 clock | u8 kind-length | kind | u8 detail-length | detail.
Bytes pack_event_log(const std::vector<LogEntry>& log);
std::vector<LogEntry> unpack_event_log(std::span<const std::uint8_t> payload);

struct StoredImage {
  int id = 0;
  std::int64_t capture_ms = 0;
  ImageRaster raster;
};

struct SatelliteState {
  Mode mode = Mode::Boot;
  std::int64_t clock_ms = 0;
  std::optional<SensorSample> last_sample;
  std::vector<StoredImage> images;
  std::vector<LogEntry> log;
  std::uint16_t command_counter = 0;
};

/// Housekeeping frame for the current state.
afsk::TelemetryFrame make_housekeeping(const SatelliteState& state);
Housekeeping housekeeping_of(const SatelliteState& state);

// ---------------------------------------------------------------------------
// Camera
// ---------------------------------------------------------------------------

struct CameraParams {
  double noise_sigma = 2.0;  // gray levels
  int blur_radius = 1;       // box radius in pixels
};

/// Colour bars, gradient and a 16-bit id stamp. No noise or blur.
ImageRaster render_test_scene(int id);
/// Test scene degraded per `params`; deterministic in (id, params, seed).
ImageRaster capture_image(int id, const CameraParams& params, std::uint64_t seed);

inline constexpr std::int64_t kCaptureDurationMs = 2000;

}  // namespace cubesim::obc
