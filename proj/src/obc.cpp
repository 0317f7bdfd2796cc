#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "cubesim/obc.hpp"

namespace cubesim::obc {

const char* mode_name(Mode m) noexcept {
  switch (m) {
    case Mode::Boot: return "BOOT";
    case Mode::Safe: return "SAFE";
    case Mode::Nominal: return "NOMINAL";
    case Mode::Adcs: return "ADCS";
    case Mode::Payload: return "PAYLOAD";
    case Mode::Downlink: return "DOWNLINK";
  }
  return "?";
}

std::optional<Mode> mode_from_number(int n) noexcept {
  if (n >= 0 && n <= 5) return static_cast<Mode>(n);
  return std::nullopt;
}

const char* ack_status_name(AckStatus s) noexcept {
  switch (s) {
    case AckStatus::Ok: return "ok";
    case AckStatus::Rejected: return "rejected";
    case AckStatus::BadArg: return "bad-arg";
  }
  return "?";
}

const char* action_name(ActionKind k) noexcept {
  switch (k) {
    case ActionKind::Ack: return "ack";
    case ActionKind::StartCapture: return "start-capture";
    case ActionKind::StartDetumble: return "start-detumble";
    case ActionKind::StopDetumble: return "stop-detumble";
    case ActionKind::StartImageDownlink: return "start-image-downlink";
    case ActionKind::QueueHousekeeping: return "queue-housekeeping";
    case ActionKind::QueueTelemetry: return "queue-telemetry";
    case ActionKind::Reboot: return "reboot";
  }
  return "?";
}

std::string describe(const Trigger& t) {
  struct V {
    std::string operator()(const GroundCommand& c) const {
      std::string s = std::string("command ") + dtmf::opcode_name(c.command.opcode);
      if (!c.command.args.empty()) s += " " + c.command.args;
      return s;
    }
    std::string operator()(const SensorThreshold& s) const {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.2f", s.value);
      return "sensor " + s.name + "=" + buf;
    }
    std::string operator()(const SubroutineDone& d) const { return "done " + d.name + (d.ok ? " ok" : " failed"); }
    std::string operator()(const Timer& t) const { return "timer " + t.name; }
    std::string operator()(const GpsRegion& g) const { return std::string("gps ") + (g.enter ? "enter " : "exit ") + g.name; }
  };
  return std::visit(V{}, t);
}

namespace {

Action ack(const dtmf::UplinkCommand& c, AckStatus s) {
  Action a{ActionKind::Ack};
  a.opcode = c.opcode;
  a.status = s;
  a.args = c.args;
  return a;
}

Action plain(ActionKind k) { return Action{k}; }

bool busy(Mode m) { return m == Mode::Payload || m == Mode::Downlink; }

Transition on_command(Mode m, const dtmf::UplinkCommand& c, const TransitionParams& p) {
  using dtmf::Opcode;

  if (c.opcode == Opcode::Reboot) {
    std::vector<Action> acts;
    if (m == Mode::Adcs) acts.push_back(plain(ActionKind::StopDetumble));
    acts.push_back(plain(ActionKind::Reboot));
    acts.push_back(ack(c, AckStatus::Ok));
    return {Mode::Boot, acts};
  }
  if (m == Mode::Boot) return {m, {ack(c, AckStatus::Rejected)}};

  switch (c.opcode) {
    case Opcode::Ping:
      return {m, {ack(c, AckStatus::Ok)}};

    case Opcode::DownlinkTelemetry:
      return {m, {ack(c, AckStatus::Ok), plain(ActionKind::QueueTelemetry)}};

    case Opcode::SetMode: {
      const int target = c.args.size() == 1 ? c.args[0] - '0' : -1;
      if (target != 1 && target != 2 && target != 3) return {m, {ack(c, AckStatus::BadArg)}};
      if (busy(m)) return {m, {ack(c, AckStatus::Rejected)}};
      const auto next = static_cast<Mode>(target);
      std::vector<Action> acts{ack(c, AckStatus::Ok)};
      if (m == Mode::Adcs && next != Mode::Adcs) acts.push_back(plain(ActionKind::StopDetumble));
      if (m != Mode::Adcs && next == Mode::Adcs) acts.push_back(plain(ActionKind::StartDetumble));
      return {next, acts};
    }

    case Opcode::Capture:
      if (m != Mode::Nominal) return {m, {ack(c, AckStatus::Rejected)}};
      return {Mode::Payload, {ack(c, AckStatus::Ok), plain(ActionKind::StartCapture)}};

    case Opcode::DownlinkImage: {
      if (m != Mode::Nominal) return {m, {ack(c, AckStatus::Rejected)}};
      const int id = c.args.empty() ? p.image_count : std::stoi(c.args);
      if (id < 1 || id > p.image_count) return {m, {ack(c, AckStatus::BadArg)}};
      Action start{ActionKind::StartImageDownlink};
      start.image_id = id;
      return {Mode::Downlink, {ack(c, AckStatus::Ok), start}};
    }

    case Opcode::Reboot:
      break;
  }
  return {m, {ack(c, AckStatus::BadArg)}};
}

}  // namespace

Transition compute_state(Mode m, const Event& event, const TransitionParams& p) {
  struct V {
    Mode m;
    const TransitionParams& p;

    Transition operator()(const GroundCommand& c) const { return on_command(m, c.command, p); }

    Transition operator()(const SensorThreshold& s) const {
      if (s.name != kGyroMagnitude) return {m, {}};
      if (m == Mode::Nominal && s.value >= p.omega_high) return {Mode::Adcs, {plain(ActionKind::StartDetumble)}};
      if (m == Mode::Adcs && s.value < p.omega_low) return {Mode::Nominal, {plain(ActionKind::StopDetumble)}};
      return {m, {}};
    }

    Transition operator()(const SubroutineDone& d) const {
      if (m == Mode::Payload && d.name == kCaptureTask) return {Mode::Nominal, {}};
      if (m == Mode::Downlink && d.name == kDownlinkTask) return {Mode::Nominal, {}};
      return {m, {}};
    }

    Transition operator()(const Timer& t) const {
      if (t.name == kBootTimer) return {m == Mode::Boot ? Mode::Safe : m, {}};
      if (t.name == kHousekeepingTimer && m != Mode::Boot) return {m, {plain(ActionKind::QueueHousekeeping)}};
      return {m, {}};
    }

    Transition operator()(const GpsRegion& g) const {
      if (m == Mode::Nominal && g.enter && g.name == kImagingRegion) return {Mode::Payload, {plain(ActionKind::StartCapture)}};
      return {m, {}};
    }
  };
  return std::visit(V{m, p}, event.trigger);
}

// ---------------------------------------------------------------------------

Vec3 detumble_step(const Vec3& /*gyro*/, const Vec3& mag, const Vec3& mag_prev, double dt, double k, double m_max) {
  if (!(dt > 0.0)) throw std::invalid_argument("detumble_step: dt must be positive");
  if (!(k > 0.0) || !(m_max > 0.0)) throw std::invalid_argument("detumble_step: k and m_max must be positive");
  Vec3 duty{};
  for (std::size_t i = 0; i < 3; ++i) {
    const double m = -k * (mag[i] - mag_prev[i]) / dt;
    const double d = std::clamp(std::abs(m) / m_max, 0.0, 1.0) * 100.0;
    duty[i] = m < 0.0 ? -d : d;
  }
  return duty;
}

Vec3 BdotController::step(const Vec3& gyro, const Vec3& mag, double dt) {
  Vec3 out{};
  if (prev_) out = detumble_step(gyro, mag, *prev_, dt, k_, m_max_);
  prev_ = mag;
  return out;
}

std::vector<bus::BusRequest> pwm_requests(const Vec3& duty) {
  std::vector<bus::BusRequest> out;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto mag = static_cast<std::uint8_t>(std::clamp(std::lround(std::abs(duty[i])), 0L, 100L));
    const auto ch = static_cast<std::uint8_t>(i | (duty[i] < 0.0 ? 0x80 : 0x00));
    out.push_back({static_cast<std::uint8_t>(bus::Command::SetPwm), ch, mag});
  }
  return out;
}

// ---------------------------------------------------------------------------

Vec3 SensorSample::gyro() const {
  return {value(bus::Sensor::GyroX), value(bus::Sensor::GyroY), value(bus::Sensor::GyroZ)};
}

Vec3 SensorSample::mag() const {
  return {value(bus::Sensor::MagX), value(bus::Sensor::MagY), value(bus::Sensor::MagZ)};
}

double SensorSample::gyro_magnitude() const {
  const auto g = gyro();
  return std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
}

std::optional<SensorSample> SensorSample::from_payload(std::span<const std::uint8_t> payload, std::int64_t clock_ms) {
  if (payload.size() != bus::kReadAllSize && payload.size() != bus::kReadAllSize + bus::kPwmChannels) return std::nullopt;
  SensorSample s;
  s.clock_ms = clock_ms;
  for (std::size_t i = 0; i < bus::kSensorCount; ++i) s.counts[i] = get_u16be(payload, 2 * i);
  if (payload.size() > bus::kReadAllSize)
    for (std::size_t i = 0; i < bus::kPwmChannels; ++i) {
      const auto b = payload[bus::kReadAllSize + i];
      s.pwm[i] = (b & 0x80) ? -(b & 0x7F) : b;
    }
  return s;
}

Bytes Housekeeping::pack() const {
  Bytes out;
  put_u32be(out, clock_ms);
  out.push_back(mode);
  put_u16be(out, battery_mv);
  put_i16be(out, temp_c_x10);
  for (auto v : gyro) put_i16be(out, v);
  for (auto v : mag) put_i16be(out, v);
  return out;
}

std::optional<Housekeeping> Housekeeping::unpack(std::span<const std::uint8_t> p) {
  if (p.size() != kSize) return std::nullopt;
  Housekeeping h;
  h.clock_ms = get_u32be(p, 0);
  h.mode = p[4];
  h.battery_mv = get_u16be(p, 5);
  h.temp_c_x10 = get_i16be(p, 7);
  for (std::size_t i = 0; i < 3; ++i) h.gyro[i] = get_i16be(p, 9 + 2 * i);
  for (std::size_t i = 0; i < 3; ++i) h.mag[i] = get_i16be(p, 15 + 2 * i);
  return h;
}

Bytes AckPayload::pack() const {
  Bytes out{opcode, static_cast<std::uint8_t>(status)};
  put_u16be(out, counter);
  out.insert(out.end(), args.begin(), args.end());
  return out;
}

std::optional<AckPayload> AckPayload::unpack(std::span<const std::uint8_t> p) {
  if (p.size() < 4 || p.size() > 4 + dtmf::kMaxArgDigits || p[1] > 2) return std::nullopt;
  AckPayload a;
  a.opcode = p[0];
  a.status = static_cast<AckStatus>(p[1]);
  a.counter = get_u16be(p, 2);
  a.args.assign(p.begin() + 4, p.end());
  return a;
}

Bytes ImageMeta::pack() const {
  Bytes out;
  put_u16be(out, id);
  put_u16be(out, width);
  put_u16be(out, height);
  put_u32be(out, capture_ms);
  return out;
}

std::optional<ImageMeta> ImageMeta::unpack(std::span<const std::uint8_t> p) {
  if (p.size() != 10) return std::nullopt;
  return ImageMeta{get_u16be(p, 0), get_u16be(p, 2), get_u16be(p, 4), get_u32be(p, 6)};
}

Bytes pack_event_log(const std::vector<LogEntry>& log) {
  constexpr std::size_t kMaxField = 48;
  std::vector<Bytes> records;
  std::size_t total = 0;
  for (auto it = log.rbegin(); it != log.rend(); ++it) {
    Bytes r;
    put_u32be(r, static_cast<std::uint32_t>(it->clock_ms));
    const auto kind = it->kind.substr(0, kMaxField);
    const auto detail = it->detail.substr(0, kMaxField);
    r.push_back(static_cast<std::uint8_t>(kind.size()));
    r.insert(r.end(), kind.begin(), kind.end());
    r.push_back(static_cast<std::uint8_t>(detail.size()));
    r.insert(r.end(), detail.begin(), detail.end());
    if (total + r.size() > afsk::kMaxPayload) break;
    total += r.size();
    records.push_back(std::move(r));
  }
  Bytes out;
  for (auto it = records.rbegin(); it != records.rend(); ++it) out.insert(out.end(), it->begin(), it->end());
  return out;
}

std::vector<LogEntry> unpack_event_log(std::span<const std::uint8_t> p) {
  std::vector<LogEntry> out;
  std::size_t at = 0;
  while (at + 6 <= p.size()) {
    LogEntry e;
    e.clock_ms = get_u32be(p, at);
    at += 4;
    const std::size_t kl = p[at++];
    if (at + kl + 1 > p.size()) break;
    e.kind.assign(p.begin() + static_cast<std::ptrdiff_t>(at), p.begin() + static_cast<std::ptrdiff_t>(at + kl));
    at += kl;
    const std::size_t dl = p[at++];
    if (at + dl > p.size()) break;
    e.detail.assign(p.begin() + static_cast<std::ptrdiff_t>(at), p.begin() + static_cast<std::ptrdiff_t>(at + dl));
    at += dl;
    out.push_back(std::move(e));
  }
  return out;
}

Housekeeping housekeeping_of(const SatelliteState& st) {
  Housekeeping h;
  h.clock_ms = static_cast<std::uint32_t>(st.clock_ms);
  h.mode = static_cast<std::uint8_t>(st.mode);
  if (!st.last_sample) {
    h.mode |= Housekeeping::kNoDataFlag;
    return h;
  }
  const auto& c = st.last_sample->counts;
  using bus::Sensor;
  h.battery_mv = c[static_cast<std::size_t>(Sensor::Battery)];
  h.temp_c_x10 = static_cast<std::int16_t>(c[static_cast<std::size_t>(Sensor::Temperature)]);
  for (std::size_t i = 0; i < 3; ++i) {
    h.gyro[i] = static_cast<std::int16_t>(c[static_cast<std::size_t>(Sensor::GyroX) + i]);
    h.mag[i] = static_cast<std::int16_t>(c[static_cast<std::size_t>(Sensor::MagX) + i]);
  }
  return h;
}

afsk::TelemetryFrame make_housekeeping(const SatelliteState& st) {
  return afsk::make_frame(afsk::FrameType::Housekeeping, housekeeping_of(st).pack());
}

}  // namespace cubesim::obc
