#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "cubesim/kernel.hpp"
#include "cubesim/rng.hpp"
#include "cubesim/sstv.hpp"
#include "json.hpp"

namespace cubesim::obc {

namespace fs = std::filesystem;

namespace {

std::string numbered(int n, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%03d.%s", n, ext);
  return buf;
}

constexpr std::int64_t kBusTimeoutUs = 50'000;
constexpr int kBusAttempts = 3;  // first try plus two retries

}  // namespace

std::uint64_t uplink_noise_seed(std::uint64_t seed, int n) { return mix_seed(mix_seed(seed, 0x75706c6bull), static_cast<std::uint64_t>(n)); }
std::uint64_t downlink_noise_seed(std::uint64_t seed, int n) { return mix_seed(mix_seed(seed, 0x646e6c6bull), static_cast<std::uint64_t>(n)); }

Kernel::Kernel(Scenario scenario, std::optional<fs::path> session_dir, std::unique_ptr<AttitudeController> controller)
    : scenario_(std::move(scenario)),
      dir_(std::move(session_dir)),
      controller_(std::move(controller)),
      decoder_(audio::kCanonicalRate),
      mcu_([&] {
        scenario_.validate();
        bus::McuConfig cfg;
        cfg.profiles = scenario_.sensors;
        for (std::size_t i = 0; i < cfg.profiles.size(); ++i) cfg.profiles[i].seed = mix_seed(scenario_.seed, i);
        cfg.faults = scenario_.bus_faults;
        cfg.faults.seed = mix_seed(scenario_.seed, 0x627573ull);
        cfg.coupling_gain = scenario_.coupling_gain;
        return cfg;
      }()),
      to_mcu_(scenario_.bus_byte_time_us),
      from_mcu_(scenario_.bus_byte_time_us) {
  if (!controller_) controller_ = std::make_unique<BdotController>(scenario_.detumble_k, scenario_.detumble_m_max);
  for (const auto& e : scenario_.events)
    if (e.kind == ScheduledEvent::Kind::GpsRegion) gps_events_.push_back(e);
  std::stable_sort(gps_events_.begin(), gps_events_.end(), [](const auto& a, const auto& b) { return a.t_s < b.t_s; });

  if (dir_) {
    for (const char* sub : {"images", "downlink", "uplink"}) fs::create_directories(*dir_ / sub);
    std::ofstream(*dir_ / "scenario.json", std::ios::binary) << scenario_.to_json();
    std::ofstream(*dir_ / "log.jsonl", std::ios::binary | std::ios::trunc);
  }
  boot_due_ = std::llround(scenario_.boot_s * 1000.0);
  log("mode", mode_name(state_.mode));
}

Kernel::~Kernel() = default;

bool Kernel::done() const noexcept { return state_.clock_ms >= std::llround(scenario_.duration_s * 1000.0); }

Snapshot Kernel::snapshot() const {
  return {state_.mode, state_.clock_ms, state_.last_sample, static_cast<int>(state_.images.size()), state_.log.size()};
}

std::vector<DownlinkSegment> Kernel::take_downlink() {
  std::vector<DownlinkSegment> out;
  out.swap(fresh_);
  return out;
}

void Kernel::log(const std::string& kind, const std::string& detail) {
  state_.log.push_back({state_.clock_ms, kind, detail});
  if (dir_) {
    nlohmann::ordered_json j{{"clock_ms", state_.clock_ms}, {"kind", kind}, {"detail", detail}};
    std::ofstream(*dir_ / "log.jsonl", std::ios::binary | std::ios::app) << j.dump() << "\n";
  }
}

void Kernel::receive_uplink(const audio::AudioBuffer& audio, std::int64_t start_ms) {
  const audio::AudioBuffer pcm =
      audio.rate == audio::kCanonicalRate ? audio : audio::resample_linear(audio, audio::kCanonicalRate);
  ++uplink_count_;
  if (dir_) audio::wav_write(pcm, *dir_ / "uplink" / numbered(uplink_count_, "wav"));

  const std::int64_t start = std::max(start_ms, state_.clock_ms) * audio::kCanonicalRate / 1000;
  const std::int64_t offset = start - rx_base_;
  const auto need = static_cast<std::size_t>(offset) + pcm.size();
  if (rx_.size() < need) rx_.resize(need, 0.0);
  for (std::size_t i = 0; i < pcm.size(); ++i) rx_[static_cast<std::size_t>(offset) + i] += pcm.samples[i];
}

void Kernel::tick() {
  const std::int64_t from = state_.clock_ms;
  state_.clock_ms += scenario_.tick_ms;
  step_uplink(from, state_.clock_ms);
  step_timers();
  step_subroutines();
  step_bus();
  step_transmitter();
}

void Kernel::step_uplink(std::int64_t from_ms, std::int64_t to_ms) {
  const auto n = static_cast<std::size_t>((to_ms - from_ms) * audio::kCanonicalRate / 1000);
  std::vector<double> chunk(n, 0.0);
  const std::size_t have = std::min(n, rx_.size());
  std::copy(rx_.begin(), rx_.begin() + static_cast<std::ptrdiff_t>(have), chunk.begin());
  rx_.erase(rx_.begin(), rx_.begin() + static_cast<std::ptrdiff_t>(have));
  rx_base_ += static_cast<std::int64_t>(n);
  decoder_.feed(chunk);

  for (const auto& ev : decoder_.take_events()) {
    const auto outcome = assembler_.push(ev);
    if (!outcome) continue;
    if (outcome->diagnostic)
      log("uplink-error", std::string(dtmf::uplink_diagnostic_name(outcome->diagnostic->kind)) + ": " + outcome->diagnostic->message);
    if (outcome->command) {
      ++state_.command_counter;
      dispatch(GroundCommand{*outcome->command});
    }
  }
}

void Kernel::step_timers() {
  const auto now = state_.clock_ms;
  if (boot_due_ && now >= *boot_due_) {
    boot_due_.reset();
    housekeeping_due_ = now + std::llround(scenario_.housekeeping_period_s * 1000.0);
    dispatch(Timer{kBootTimer});
  }
  if (housekeeping_due_ && now >= *housekeeping_due_) {
    *housekeeping_due_ += std::llround(scenario_.housekeeping_period_s * 1000.0);
    dispatch(Timer{kHousekeepingTimer});
  }
  while (next_event_ < gps_events_.size() && std::llround(gps_events_[next_event_].t_s * 1000.0) <= now) {
    const auto& e = gps_events_[next_event_++];
    dispatch(GpsRegion{e.region, e.enter});
  }
}

void Kernel::step_subroutines() {
  if (capture_started_ && state_.clock_ms >= *capture_started_ + kCaptureDurationMs) finish_capture();
  if (image_downlink_end_ && state_.clock_ms >= *image_downlink_end_) {
    image_downlink_end_.reset();
    image_downlink_active_ = false;
    log("subroutine", "downlink done");
    dispatch(SubroutineDone{kDownlinkTask, true});
  }
}

void Kernel::finish_capture() {
  const auto started = *capture_started_;
  capture_started_.reset();
  const int id = static_cast<int>(state_.images.size()) + 1;
  StoredImage img{id, started, capture_image(id, scenario_.camera, scenario_.seed)};
  bool ok = true;
  if (dir_) {
    try {
      ppm_write(img.raster, *dir_ / "images" / numbered(id, "ppm"));
    } catch (const std::exception& e) {
      ok = false;
      log("error", std::string("capture storage failed: ") + e.what());
    }
  }
  if (ok) state_.images.push_back(std::move(img));
  log("subroutine", ok ? "capture done image " + std::to_string(id) + " after " +
                             std::to_string(state_.clock_ms - started) + " ms"
                       : std::string("capture failed"));
  dispatch(SubroutineDone{kCaptureTask, ok});
}

void Kernel::dispatch(const Trigger& trigger) {
  const Event ev{state_.clock_ms, trigger};
  if (std::holds_alternative<GroundCommand>(trigger)) log("command", describe(trigger));
  if (std::holds_alternative<GpsRegion>(trigger)) log("gps", describe(trigger));

  const TransitionParams params{scenario_.omega_high, scenario_.omega_low, static_cast<int>(state_.images.size())};
  const Transition t = compute_state(state_.mode, ev, params);
  if (t.next != state_.mode) {
    state_.mode = t.next;
    log("mode", mode_name(t.next));
  }
  for (const auto& a : t.actions) execute(a);
}

void Kernel::execute(const Action& a) {
  switch (a.kind) {
    case ActionKind::Ack: {
      AckPayload p{static_cast<std::uint8_t>(a.opcode), a.status, state_.command_counter, a.args};
      queue_frame(afsk::make_frame(afsk::FrameType::Ack, p.pack()),
                  std::string("ack ") + dtmf::opcode_name(a.opcode) + " " + ack_status_name(a.status));
      break;
    }
    case ActionKind::StartCapture:
      capture_started_ = state_.clock_ms;
      log("subroutine", "capture start");
      break;
    case ActionKind::StartDetumble:
      detumble_active_ = true;
      controller_->reset();
      prev_sample_ms_.reset();
      log("subroutine", "detumble start");
      break;
    case ActionKind::StopDetumble:
      detumble_active_ = false;
      for (const auto& r : pwm_requests({0.0, 0.0, 0.0})) bus_queue_.push_back(r);
      log("subroutine", "detumble stop");
      break;
    case ActionKind::StartImageDownlink: {
      const auto& img = state_.images.at(static_cast<std::size_t>(a.image_id - 1));
      ImageMeta meta{static_cast<std::uint16_t>(img.id), static_cast<std::uint16_t>(img.raster.width()),
                     static_cast<std::uint16_t>(img.raster.height()), static_cast<std::uint32_t>(img.capture_ms)};
      queue_frame(afsk::make_frame(afsk::FrameType::ImageMeta, meta.pack()), "image-meta " + std::to_string(img.id));
      tx_queue_.push_back({DownlinkSegment::Kind::Sstv, std::nullopt, img.id, "sstv image " + std::to_string(img.id)});
      image_downlink_active_ = true;
      log("subroutine", "downlink start image " + std::to_string(img.id));
      break;
    }
    case ActionKind::QueueHousekeeping:
      queue_frame(make_housekeeping(state_), "housekeeping");
      break;
    case ActionKind::QueueTelemetry:
      queue_frame(make_housekeeping(state_), "housekeeping");
      queue_frame(afsk::make_frame(afsk::FrameType::EventLog, pack_event_log(state_.log)), "event-log");
      break;
    case ActionKind::Reboot:
      if (capture_started_) log("subroutine", "capture aborted");
      if (image_downlink_active_) log("subroutine", "downlink aborted");
      capture_started_.reset();
      image_downlink_active_ = false;
      image_downlink_end_.reset();
      detumble_active_ = false;
      tx_queue_.clear();
      housekeeping_due_.reset();
      boot_due_ = state_.clock_ms + std::llround(scenario_.boot_s * 1000.0);
      break;
  }
}

void Kernel::queue_frame(afsk::TelemetryFrame f, std::string label) {
  tx_queue_.push_back({DownlinkSegment::Kind::Afsk, std::move(f), 0, std::move(label)});
}

void Kernel::step_bus() {
  const std::int64_t now_us = state_.clock_ms * 1000;

  // MCU side of the link.
  const Bytes in = to_mcu_.receive(now_us);
  if (!in.empty())
    for (const auto& reply : mcu_.receive(in, static_cast<double>(now_us) / 1e6)) from_mcu_.send(reply, now_us);

  // Sensor poll schedule.
  if (state_.clock_ms >= next_poll_) {
    next_poll_ += scenario_.sensor_poll_ms;
    bus_queue_.push_back({static_cast<std::uint8_t>(bus::Command::ReadAll), 1, 0});
  }

  // Client side.
  const Bytes got = from_mcu_.receive(now_us);
  bus_rx_.insert(bus_rx_.end(), got.begin(), got.end());
  while (inflight_ && !bus_rx_.empty()) {
    auto pr = bus::parse_response(bus_rx_);
    if (pr.status == bus::ParseStatus::Incomplete) break;
    bus_rx_.erase(bus_rx_.begin(), bus_rx_.begin() + static_cast<std::ptrdiff_t>(std::max<std::size_t>(pr.consumed, 1)));
    if (pr.status != bus::ParseStatus::Ok) continue;
    if (pr.response.status == bus::Status::BadCrc) {
      inflight_->deadline_us = now_us;  // the MCU saw a corrupt request; resend now
      break;
    }
    const auto req = inflight_->request;
    inflight_.reset();
    on_bus_reply(req, pr.response);
  }
  if (inflight_ && now_us >= inflight_->deadline_us) {
    if (inflight_->attempts >= kBusAttempts) {
      ++bus_failures_;
      log("bus-error", std::string(bus::command_name(inflight_->request.cmd)) + " failed after " +
                           std::to_string(kBusAttempts) + " attempts");
      inflight_.reset();
    } else {
      ++inflight_->attempts;
      to_mcu_.send(bus::encode_request(inflight_->request), now_us);
      inflight_->deadline_us = now_us + kBusTimeoutUs;
    }
  }
  if (!inflight_ && !bus_queue_.empty()) {
    inflight_ = BusTxn{bus_queue_.front(), 1, now_us + kBusTimeoutUs};
    bus_queue_.pop_front();
    bus_rx_.clear();
    to_mcu_.send(bus::encode_request(inflight_->request), now_us);
  }
}

void Kernel::on_bus_reply(const bus::BusRequest& req, const bus::BusResponse& resp) {
  if (resp.status != bus::Status::Ok) {
    log("bus-error", std::string(bus::command_name(req.cmd)) + " answered " + bus::status_name(resp.status));
    return;
  }
  if (req.cmd != static_cast<std::uint8_t>(bus::Command::ReadAll)) return;
  const auto sample = SensorSample::from_payload(resp.payload, state_.clock_ms);
  if (!sample) {
    log("bus-error", "READ_ALL payload of " + std::to_string(resp.payload.size()) + " bytes");
    return;
  }
  state_.last_sample = sample;
  dispatch(SensorThreshold{kGyroMagnitude, sample->gyro_magnitude()});

  if (detumble_active_) {
    const double dt = prev_sample_ms_ ? static_cast<double>(sample->clock_ms - *prev_sample_ms_) / 1000.0
                                      : scenario_.sensor_poll_ms / 1000.0;
    prev_sample_ms_ = sample->clock_ms;
    if (dt > 0.0)
      for (const auto& r : pwm_requests(controller_->step(sample->gyro(), sample->mag(), dt))) bus_queue_.push_back(r);
  }
}

void Kernel::step_transmitter() {
  if (state_.clock_ms < tx_busy_until_ || tx_queue_.empty()) return;
  Queued q = std::move(tx_queue_.front());
  tx_queue_.pop_front();

  DownlinkSegment seg;
  seg.index = ++segment_count_;
  seg.kind = q.kind;
  seg.start_ms = state_.clock_ms;
  if (q.kind == DownlinkSegment::Kind::Afsk) {
    seg.frame = q.frame;
    seg.audio = afsk::afsk_modulate(afsk::frame_encode(*q.frame));
  } else {
    seg.image_id = q.image_id;
    seg.audio = sstv::sstv_encode(state_.images.at(static_cast<std::size_t>(q.image_id - 1)).raster);
  }
  const auto dur_ms = static_cast<std::int64_t>(
      std::ceil(static_cast<double>(seg.audio.size()) * 1000.0 / seg.audio.rate));
  seg.end_ms = seg.start_ms + dur_ms;
  tx_busy_until_ = seg.end_ms;
  if (q.kind == DownlinkSegment::Kind::Sstv && image_downlink_active_) image_downlink_end_ = seg.end_ms;

  log("downlink", q.label + " segment " + std::to_string(seg.index) + " " + std::to_string(dur_ms) + " ms");
  if (dir_) audio::wav_write(seg.audio, *dir_ / "downlink" / numbered(seg.index, "wav"));
  fresh_.push_back(std::move(seg));
}

MissionRecord run_mission(const Scenario& scenario, std::optional<fs::path> session_dir) {
  Kernel k(scenario, std::move(session_dir));
  std::vector<ScheduledEvent> uplinks;
  for (const auto& e : scenario.events)
    if (e.kind == ScheduledEvent::Kind::Uplink) uplinks.push_back(e);
  std::stable_sort(uplinks.begin(), uplinks.end(), [](const auto& a, const auto& b) { return a.t_s < b.t_s; });

  MissionRecord rec;
  std::size_t next = 0;
  int sent = 0;
  while (!k.done()) {
    while (next < uplinks.size() && std::llround(uplinks[next].t_s * 1000.0) <= k.clock_ms()) {
      const auto clean = dtmf::command_audio(uplinks[next++].command);
      ++sent;
      k.receive_uplink(audio::awgn_apply(clean, scenario.snr_db, uplink_noise_seed(scenario.seed, sent)), k.clock_ms());
    }
    k.tick();
    for (auto& s : k.take_downlink()) rec.downlink.push_back(std::move(s));
  }
  rec.state = k.state();
  return rec;
}

}  // namespace cubesim::obc
