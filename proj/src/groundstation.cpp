#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <thread>
#include <tuple>

#include "cubesim/groundstation.hpp"
#include "json.hpp"

namespace cubesim::gs {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

std::string numbered(int n, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%03d.%s", n, ext);
  return buf;
}

std::string base64(std::span<const std::uint8_t> in) {
  static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((in.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < in.size(); i += 3) {
    const std::uint32_t n = (std::uint32_t(in[i]) << 16) | (i + 1 < in.size() ? std::uint32_t(in[i + 1]) << 8 : 0) |
                            (i + 2 < in.size() ? in[i + 2] : 0);
    out.push_back(kAlphabet[(n >> 18) & 63]);
    out.push_back(kAlphabet[(n >> 12) & 63]);
    out.push_back(i + 1 < in.size() ? kAlphabet[(n >> 6) & 63] : '=');
    out.push_back(i + 2 < in.size() ? kAlphabet[n & 63] : '=');
  }
  return out;
}

std::string opcode_digits(dtmf::Opcode op) {
  const int n = static_cast<int>(op);
  return {static_cast<char>('0' + n / 10), static_cast<char>('0' + n % 10)};
}

ojson frame_fields(const afsk::TelemetryFrame& f) {
  using afsk::FrameType;
  switch (f.type) {
    case FrameType::Housekeeping:
      if (auto h = obc::Housekeeping::unpack(f.payload)) {
        const int mode = h->mode & 0x7F;
        const auto m = obc::mode_from_number(mode);
        return {{"clock_ms", h->clock_ms},
                {"mode", mode},
                {"mode_name", m ? obc::mode_name(*m) : "?"},
                {"no_data", !h->has_data()},
                {"battery_mv", h->battery_mv},
                {"temp_c", h->temp_c_x10 / 10.0},
                {"gyro_dps", {h->gyro[0] / 100.0, h->gyro[1] / 100.0, h->gyro[2] / 100.0}},
                {"mag_ut", {h->mag[0] / 10.0, h->mag[1] / 10.0, h->mag[2] / 10.0}}};
      }
      break;
    case FrameType::Ack:
      if (auto a = obc::AckPayload::unpack(f.payload)) {
        const auto op = dtmf::opcode_from_number(a->opcode);
        return {{"opcode", a->opcode},
                {"opcode_name", op ? dtmf::opcode_name(*op) : "?"},
                {"status", obc::ack_status_name(a->status)},
                {"counter", a->counter},
                {"args", a->args}};
      }
      break;
    case FrameType::ImageMeta:
      if (auto m = obc::ImageMeta::unpack(f.payload))
        return {{"id", m->id}, {"width", m->width}, {"height", m->height}, {"capture_ms", m->capture_ms}};
      break;
    case FrameType::EventLog: {
      ojson entries = ojson::array();
      for (const auto& e : obc::unpack_event_log(f.payload))
        entries.push_back({{"clock_ms", e.clock_ms}, {"kind", e.kind}, {"detail", e.detail}});
      return {{"entries", entries}};
    }
  }
  return {{"malformed", true}};
}

ojson report_json(const sstv::DecodeReport& r) {
  return {{"vis_ok", r.vis_ok},
          {"vis_code", r.vis_code},
          {"lines_total", r.lines_total},
          {"lines_synced", r.lines_synced},
          {"lines_lost", r.lines_lost},
          {"mean_sync_error_ms", r.mean_sync_error_ms},
          {"start_seconds", r.start_seconds}};
}

}  // namespace

// ---------------------------------------------------------------------------

DecodeOutput gs_decode(const audio::AudioBuffer& input, const sstv::RowCallback& on_row) {
  DecodeOutput out;
  if (input.empty()) {
    out.diagnostics.push_back("empty audio");
    return out;
  }
  try {
    const audio::AudioBuffer buf =
        input.rate == audio::kCanonicalRate ? input : audio::resample_linear(input, audio::kCanonicalRate);
    if (sstv::sstv_detect(buf)) {
      out.image = sstv::sstv_decode(buf, on_row);
      return out;
    }
    const Bytes bytes = afsk::afsk_demodulate(buf);
    auto parsed = afsk::frame_parse(bytes);
    out.frames = std::move(parsed.frames);
    out.frame_diagnostics = std::move(parsed.diagnostics);
    for (const auto& d : out.frame_diagnostics)
      out.diagnostics.push_back(std::string(afsk::diagnostic_kind_name(d.kind)) + " at byte " + std::to_string(d.offset) +
                                ": " + d.detail);
  } catch (const std::exception& e) {
    out.diagnostics.push_back(std::string("decode error: ") + e.what());
  }
  if (out.empty()) out.diagnostics.push_back("nothing decodable");
  return out;
}

audio::AudioBuffer gs_uplink(const dtmf::UplinkCommand& cmd) { return dtmf::command_audio(cmd, 0.3); }

const char* command_status_name(CommandStatus s) noexcept {
  switch (s) {
    case CommandStatus::Pending: return "pending";
    case CommandStatus::Acked: return "acked";
    case CommandStatus::Rejected: return "rejected";
    case CommandStatus::TimedOut: return "failed-timeout";
  }
  return "?";
}

std::string frame_json(const FrameRecord& f) {
  ojson j{{"seq", f.seq},
          {"rx_ms", f.rx_ms},
          {"segment", f.segment},
          {"type", afsk::frame_type_name(f.frame.type)},
          {"ftype", static_cast<int>(f.frame.type)},
          {"crc", f.frame.crc},
          {"hex", to_hex(f.frame.payload)},
          {"fields", frame_fields(f.frame)}};
  return j.dump();
}

std::string command_json(const CommandRecord& c) {
  ojson j{{"id", c.id},
          {"opcode", opcode_digits(c.command.opcode)},
          {"opcode_name", dtmf::opcode_name(c.command.opcode)},
          {"args", c.command.args},
          {"symbols", c.symbols},
          {"sent_ms", c.sent_ms},
          {"status", command_status_name(c.status)}};
  j["ack_ms"] = c.ack_ms ? ojson(*c.ack_ms) : ojson(nullptr);
  j["ack_status"] = c.ack_status ? ojson(obc::ack_status_name(*c.ack_status)) : ojson(nullptr);
  return j.dump();
}

std::string image_json(const ImageRecord& img) {
  ojson j{{"id", img.id},
          {"start_ms", img.start_ms},
          {"end_ms", img.end_ms},
          {"complete", img.complete},
          {"lines_released", img.lines_released},
          {"report", report_json(img.report)}};
  return j.dump();
}

std::string state_json(const GsSession& s) {
  ojson j{{"clock_ms", s.clock_ms}, {"live", s.live}, {"finished", s.finished}};
  if (s.last_housekeeping) {
    const int mode = s.last_housekeeping->mode & 0x7F;
    const auto m = obc::mode_from_number(mode);
    j["mode"] = m ? obc::mode_name(*m) : "?";
    afsk::TelemetryFrame f = afsk::make_frame(afsk::FrameType::Housekeeping, s.last_housekeeping->pack());
    j["housekeeping"] = frame_fields(f);
  } else {
    j["mode"] = nullptr;
    j["housekeeping"] = nullptr;
  }
  j["clock_offset_ms"] = s.clock_offset_ms ? ojson(*s.clock_offset_ms) : ojson(nullptr);
  j["frames"] = s.frames.size();
  j["crc_failures"] = s.crc_failures;
  j["images"] = s.images.size();
  j["commands"] = s.commands.size();
  j["last_seq"] = s.events.empty() ? 0 : s.events.back().seq;
  return j.dump();
}

// ---------------------------------------------------------------------------

GroundStation::GroundStation(Scenario scenario, std::optional<fs::path> session_dir)
    : scenario_(std::move(scenario)), dir_(std::move(session_dir)) {
  if (dir_) {
    fs::create_directories(*dir_ / "ground" / "images");
    for (const char* f : {"frames.jsonl", "events.jsonl", "commands.jsonl"})
      std::ofstream(*dir_ / "ground" / f, std::ios::binary | std::ios::trunc);
  }
}

void GroundStation::emit(const std::string& type, const std::string& data) {
  StreamEvent e{static_cast<std::int64_t>(s_.events.size()) + 1, s_.clock_ms, type, data};
  if (dir_) {
    ojson j{{"seq", e.seq}, {"clock_ms", e.clock_ms}, {"type", e.type}, {"data", ojson::parse(e.data)}};
    std::ofstream(*dir_ / "ground" / "events.jsonl", std::ios::binary | std::ios::app) << j.dump() << "\n";
  }
  s_.events.push_back(std::move(e));
  cv_.notify_all();
}

void GroundStation::glog(const std::string& message) { emit("log", ojson{{"message", message}}.dump()); }

void GroundStation::schedule(std::int64_t at, std::function<void()> fn) {
  releases_.push_back({at, release_order_++, std::move(fn)});
}

void GroundStation::release_due(std::int64_t now_ms) {
  std::stable_sort(releases_.begin(), releases_.end(),
                   [](const Release& a, const Release& b) { return std::tie(a.at_ms, a.order) < std::tie(b.at_ms, b.order); });
  std::size_t n = 0;
  while (n < releases_.size() && releases_[n].at_ms <= now_ms) ++n;
  std::vector<Release> due(std::make_move_iterator(releases_.begin()), std::make_move_iterator(releases_.begin() + static_cast<std::ptrdiff_t>(n)));
  releases_.erase(releases_.begin(), releases_.begin() + static_cast<std::ptrdiff_t>(n));
  for (auto& r : due) r.apply();
}

int GroundStation::submit(const dtmf::UplinkCommand& cmd) {
  dtmf::command_encode(cmd);  // validates
  std::lock_guard lock(mu_);
  const int id = static_cast<int>(s_.commands.size() + outbox_.size()) + 1;
  outbox_.push_back(cmd);
  outbox_ids_.push_back(id);
  return id;
}

std::vector<audio::AudioBuffer> GroundStation::step(std::int64_t now_ms) {
  std::lock_guard lock(mu_);
  s_.clock_ms = now_ms;
  release_due(now_ms);

  for (auto& c : s_.commands)
    if (c.status == CommandStatus::Pending && now_ms >= c.deadline_ms) {
      c.status = CommandStatus::TimedOut;
      emit("ack", ojson{{"id", c.id}, {"status", command_status_name(c.status)}}.dump());
      glog("command " + std::to_string(c.id) + " timed out");
      write_commands();
    }

  std::vector<audio::AudioBuffer> out;
  if (!outbox_.empty() && now_ms >= uplink_free_ms_) {
    const auto cmd = outbox_.front();
    const int id = outbox_ids_.front();
    outbox_.erase(outbox_.begin());
    outbox_ids_.erase(outbox_ids_.begin());

    const auto clean = gs_uplink(cmd);
    const auto dur_ms = static_cast<std::int64_t>(std::ceil(clean.duration() * 1000.0));
    CommandRecord rec;
    rec.id = id;
    rec.command = cmd;
    rec.symbols = dtmf::command_encode(cmd);
    rec.sent_ms = now_ms;
    rec.deadline_ms = now_ms + dur_ms + kCommandTimeoutMs;
    s_.commands.push_back(rec);
    uplink_free_ms_ = now_ms + dur_ms;
    out.push_back(audio::awgn_apply(clean, scenario_.snr_db, obc::uplink_noise_seed(scenario_.seed, ++uplinks_sent_)));
    glog("uplink " + rec.symbols + " (command " + std::to_string(id) + ")");
    write_commands();
  }
  return out;
}

void GroundStation::on_downlink(const obc::DownlinkSegment& seg) {
  const auto rx = audio::awgn_apply(seg.audio, scenario_.snr_db, obc::downlink_noise_seed(scenario_.seed, seg.index));

  std::vector<std::vector<std::uint8_t>> rows;
  auto decoded = gs_decode(rx, [&](int, std::span<const std::uint8_t> rgb) { rows.emplace_back(rgb.begin(), rgb.end()); });

  std::lock_guard lock(mu_);
  const int segment = seg.index;

  if (decoded.image) {
    const int id = pending_meta_ ? pending_meta_->id : static_cast<int>(s_.images.size()) + 1;
    pending_meta_.reset();
    s_.images.push_back({id, seg.start_ms, seg.end_ms, 0, false, decoded.image->report, decoded.image->image});
    const std::size_t slot = s_.images.size() - 1;
    const double first_line_ms = seg.start_ms + decoded.image->report.start_seconds * 1000.0 + sstv::robot36::kVisMs;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto at = std::min<std::int64_t>(
          seg.end_ms, static_cast<std::int64_t>(std::ceil(first_line_ms + static_cast<double>(r + 1) * sstv::robot36::kLineMs)));
      schedule(at, [this, slot, r, id, row = std::move(rows[r]), total = rows.size()] {
        s_.images[slot].lines_released = static_cast<int>(r) + 1;
        emit("image-progress", ojson{{"image_id", id}, {"line", r + 1}, {"total", total}, {"row", r}, {"row_rgb_base64", base64(row)}}.dump());
      });
    }
    schedule(seg.end_ms, [this, slot] {
      auto& img = s_.images[slot];
      img.complete = true;
      if (dir_) {
        ppm_write(img.image, *dir_ / "ground" / "images" / numbered(img.id, "ppm"));
        std::ofstream(*dir_ / "ground" / "images" / numbered(img.id, "json"), std::ios::binary) << image_json(img) << "\n";
      }
      glog("image " + std::to_string(img.id) + " decoded, " + std::to_string(img.report.lines_synced) + "/" +
           std::to_string(img.report.lines_total) + " lines synced");
    });
    return;
  }

  for (const auto& pf : decoded.frames)
    if (pf.frame.type == afsk::FrameType::ImageMeta) pending_meta_ = obc::ImageMeta::unpack(pf.frame.payload);

  schedule(seg.end_ms, [this, decoded = std::move(decoded), segment] {
    for (const auto& d : decoded.frame_diagnostics)
      if (d.kind == afsk::FrameDiagnostic::Kind::CrcMismatch) ++s_.crc_failures;
    for (const auto& msg : decoded.diagnostics) glog("segment " + std::to_string(segment) + ": " + msg);
    for (const auto& pf : decoded.frames) on_frame(pf.frame, segment);
  });
}

void GroundStation::on_frame(const afsk::TelemetryFrame& f, int segment) {
  FrameRecord rec{static_cast<std::int64_t>(s_.frames.size()) + 1, s_.clock_ms, segment, f};
  s_.frames.push_back(rec);
  const std::string fj = frame_json(rec);
  if (dir_) std::ofstream(*dir_ / "ground" / "frames.jsonl", std::ios::binary | std::ios::app) << fj << "\n";
  emit("telemetry", fj);

  if (f.type == afsk::FrameType::Housekeeping) {
    if (const auto h = obc::Housekeeping::unpack(f.payload)) {
      const bool changed = !s_.last_housekeeping || (s_.last_housekeeping->mode & 0x7F) != (h->mode & 0x7F);
      s_.last_housekeeping = h;
      s_.clock_offset_ms = static_cast<std::int64_t>(h->clock_ms) - s_.clock_ms;
      const auto m = obc::mode_from_number(h->mode & 0x7F);
      if (changed) emit("mode", ojson{{"mode", m ? obc::mode_name(*m) : "?"}, {"clock_ms", h->clock_ms}}.dump());
    }
  } else if (f.type == afsk::FrameType::Ack) {
    const auto a = obc::AckPayload::unpack(f.payload);
    if (!a) return;
    for (auto& c : s_.commands) {
      if (c.status != CommandStatus::Pending || static_cast<std::uint8_t>(c.command.opcode) != a->opcode) continue;
      c.status = a->status == obc::AckStatus::Ok ? CommandStatus::Acked : CommandStatus::Rejected;
      c.ack_ms = s_.clock_ms;
      c.ack_status = a->status;
      emit("ack", ojson{{"id", c.id}, {"status", command_status_name(c.status)}, {"ack_status", obc::ack_status_name(a->status)}}.dump());
      write_commands();
      return;
    }
    glog(std::string("ack for ") + (dtmf::opcode_from_number(a->opcode) ? dtmf::opcode_name(*dtmf::opcode_from_number(a->opcode)) : "?") +
         " matched no pending command");
  }
}

void GroundStation::write_commands() {
  if (!dir_) return;
  std::ofstream out(*dir_ / "ground" / "commands.jsonl", std::ios::binary | std::ios::trunc);
  for (const auto& c : s_.commands) out << command_json(c) << "\n";
}

void GroundStation::finish() {
  std::lock_guard lock(mu_);
  release_due(s_.clock_ms);
  if (!releases_.empty()) glog("pass ended with " + std::to_string(releases_.size()) + " reception(s) incomplete");
  releases_.clear();
  s_.finished = true;
  s_.live = false;
  write_commands();
  cv_.notify_all();
}

void GroundStation::set_live(bool live) {
  std::lock_guard lock(mu_);
  s_.live = live;
}

bool GroundStation::live() const {
  std::lock_guard lock(mu_);
  return s_.live;
}

GsSession GroundStation::snapshot() const {
  std::lock_guard lock(mu_);
  return s_;
}

std::vector<StreamEvent> GroundStation::events_since(std::int64_t seq) const {
  std::lock_guard lock(mu_);
  const auto from = static_cast<std::size_t>(std::clamp<std::int64_t>(seq, 0, static_cast<std::int64_t>(s_.events.size())));
  return {s_.events.begin() + static_cast<std::ptrdiff_t>(from), s_.events.end()};
}

std::optional<ImageRecord> GroundStation::image(int id) const {
  std::lock_guard lock(mu_);
  for (const auto& img : s_.images)
    if (img.id == id) return img;
  return std::nullopt;
}

std::int64_t GroundStation::last_seq() const {
  std::lock_guard lock(mu_);
  return static_cast<std::int64_t>(s_.events.size());
}

bool GroundStation::wait_for_events(std::int64_t seq, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mu_);
  return cv_.wait_for(lock, timeout, [&] { return static_cast<std::int64_t>(s_.events.size()) > seq || s_.finished; });
}

// ---------------------------------------------------------------------------

GsSession run_pass(const Scenario& scenario, std::optional<fs::path> session_dir, GroundStation* ground,
                   const PassOptions& opts) {
  scenario.validate();
  std::optional<GroundStation> local;
  if (!ground) ground = &local.emplace(scenario, session_dir);
  obc::Kernel kernel(scenario, session_dir);

  std::vector<ScheduledEvent> uplinks;
  for (const auto& e : scenario.events)
    if (e.kind == ScheduledEvent::Kind::Uplink) uplinks.push_back(e);
  std::stable_sort(uplinks.begin(), uplinks.end(), [](const auto& a, const auto& b) { return a.t_s < b.t_s; });

  ground->set_live(true);
  const auto wall_start = std::chrono::steady_clock::now();
  std::size_t next = 0;
  while (!kernel.done()) {
    if (opts.stop && opts.stop->load()) break;
    const auto now = kernel.clock_ms();
    while (next < uplinks.size() && std::llround(uplinks[next].t_s * 1000.0) <= now) ground->submit(uplinks[next++].command);
    for (const auto& audio : ground->step(now)) kernel.receive_uplink(audio, now);
    kernel.tick();
    for (const auto& seg : kernel.take_downlink()) ground->on_downlink(seg);
    if (opts.pace > 0.0) {
      const auto target = wall_start + std::chrono::microseconds(
                                           static_cast<std::int64_t>(static_cast<double>(kernel.clock_ms()) * 1000.0 / opts.pace));
      std::this_thread::sleep_until(target);
    }
  }
  ground->step(kernel.clock_ms());
  ground->finish();
  return ground->snapshot();
}

}  // namespace cubesim::gs
