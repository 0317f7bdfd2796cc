#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "cubesim/groundstation.hpp"
#include "cubesim/rng.hpp"
#include "cubesim/session.hpp"
#include "doctest.h"
#include "json.hpp"
#include "patterns.hpp"

using namespace cubesim;
using namespace cubesim::gs;
using dtmf::Opcode;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("cubesim_gs_" + name);
  std::filesystem::remove_all(p);
  return p;
}

std::size_t count_type(const GsSession& s, afsk::FrameType t) {
  return static_cast<std::size_t>(
      std::count_if(s.frames.begin(), s.frames.end(), [&](const FrameRecord& f) { return f.frame.type == t; }));
}

obc::DownlinkSegment afsk_segment(int index, std::int64_t start_ms, const afsk::TelemetryFrame& f) {
  obc::DownlinkSegment seg;
  seg.index = index;
  seg.start_ms = start_ms;
  seg.frame = f;
  seg.audio = afsk::afsk_modulate(afsk::frame_encode(f));
  seg.end_ms = start_ms + static_cast<std::int64_t>(std::ceil(seg.audio.duration() * 1000.0));
  return seg;
}

std::string symbols_of(const std::vector<dtmf::Mt8870Event>& evs) {
  std::string s;
  for (const auto& e : evs) s.push_back(e.symbol());
  return s;
}

}  // namespace

TEST_CASE("gs_decode classifies SSTV audio as one image") {
  const auto out = gs_decode(sstv::sstv_encode(patterns::color_bars()));
  REQUIRE(out.image);
  CHECK(out.frames.empty());
  CHECK(psnr(out.image->image, patterns::color_bars()) >= 25.0);
}

TEST_CASE("gs_decode classifies AFSK audio as frames") {
  Bytes stream;
  for (int i = 0; i < 3; ++i) {
    const auto w = afsk::frame_encode(afsk::FrameType::Housekeeping, Bytes(21, static_cast<std::uint8_t>(i)));
    stream.insert(stream.end(), w.begin(), w.end());
  }
  const auto out = gs_decode(afsk::afsk_modulate(stream));
  CHECK_FALSE(out.image);
  REQUIRE(out.frames.size() == 3);
  CHECK(out.frames[2].frame.payload == Bytes(21, 2));
}

TEST_CASE("gs_decode survives noise and empty input") {
  GaussianSource g(17);
  std::vector<double> x(48000 * 5);
  for (auto& v : x) v = std::clamp(0.3 * g.next(), -1.0, 1.0);
  const auto out = gs_decode(audio::AudioBuffer(x, 48000));
  CHECK(out.empty());
  CHECK_FALSE(out.diagnostics.empty());
  CHECK(gs_decode(audio::AudioBuffer(48000)).empty());
}

TEST_CASE("gs_decode resamples non-canonical input") {
  const auto wire = afsk::frame_encode(afsk::FrameType::Ack, Bytes{1, 0, 0, 1});
  const auto out = gs_decode(audio::resample_linear(afsk::afsk_modulate(wire), 44100));
  REQUIRE(out.frames.size() == 1);
}

TEST_CASE("gs_uplink produces the command's DTMF symbols with padding") {
  const auto ping = gs_uplink({Opcode::Ping, ""});
  CHECK(symbols_of(dtmf::dtmf_decode(ping)) == "*011#");
  CHECK(ping.duration() == doctest::Approx(5 * 0.160 + 0.600));
  CHECK(symbols_of(dtmf::dtmf_decode(gs_uplink({Opcode::SetMode, "2"}))) == "*0527#");
  CHECK_THROWS_AS(gs_uplink({Opcode::SetMode, ""}), std::invalid_argument);
}

TEST_CASE("commands time out 10 s after their uplink ends") {
  GroundStation g(Scenario{});
  const int id = g.submit({Opcode::Ping, ""});
  CHECK(id == 1);
  CHECK(g.step(0).size() == 1);
  CHECK(g.step(11399).empty());
  CHECK(g.snapshot().commands[0].status == CommandStatus::Pending);
  g.step(11400);
  CHECK(g.snapshot().commands[0].status == CommandStatus::TimedOut);
  CHECK_THROWS_AS(g.submit({Opcode::Capture, "9"}), std::invalid_argument);
}

TEST_CASE("queued uplinks are serialized") {
  GroundStation g(Scenario{});
  g.submit({Opcode::Ping, ""});
  g.submit({Opcode::Ping, "1"});
  CHECK(g.step(0).size() == 1);
  CHECK(g.step(1000).empty());
  CHECK(g.step(1400).size() == 1);
}

TEST_CASE("acks match the oldest pending command with that opcode") {
  GroundStation g(Scenario{});
  g.submit({Opcode::Ping, ""});
  g.step(0);
  g.submit({Opcode::Ping, "5"});
  g.step(2000);
  const obc::AckPayload ack{1, obc::AckStatus::Ok, 1, ""};
  const auto seg = afsk_segment(1, 3000, afsk::make_frame(afsk::FrameType::Ack, ack.pack()));
  g.on_downlink(seg);
  g.step(seg.end_ms - 1);
  CHECK(g.snapshot().frames.empty());  // not yet fully received
  g.step(seg.end_ms);
  const auto s = g.snapshot();
  REQUIRE(s.frames.size() == 1);
  CHECK(s.commands[0].status == CommandStatus::Acked);
  CHECK(s.commands[1].status == CommandStatus::Pending);
  const bool has_ack = std::any_of(s.events.begin(), s.events.end(), [](const StreamEvent& e) { return e.type == "ack"; });
  CHECK(has_ack);
}

TEST_CASE("stream events are strictly ordered and replayable") {
  GroundStation g(Scenario{});
  obc::Housekeeping h;
  h.mode = 1;
  for (int i = 0; i < 3; ++i) {
    h.clock_ms = 1000u * static_cast<unsigned>(i);
    const auto seg = afsk_segment(i + 1, 1000 * i, afsk::make_frame(afsk::FrameType::Housekeeping, h.pack()));
    g.on_downlink(seg);
    g.step(seg.end_ms);
  }
  const auto all = g.events_since(0);
  REQUIRE(all.size() >= 4);  // 3 telemetry + 1 mode
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i].seq == static_cast<std::int64_t>(i) + 1);
  const auto tail = g.events_since(2);
  REQUIRE(tail.size() == all.size() - 2);
  CHECK(tail.front().seq == 3);
  CHECK(g.last_seq() == static_cast<std::int64_t>(all.size()));
  const auto snap = g.snapshot();
  for (std::size_t i = 1; i < snap.frames.size(); ++i) CHECK(snap.frames[i].seq > snap.frames[i - 1].seq);
}

TEST_CASE("a pass with no uplink yields only periodic housekeeping") {
  for (double duration : {60.0, 130.0}) {
    Scenario s;
    s.duration_s = duration;
    const auto session = run_pass(s);
    const auto hk = count_type(session, afsk::FrameType::Housekeeping);
    CHECK(hk == static_cast<std::size_t>(std::floor((duration - s.boot_s) / 30.0)));
    CHECK(session.frames.size() == hk);
    CHECK(session.crc_failures == 0);
    CHECK(session.images.empty());
  }
}

TEST_CASE("100 frames at 30 dB arrive with zero CRC failures") {
  Scenario s;
  s.duration_s = 110.0;
  s.housekeeping_period_s = 1.0;
  const auto session = run_pass(s);
  CHECK(session.frames.size() >= 100);
  CHECK(session.crc_failures == 0);
}

TEST_CASE("run_pass writes a deterministic session") {
  auto s = reference_scenario();
  s.duration_s = 45.0;
  s.events.pop_back();  // no image downlink, keeps this quick
  const auto a = scratch("det_a"), b = scratch("det_b");
  const auto sa = run_pass(s, a);
  run_pass(s, b);
  CHECK(session_diff(a, b).empty());
  CHECK(std::filesystem::exists(a / "ground" / "frames.jsonl"));
  CHECK(std::filesystem::exists(a / "ground" / "events.jsonl"));
  CHECK(std::filesystem::exists(a / "ground" / "commands.jsonl"));
  REQUIRE(sa.commands.size() == 2);
  for (const auto& c : sa.commands) CHECK(c.status == CommandStatus::Acked);

  std::ifstream f(a / "ground" / "commands.jsonl");
  std::string line;
  int n = 0;
  while (std::getline(f, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j["status"] == "acked");
    ++n;
  }
  CHECK(n == 2);
}

TEST_CASE("session_diff reports changed and missing files") {
  const auto a = scratch("diff_a"), b = scratch("diff_b");
  std::filesystem::create_directories(a / "x");
  std::filesystem::create_directories(b / "x");
  std::ofstream(a / "x" / "same.txt") << "1";
  std::ofstream(b / "x" / "same.txt") << "1";
  std::ofstream(a / "x" / "changed.txt") << "1";
  std::ofstream(b / "x" / "changed.txt") << "2";
  std::ofstream(a / "only_a.txt") << "1";
  const auto d = session_diff(a, b);
  CHECK(d == std::vector<std::string>{"only_a.txt", "x/changed.txt"});
}

TEST_CASE("pacing keeps logical time on wall time") {
  Scenario s;
  s.duration_s = 2.0;
  PassOptions opts;
  opts.pace = 1.0;
  const auto t0 = std::chrono::steady_clock::now();
  run_pass(s, std::nullopt, nullptr, opts);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  // within one 10 ms tick of real time, plus scheduling slack
  CHECK(wall >= 2.0 - 0.010);
  CHECK(wall <= 2.0 + 0.050);
}

TEST_CASE("a stop flag ends the pass early") {
  Scenario s;
  s.duration_s = 600.0;
  std::atomic<bool> stop{true};
  PassOptions opts;
  opts.stop = &stop;
  const auto session = run_pass(s, std::nullopt, nullptr, opts);
  CHECK(session.finished);
  CHECK(session.clock_ms == 0);
}

TEST_CASE("state json carries mode, clock and housekeeping") {
  Scenario s;
  s.duration_s = 40.0;
  const auto session = run_pass(s);
  const auto j = nlohmann::json::parse(state_json(session));
  CHECK(j["mode"] == "SAFE");
  CHECK(j["clock_ms"] == 40000);
  CHECK(j["housekeeping"]["battery_mv"].get<int>() > 3000);
  CHECK(j["finished"] == true);
}
