#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "cubesim/kernel.hpp"
#include "cubesim/obc.hpp"
#include "cubesim/scenario.hpp"
#include "doctest.h"
#include "transition_oracle.hpp"
#include "json.hpp"

using namespace cubesim;
using namespace cubesim::obc;
using dtmf::Opcode;
using namespace transition_oracle;

namespace {

std::vector<LogEntry> read_log(const std::filesystem::path& p) {
  std::vector<LogEntry> out;
  std::ifstream f(p);
  for (std::string line; std::getline(f, line);) {
    const auto j = nlohmann::json::parse(line);
    out.push_back({j["clock_ms"].get<std::int64_t>(), j["kind"], j["detail"]});
  }
  return out;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

Scenario quiet(double duration) {
  Scenario s;
  s.duration_s = duration;
  return s;
}

ScheduledEvent uplink(double t, Opcode op, std::string args = {}) {
  ScheduledEvent e;
  e.t_s = t;
  e.command = {op, std::move(args)};
  return e;
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("cubesim_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

std::vector<std::string> log_details(const std::vector<LogEntry>& log, const std::string& kind) {
  std::vector<std::string> out;
  for (const auto& e : log)
    if (e.kind == kind) out.push_back(e.detail);
  return out;
}

}  // namespace

TEST_CASE("transition table matches the oracle on every (mode, event) pair") {
  std::size_t pairs = 0;
  for (int images : {0, 2}) {
    const TransitionParams p{10.0, 2.0, images};
    for (Mode m : kAllModes) {
      for (const auto& [op, args] : command_cases()) {
        const Event ev{1000, GroundCommand{{op, args}}};
        const auto want = oracle_command(m, op, args, images);
        REQUIRE_MESSAGE(observed(compute_state(m, ev, p)) == want,
                        mode_name(m) << " " << dtmf::opcode_name(op) << " '" << args << "' images=" << images);
        ++pairs;
      }
      for (const auto& t : other_cases()) {
        const Event ev{1000, t};
        REQUIRE_MESSAGE(observed(compute_state(m, ev, p)) == oracle_other(m, t, p), mode_name(m) << " " << describe(t));
        ++pairs;
      }
    }
  }
  CHECK(pairs == 2 * 6 * (command_cases().size() + other_cases().size()));
}

TEST_CASE("transition examples") {
  const TransitionParams p;
  auto t = compute_state(Mode::Nominal, {0, GroundCommand{{Opcode::Capture, ""}}}, p);
  CHECK(t.next == Mode::Payload);
  CHECK(std::any_of(t.actions.begin(), t.actions.end(), [](auto& a) { return a.kind == ActionKind::StartCapture; }));

  t = compute_state(Mode::Nominal, {0, SensorThreshold{kGyroMagnitude, 12.0}}, p);
  CHECK(t.next == Mode::Adcs);
  REQUIRE(t.actions.size() == 1);
  CHECK(t.actions[0].kind == ActionKind::StartDetumble);

  t = compute_state(Mode::Safe, {0, GroundCommand{{Opcode::Capture, ""}}}, p);
  CHECK(t.next == Mode::Safe);
  REQUIRE(t.actions.size() == 1);
  CHECK(t.actions[0].kind == ActionKind::Ack);
  CHECK(t.actions[0].status == AckStatus::Rejected);
}

TEST_CASE("SAFE accepts only PING, SET_MODE, DOWNLINK_TELEMETRY and REBOOT") {
  const TransitionParams p{10.0, 2.0, 3};
  for (const auto& [op, args] : command_cases()) {
    const auto t = compute_state(Mode::Safe, {0, GroundCommand{{op, args}}}, p);
    const bool allowed = op == Opcode::Ping || op == Opcode::SetMode || op == Opcode::DownlinkTelemetry || op == Opcode::Reboot;
    if (!allowed) {
      CHECK(t.next == Mode::Safe);
      CHECK(t.actions[0].status == AckStatus::Rejected);
    }
    CHECK(t.next != Mode::Payload);
    CHECK(t.next != Mode::Downlink);
  }
}

TEST_CASE("detumble examples") {
  const Vec3 g{5, 5, 5}, b{10, 20, 30};
  CHECK(detumble_step(g, b, b, 0.1, 1.0, 10.0) == Vec3{0, 0, 0});

  // +1 uT per 100 ms on x is 10 uT/s; k * 10 = m_max saturates.
  const Vec3 b2{11, 20, 30};
  const auto up = detumble_step(g, b2, b, 0.1, 1.0, 10.0);
  CHECK(std::abs(up[0]) == doctest::Approx(100.0));
  CHECK(up[1] == 0.0);
  CHECK(up[2] == 0.0);
  const auto down = detumble_step(g, b, b2, 0.1, 1.0, 10.0);
  CHECK(down[0] == doctest::Approx(-up[0]));

  // Half of saturation.
  const auto half = detumble_step(g, Vec3{10.5, 20, 30}, b, 0.1, 1.0, 10.0);
  CHECK(std::abs(half[0]) == doctest::Approx(50.0));

  CHECK_THROWS_AS(detumble_step(g, b, b, 0.0, 1.0, 10.0), std::invalid_argument);
  CHECK_THROWS_AS(detumble_step(g, b, b, 0.1, 0.0, 10.0), std::invalid_argument);

  const auto reqs = pwm_requests(down);
  REQUIRE(reqs.size() == 3);
  CHECK(reqs[0].cmd == static_cast<std::uint8_t>(bus::Command::SetPwm));
  CHECK(reqs[0].arg0 == (down[0] < 0 ? 0x80 : 0x00));
  CHECK(reqs[0].arg1 == 100);
  CHECK(reqs[1].arg1 == 0);
}

TEST_CASE("B-dot controller holds the previous field") {
  BdotController c(1.0, 10.0);
  CHECK(c.step({}, {1, 2, 3}, 1.0) == Vec3{0, 0, 0});
  const auto d = c.step({}, {2, 2, 3}, 1.0);
  CHECK(std::abs(d[0]) == doctest::Approx(10.0));
  c.reset();
  CHECK(c.step({}, {9, 9, 9}, 1.0) == Vec3{0, 0, 0});
}

TEST_CASE("housekeeping packs 21 big-endian bytes") {
  Housekeeping h;
  h.clock_ms = 60000;
  h.mode = 2;
  h.battery_mv = 3700;
  h.temp_c_x10 = -55;
  h.gyro = {100, -200, 300};
  h.mag = {180, -60, 380};
  const Bytes want{0x00, 0x00, 0xEA, 0x60, 0x02, 0x0E, 0x74, 0xFF, 0xC9, 0x00, 0x64,
                   0xFF, 0x38, 0x01, 0x2C, 0x00, 0xB4, 0xFF, 0xC4, 0x01, 0x7C};
  CHECK(h.pack() == want);
  CHECK(Housekeeping::unpack(want) == h);
  CHECK_FALSE(Housekeeping::unpack(Bytes(20, 0)));

  const auto wire = afsk::frame_encode(afsk::FrameType::Housekeeping, h.pack());
  const auto parsed = afsk::frame_parse(wire);
  REQUIRE(parsed.frames.size() == 1);
  CHECK(Housekeeping::unpack(parsed.frames[0].frame.payload) == h);
}

TEST_CASE("housekeeping without sensor data flags the mode byte") {
  SatelliteState s;
  s.mode = Mode::Safe;
  s.clock_ms = 35000;
  const auto h = housekeeping_of(s);
  CHECK(h.mode == (0x80 | 1));
  CHECK_FALSE(h.has_data());
  CHECK(h.battery_mv == 0);
  CHECK(h.temp_c_x10 == 0);
  const auto f = make_housekeeping(s);
  CHECK(f.type == afsk::FrameType::Housekeeping);
  CHECK(f.payload.size() == 21);
}

TEST_CASE("housekeeping takes values from the last READ_ALL") {
  SatelliteState s;
  s.mode = Mode::Nominal;
  s.clock_ms = 60000;
  SensorSample sample;
  sample.counts[static_cast<std::size_t>(bus::Sensor::Battery)] = 3700;
  sample.counts[static_cast<std::size_t>(bus::Sensor::GyroZ)] = static_cast<std::uint16_t>(-42);
  s.last_sample = sample;
  const auto h = housekeeping_of(s);
  CHECK(h.has_data());
  CHECK(h.mode == 2);
  CHECK(h.battery_mv == 3700);
  CHECK(h.gyro[2] == -42);
}

TEST_CASE("ack and image-meta payloads") {
  const AckPayload a{5, AckStatus::BadArg, 7, "9"};
  const Bytes want{0x05, 0x02, 0x00, 0x07, '9'};
  CHECK(a.pack() == want);
  const auto back = AckPayload::unpack(want);
  REQUIRE(back);
  CHECK(back->args == "9");
  CHECK(back->status == AckStatus::BadArg);

  const ImageMeta m{3, 320, 240, 23060};
  CHECK(m.pack().size() == 10);
  const auto mb = ImageMeta::unpack(m.pack());
  REQUIRE(mb);
  CHECK(mb->id == 3);
  CHECK(mb->capture_ms == 23060);
}

TEST_CASE("event log frame keeps the most recent entries that fit") {
  std::vector<LogEntry> log;
  for (int i = 0; i < 50; ++i) log.push_back({i * 1000, "mode", "entry number " + std::to_string(i)});
  const auto payload = pack_event_log(log);
  CHECK(payload.size() <= 255);
  const auto back = unpack_event_log(payload);
  REQUIRE_FALSE(back.empty());
  CHECK(back.back() == log.back());
  const auto first = static_cast<std::size_t>(log.size() - back.size());
  for (std::size_t i = 0; i < back.size(); ++i) CHECK(back[i] == log[first + i]);
}

TEST_CASE("capture with no noise or blur matches the golden scene") {
  const auto img = capture_image(7, {0.0, 0}, 42);
  CHECK(img == ppm_read(std::filesystem::path(CUBESIM_GOLDEN_DIR) / "scene_007.ppm"));
  CHECK(img == render_test_scene(7));
}

TEST_CASE("test scene layout") {
  const auto img = render_test_scene(0x8001);
  CHECK(img.at(0, 0) == Rgb{255, 255, 255});   // first bar white
  CHECK(img.at(319, 159) == Rgb{0, 0, 0});     // last bar black
  CHECK(img.at(45, 80) == Rgb{255, 255, 0});   // second bar yellow
  CHECK(img.at(0, 200) == Rgb{0, 0, 0});       // gradient starts black
  CHECK(img.at(319, 200) == Rgb{255, 255, 255});
  CHECK(img.at(5, 230) == Rgb{255, 255, 255});    // id MSB set
  CHECK(img.at(25, 230) == Rgb{0, 0, 0});
  CHECK(img.at(315, 230) == Rgb{255, 255, 255});  // id LSB set
}

TEST_CASE("captures are deterministic and distinct per id") {
  const CameraParams q{2.0, 1};
  CHECK(capture_image(1, q, 5) == capture_image(1, q, 5));
  CHECK(capture_image(1, q, 5) != capture_image(2, q, 5));
  CHECK(capture_image(1, q, 5) != capture_image(1, q, 6));
  CHECK(psnr(capture_image(1, q, 5), render_test_scene(1)) > 25.0);
}

TEST_CASE("empty scenario over 10 s logs exactly BOOT then SAFE") {
  const auto dir = scratch("empty");
  run_mission(quiet(10.0), dir);
  const auto log = read_log(dir / "log.jsonl");
  REQUIRE(log.size() == 2);
  CHECK(log[0] == LogEntry{0, "mode", "BOOT"});
  CHECK(log[1] == LogEntry{5000, "mode", "SAFE"});
  CHECK(std::filesystem::exists(dir / "scenario.json"));
}

TEST_CASE("CAPTURE uplink enters PAYLOAD, stores an image and queues an ack") {
  auto s = quiet(40.0);
  s.events = {uplink(10, Opcode::SetMode, "2"), uplink(20, Opcode::Capture)};
  const auto dir = scratch("capture");
  const auto rec = run_mission(s, dir);
  const auto modes = log_details(rec.state.log, "mode");
  CHECK(std::find(modes.begin(), modes.end(), "PAYLOAD") != modes.end());
  REQUIRE(rec.state.images.size() == 1);
  CHECK(rec.state.images[0].id == 1);
  CHECK(std::filesystem::exists(dir / "images" / "001.ppm"));
  CHECK(ppm_read(dir / "images" / "001.ppm") == rec.state.images[0].raster);

  int acks = 0;
  for (const auto& seg : rec.downlink)
    if (seg.frame && seg.frame->type == afsk::FrameType::Ack) {
      const auto a = AckPayload::unpack(seg.frame->payload);
      REQUIRE(a);
      CHECK(a->status == AckStatus::Ok);
      ++acks;
    }
  CHECK(acks == 2);

  // Capture occupies exactly 2000 ms of logical time.
  std::int64_t start = -1, done = -1;
  for (const auto& e : rec.state.log) {
    if (e.detail == "capture start") start = e.clock_ms;
    if (e.detail.rfind("capture done", 0) == 0) done = e.clock_ms;
  }
  REQUIRE(start >= 20000);
  CHECK(done - start == 2000);
}

TEST_CASE("two captures get distinct ids on disk") {
  auto s = quiet(40.0);
  s.events = {uplink(6, Opcode::SetMode, "2"), uplink(10, Opcode::Capture), uplink(20, Opcode::Capture)};
  const auto dir = scratch("two");
  const auto rec = run_mission(s, dir);
  REQUIRE(rec.state.images.size() == 2);
  CHECK(rec.state.images[0].id == 1);
  CHECK(rec.state.images[1].id == 2);
  CHECK(rec.state.images[0].raster != rec.state.images[1].raster);
  CHECK(std::filesystem::exists(dir / "images" / "002.ppm"));
}

TEST_CASE("same scenario twice gives byte-identical sessions") {
  auto s = quiet(50.0);
  s.events = {uplink(6, Opcode::SetMode, "2"), uplink(12, Opcode::Ping, "77"), uplink(20, Opcode::Capture)};
  const auto a = scratch("det_a"), b = scratch("det_b");
  run_mission(s, a);
  run_mission(s, b);
  std::size_t files = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), a);
    REQUIRE(std::filesystem::exists(b / rel));
    CHECK_MESSAGE(slurp(e.path()) == slurp(b / rel), rel.string());
    ++files;
  }
  CHECK(files >= 8);
}

TEST_CASE("log is ordered and SAFE mode never runs payload or downlink work") {
  auto s = quiet(90.0);
  s.events = {uplink(6, Opcode::Capture), uplink(10, Opcode::DownlinkImage), uplink(14, Opcode::SetMode, "2"),
              uplink(20, Opcode::Capture), uplink(30, Opcode::SetMode, "1"), uplink(36, Opcode::DownlinkImage)};
  const auto rec = run_mission(s);
  std::string mode = "BOOT";
  std::int64_t last = 0;
  for (const auto& e : rec.state.log) {
    CHECK(e.clock_ms >= last);
    last = e.clock_ms;
    if (e.kind == "mode") mode = e.detail;
    if (mode == "SAFE") {
      CHECK(e.detail.find("capture start") == std::string::npos);
      CHECK(e.detail.find("sstv") == std::string::npos);
      CHECK(e.detail.find("downlink start") == std::string::npos);
    }
  }
  CHECK(rec.state.images.size() == 1);
}

TEST_CASE("every command gets exactly one ack within 5 s when the transmitter is free") {
  auto s = quiet(60.0);
  s.events = {uplink(2, Opcode::Ping), uplink(8, Opcode::Capture), uplink(12, Opcode::SetMode, "2"),
              uplink(18, Opcode::DownlinkTelemetry), uplink(24, Opcode::SetMode, "7"), uplink(30, Opcode::Capture),
              uplink(40, Opcode::Ping, "4242")};
  const auto rec = run_mission(s);
  std::vector<std::int64_t> received;
  for (const auto& e : rec.state.log)
    if (e.kind == "command") received.push_back(e.clock_ms);
  std::vector<std::pair<std::int64_t, AckPayload>> acks;
  for (const auto& seg : rec.downlink)
    if (seg.frame && seg.frame->type == afsk::FrameType::Ack) acks.emplace_back(seg.end_ms, *AckPayload::unpack(seg.frame->payload));
  REQUIRE(received.size() == s.events.size());
  REQUIRE(acks.size() == s.events.size());
  for (std::size_t i = 0; i < acks.size(); ++i) {
    CHECK(acks[i].second.opcode == static_cast<std::uint8_t>(s.events[i].command.opcode));
    CHECK(acks[i].second.counter == i + 1);
    CHECK(acks[i].first - received[i] <= 5000);
  }
  CHECK(acks[0].second.status == AckStatus::Rejected);  // PING during BOOT
  CHECK(acks[1].second.status == AckStatus::Rejected);  // CAPTURE in SAFE
  CHECK(acks[4].second.status == AckStatus::BadArg);
  CHECK(acks[6].second.args == "4242");
}

TEST_CASE("REBOOT returns to BOOT and then SAFE after the boot delay") {
  auto s = quiet(30.0);
  s.events = {uplink(8, Opcode::SetMode, "2"), uplink(14, Opcode::Reboot)};
  const auto rec = run_mission(s);
  const auto modes = log_details(rec.state.log, "mode");
  CHECK(modes == std::vector<std::string>{"BOOT", "SAFE", "NOMINAL", "BOOT", "SAFE"});
  std::int64_t reboot = 0, safe = 0;
  for (const auto& e : rec.state.log)
    if (e.kind == "mode") {
      if (e.detail == "BOOT") reboot = e.clock_ms;
      if (e.detail == "SAFE") safe = e.clock_ms;
    }
  CHECK(safe - reboot == 5000);
}

TEST_CASE("high gyro rate enters ADCS and detumbling brings it back to NOMINAL") {
  auto s = quiet(120.0);
  s.sensors[0].bias = 15.0;
  s.coupling_gain = 2.0;
  s.events = {uplink(6, Opcode::SetMode, "2")};
  const auto rec = run_mission(s);
  const auto modes = log_details(rec.state.log, "mode");
  REQUIRE(modes.size() >= 5);
  CHECK(modes[2] == "NOMINAL");
  CHECK(modes[3] == "ADCS");
  CHECK(modes[4] == "NOMINAL");
  REQUIRE(rec.state.last_sample);
  CHECK(rec.state.last_sample->gyro_magnitude() < s.omega_low);
}

TEST_CASE("GPS imaging region triggers an autonomous capture in NOMINAL") {
  auto s = quiet(30.0);
  ScheduledEvent gps;
  gps.t_s = 15.0;
  gps.kind = ScheduledEvent::Kind::GpsRegion;
  gps.region = "imaging";
  s.events = {uplink(6, Opcode::SetMode, "2"), gps};
  const auto rec = run_mission(s);
  CHECK(rec.state.images.size() == 1);
  CHECK(rec.state.images[0].capture_ms == 15000);  // capture start
}

TEST_CASE("housekeeping frames carry nondecreasing clocks") {
  auto s = quiet(100.0);
  s.housekeeping_period_s = 10.0;
  const auto rec = run_mission(s);
  std::int64_t last = -1;
  int n = 0;
  for (const auto& seg : rec.downlink)
    if (seg.frame && seg.frame->type == afsk::FrameType::Housekeeping) {
      const auto h = Housekeeping::unpack(seg.frame->payload);
      REQUIRE(h);
      CHECK(static_cast<std::int64_t>(h->clock_ms) >= last);
      CHECK(h->has_data());
      last = h->clock_ms;
      ++n;
    }
  CHECK(n == 9);
}

TEST_CASE("scenario JSON round trip and validation") {
  auto s = reference_scenario();
  s.coupling_gain = 0.25;
  s.sensors[3].sigma = 0.7;
  const auto back = Scenario::from_json(s.to_json());
  CHECK(back.to_json() == s.to_json());
  CHECK(back.events.size() == 3);

  CHECK_THROWS_AS(Scenario::from_json(R"({"tick_ms": 0})"), ScenarioError);
  CHECK_THROWS_AS(Scenario::from_json(R"({"omega_high": 1, "omega_low": 5})"), ScenarioError);
  CHECK_THROWS_AS(Scenario::from_json(R"({"bogus": 1})"), ScenarioError);
  CHECK_THROWS_AS(Scenario::from_json(R"({"events": [{"t_s": 1, "uplink": {"opcode": "05"}}]})"), ScenarioError);
  try {
    Scenario::from_json(R"({"tick_ms": -1, "snr_db": "x"})");
    FAIL("expected ScenarioError");
  } catch (const ScenarioError& e) {
    CHECK(e.problems().size() == 2);
  }
}
