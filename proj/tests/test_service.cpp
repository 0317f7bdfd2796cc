#include <map>
#include <sstream>
#include <thread>

#include "cubesim/service.hpp"
#include "doctest.h"
#include "httplib.h"
#include "json.hpp"

using namespace cubesim;
using namespace cubesim::gs;
using nlohmann::json;

namespace {

struct SseEvent {
  std::int64_t id = 0;
  std::string type;
  json data;
};

std::vector<SseEvent> parse_sse(const std::string& body) {
  std::vector<SseEvent> out;
  std::istringstream in(body);
  SseEvent cur;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) {
      if (!cur.type.empty()) out.push_back(cur);
      cur = {};
    } else if (line.rfind("id: ", 0) == 0) {
      cur.id = std::stoll(line.substr(4));
    } else if (line.rfind("event: ", 0) == 0) {
      cur.type = line.substr(7);
    } else if (line.rfind("data: ", 0) == 0) {
      cur.data = json::parse(line.substr(6));
    }
  }
  return out;
}

}  // namespace

TEST_CASE("bind address parsing") {
  CHECK(parse_bind_address("8080") == std::pair<std::string, int>{"127.0.0.1", 8080});
  CHECK(parse_bind_address("0.0.0.0:9000") == std::pair<std::string, int>{"0.0.0.0", 9000});
  CHECK(parse_bind_address(":0") == std::pair<std::string, int>{"127.0.0.1", 0});
  CHECK_THROWS_AS(parse_bind_address("host:port"), std::invalid_argument);
  CHECK_THROWS_AS(parse_bind_address("1:70000"), std::invalid_argument);
}

TEST_CASE("service API over a live pass") {
  auto scenario = reference_scenario();
  scenario.duration_s = 82.0;
  GroundStation ground(scenario);
  Service service(ground);
  const int port = service.start("127.0.0.1", 0);
  REQUIRE(port > 0);
  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(30, 0);

  // No pass yet: commands are refused.
  auto r = cli.Post("/api/command", R"({"opcode":"01","args":""})", "application/json");
  REQUIRE(r);
  CHECK(r->status == 409);

  PassOptions opts;
  opts.pace = 40.0;
  std::thread pass([&] { run_pass(scenario, std::nullopt, &ground, opts); });

  // Wait until the satellite is out of BOOT.
  for (int i = 0; i < 200 && ground.snapshot().clock_ms < 6000; ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));

  r = cli.Get("/api/state");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(r->get_header_value("Content-Type").find("application/json") == 0);
  auto state = json::parse(r->body);
  CHECK(state["live"] == true);
  CHECK(state["clock_ms"].get<std::int64_t>() >= 6000);
  CHECK(state.contains("mode"));
  CHECK(state.contains("housekeeping"));

  r = cli.Post("/api/command", "not json", "application/json");
  REQUIRE(r);
  CHECK(r->status == 400);
  r = cli.Post("/api/command", R"({"opcode":"09"})", "application/json");
  REQUIRE(r);
  CHECK(r->status == 400);
  r = cli.Post("/api/command", R"({"opcode":"SET_MODE","args":""})", "application/json");
  REQUIRE(r);
  CHECK(r->status == 400);

  r = cli.Post("/api/command", R"({"opcode":"01","args":"31"})", "application/json");
  REQUIRE(r);
  CHECK(r->status == 202);
  const int ping_id = json::parse(r->body)["id"];
  CHECK(json::parse(r->body)["symbols"] == "*01315#");

  // Follow the stream until the pass finishes.
  r = cli.Get("/api/stream?since=0");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(r->get_header_value("Content-Type").find("text/event-stream") == 0);
  pass.join();
  const auto events = parse_sse(r->body);
  REQUIRE_FALSE(events.empty());
  std::map<std::string, int> by_type;
  for (std::size_t i = 0; i < events.size(); ++i) {
    CHECK(events[i].id == static_cast<std::int64_t>(i) + 1);
    ++by_type[events[i].type];
  }
  CHECK(by_type["telemetry"] >= 5);
  CHECK(by_type["mode"] >= 1);
  CHECK(by_type["image-progress"] == 240);
  CHECK(by_type["log"] >= 1);
  bool ping_acked = false;
  for (const auto& e : events)
    if (e.type == "ack" && e.data["id"] == ping_id) ping_acked = e.data["status"] == "acked";
  CHECK(ping_acked);
  for (const auto& e : events)
    if (e.type == "image-progress") {
      CHECK(e.data["total"] == 240);
      CHECK(e.data["row_rgb_base64"].get<std::string>().size() == 1280);
    }

  // Replay from a cursor, by query and by header.
  r = cli.Get("/api/stream?since=10&follow=0");
  REQUIRE(r);
  auto replay = parse_sse(r->body);
  REQUIRE(replay.size() == events.size() - 10);
  CHECK(replay.front().id == 11);
  r = cli.Get("/api/stream?follow=0", httplib::Headers{{"Last-Event-ID", "20"}});
  REQUIRE(r);
  CHECK(parse_sse(r->body).front().id == 21);

  r = cli.Get("/api/telemetry?since=2");
  REQUIRE(r);
  const auto frames = json::parse(r->body);
  REQUIRE(frames.is_array());
  REQUIRE_FALSE(frames.empty());
  CHECK(frames[0]["seq"] == 3);
  for (const auto& f : frames) {
    CHECK(f.contains("hex"));
    CHECK(f.contains("fields"));
  }

  r = cli.Get("/api/commands");
  REQUIRE(r);
  const auto commands = json::parse(r->body);
  REQUIRE(commands.size() == 4);
  for (const auto& c : commands) CHECK(c["status"] == "acked");

  r = cli.Get("/api/images");
  REQUIRE(r);
  const auto images = json::parse(r->body);
  REQUIRE(images.size() == 1);
  CHECK(images[0]["complete"] == true);
  const int image_id = images[0]["id"];

  r = cli.Get("/api/images/" + std::to_string(image_id));
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(r->get_header_value("Content-Type") == "image/png");
  REQUIRE(r->body.size() > 8);
  CHECK(r->body.substr(0, 8) == std::string("\x89PNG\r\n\x1a\n", 8));

  r = cli.Get("/api/images/99");
  REQUIRE(r);
  CHECK(r->status == 404);

  // The pass is over.
  r = cli.Post("/api/command", R"({"opcode":"01"})", "application/json");
  REQUIRE(r);
  CHECK(r->status == 409);
  service.stop();
}
