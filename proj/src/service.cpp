#include <atomic>
#include <stdexcept>
#include <thread>

#include "cubesim/service.hpp"
#include "httplib.h"
#include "json.hpp"

namespace cubesim::gs {

using ojson = nlohmann::ordered_json;

namespace {

std::int64_t since_param(const httplib::Request& req) {
  std::string v;
  if (req.has_param("since")) v = req.get_param_value("since");
  else if (req.has_header("Last-Event-ID")) v = req.get_header_value("Last-Event-ID");
  if (v.empty()) return 0;
  try {
    return std::max<std::int64_t>(0, std::stoll(v));
  } catch (const std::exception&) {
    return 0;
  }
}

void json_reply(httplib::Response& res, int status, const std::string& body) {
  res.status = status;
  res.set_content(body, "application/json; charset=utf-8");
}

std::string error_body(const std::string& msg) { return ojson{{"error", msg}}.dump(); }

}  // namespace

struct Service::Impl {
  explicit Impl(GroundStation& g) : ground(g) {}

  GroundStation& ground;
  httplib::Server server;
  std::thread thread;
  std::atomic<bool> stopping{false};

  void routes();
};

void Service::Impl::routes() {
  server.Get("/api/state", [this](const httplib::Request&, httplib::Response& res) {
    json_reply(res, 200, ground.with_session([](const GsSession& s) { return state_json(s); }));
  });

  server.Get("/api/telemetry", [this](const httplib::Request& req, httplib::Response& res) {
    const auto since = since_param(req);
    std::string body = "[";
    ground.with_session([&](const GsSession& s) {
      bool first = true;
      for (const auto& f : s.frames) {
        if (f.seq <= since) continue;
        if (!first) body += ",";
        body += frame_json(f);
        first = false;
      }
      return 0;
    });
    json_reply(res, 200, body + "]");
  });

  server.Get("/api/commands", [this](const httplib::Request&, httplib::Response& res) {
    std::string body = "[";
    ground.with_session([&](const GsSession& s) {
      for (std::size_t i = 0; i < s.commands.size(); ++i) body += (i ? "," : "") + command_json(s.commands[i]);
      return 0;
    });
    json_reply(res, 200, body + "]");
  });

  server.Get("/api/images", [this](const httplib::Request&, httplib::Response& res) {
    std::string body = "[";
    ground.with_session([&](const GsSession& s) {
      for (std::size_t i = 0; i < s.images.size(); ++i) body += (i ? "," : "") + image_json(s.images[i]);
      return 0;
    });
    json_reply(res, 200, body + "]");
  });

  server.Get(R"(/api/images/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
    int id = 0;
    try {
      id = std::stoi(req.matches[1]);
    } catch (const std::exception&) {
      json_reply(res, 404, error_body("no such image"));
      return;
    }
    const auto img = ground.image(id);
    if (!img || !img->complete) {
      json_reply(res, 404, error_body("no such image"));
      return;
    }
    const auto png = png_encode(img->image);
    res.set_content(std::string(png.begin(), png.end()), "image/png");
  });

  server.Post("/api/command", [this](const httplib::Request& req, httplib::Response& res) {
    if (!ground.live()) {
      json_reply(res, 409, error_body("no live pass"));
      return;
    }
    ojson body;
    try {
      body = ojson::parse(req.body);
    } catch (const std::exception&) {
      json_reply(res, 400, error_body("body must be JSON"));
      return;
    }
    if (!body.is_object() || !body.contains("opcode") || !body["opcode"].is_string()) {
      json_reply(res, 400, error_body("'opcode' string required"));
      return;
    }
    const std::string args = body.contains("args") && body["args"].is_string() ? body["args"].get<std::string>() : "";
    const auto op = dtmf::opcode_from_string(body["opcode"].get<std::string>());
    if (!op) {
      json_reply(res, 400, error_body("unknown opcode"));
      return;
    }
    try {
      const int id = ground.submit({*op, args});
      json_reply(res, 202, ojson{{"id", id}, {"symbols", dtmf::command_encode({*op, args})}}.dump());
    } catch (const std::invalid_argument& e) {
      json_reply(res, 400, error_body(e.what()));
    }
  });

  server.Get("/api/stream", [this](const httplib::Request& req, httplib::Response& res) {
    const auto since = since_param(req);
    const bool follow = !(req.has_param("follow") && req.get_param_value("follow") == "0");
    auto cursor = std::make_shared<std::int64_t>(since);
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider("text/event-stream", [this, cursor, follow](std::size_t, httplib::DataSink& sink) {
      for (const auto& e : ground.events_since(*cursor)) {
        std::string msg = "id: " + std::to_string(e.seq) + "\nevent: " + e.type + "\ndata: " + e.data + "\n\n";
        if (!sink.write(msg.data(), msg.size())) return false;
        *cursor = e.seq;
      }
      const bool finished = ground.with_session([](const GsSession& s) { return s.finished; });
      if (!follow || stopping.load() || (finished && *cursor >= ground.last_seq())) {
        sink.done();
        return true;
      }
      ground.wait_for_events(*cursor, std::chrono::milliseconds(250));
      return true;
    });
  });
}

Service::Service(GroundStation& ground) : impl_(std::make_unique<Impl>(ground)) { impl_->routes(); }

Service::~Service() { stop(); }

int Service::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void Service::stop() {
  if (!impl_) return;
  impl_->stopping = true;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::pair<std::string, int> parse_bind_address(const std::string& addr) {
  std::string host = "127.0.0.1";
  std::string port = addr;
  if (const auto colon = addr.rfind(':'); colon != std::string::npos) {
    host = addr.substr(0, colon);
    port = addr.substr(colon + 1);
    if (host.empty()) host = "127.0.0.1";
  }
  try {
    std::size_t used = 0;
    const int p = std::stoi(port, &used);
    if (used != port.size() || p < 0 || p > 65535) throw std::invalid_argument("port");
    return {host, p};
  } catch (const std::exception&) {
    throw std::invalid_argument("bad bind address '" + addr + "', expected HOST:PORT");
  }
}

}  // namespace cubesim::gs
