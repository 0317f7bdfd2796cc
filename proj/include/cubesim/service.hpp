#pragma once

#include <memory>
#include <string>

#include "cubesim/groundstation.hpp"

namespace cubesim::gs {

/// Operator HTTP API over a ground station:
///
///   GET  /api/state              mode, clock and last housekeeping
///   GET  /api/telemetry?since=N  decoded frames with seq > N
///   GET  /api/stream?since=N     server-sent events (telemetry, mode, image-progress, ack, log)
///   POST /api/command            {"opcode": "01", "args": ""} -> 202 {"id": n}
///   GET  /api/images             decoded image list
///   GET  /api/images/{id}        PNG
///   GET  /api/commands           command history
///
/// Commands only schedule uplink audio; they are rejected with 409 when no pass is live.
class Service {
 public:
  explicit Service(GroundStation& ground);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds and serves on a background thread; returns the bound port (port 0 picks one).
  /// Throws std::runtime_error when binding fails.
  int start(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Splits "host:port"; a bare port binds 127.0.0.1. Throws std::invalid_argument.
std::pair<std::string, int> parse_bind_address(const std::string& addr);

}  // namespace cubesim::gs
