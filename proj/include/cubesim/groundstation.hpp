#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "cubesim/afsk.hpp"
#include "cubesim/audio.hpp"
#include "cubesim/dtmf.hpp"
#include "cubesim/kernel.hpp"
#include "cubesim/obc.hpp"
#include "cubesim/scenario.hpp"
#include "cubesim/sstv.hpp"

namespace cubesim::gs {

// ---------------------------------------------------------------------------
// Batch operations
// ---------------------------------------------------------------------------

struct DecodeOutput {
  std::vector<afsk::ParsedFrame> frames;
  std::vector<afsk::FrameDiagnostic> frame_diagnostics;
  std::optional<sstv::DecodeResult> image;
  std::vector<std::string> diagnostics;

  bool empty() const noexcept { return frames.empty() && !image; }
};

/// Classifies and decodes one received segment: SSTV when a Robot36 VIS header
/// is present, AFSK otherwise. Never throws on bad audio.
DecodeOutput gs_decode(const audio::AudioBuffer& buf, const sstv::RowCallback& on_row = {});

/// DTMF audio for a command with 300 ms of silence either side.
/// Throws std::invalid_argument for an invalid opcode or arity.
audio::AudioBuffer gs_uplink(const dtmf::UplinkCommand& cmd);

// ---------------------------------------------------------------------------
// Session
// ---------------------------------------------------------------------------

inline constexpr std::int64_t kCommandTimeoutMs = 10'000;

struct FrameRecord {
  std::int64_t seq = 0;
  std::int64_t rx_ms = 0;
  int segment = 0;
  afsk::TelemetryFrame frame;
};

enum class CommandStatus { Pending, Acked, Rejected, TimedOut };
const char* command_status_name(CommandStatus s) noexcept;

struct CommandRecord {
  int id = 0;
  dtmf::UplinkCommand command;
  std::string symbols;
  std::int64_t sent_ms = 0;
  std::int64_t deadline_ms = 0;
  CommandStatus status = CommandStatus::Pending;
  std::optional<std::int64_t> ack_ms;
  std::optional<obc::AckStatus> ack_status;
};

struct ImageRecord {
  int id = 0;  // satellite image id from the preceding image-meta frame, else a ground counter
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
  int lines_released = 0;
  bool complete = false;
  sstv::DecodeReport report;
  ImageRaster image;
};

/// One entry of the ordered, replayable event stream.
struct StreamEvent {
  std::int64_t seq = 0;
  std::int64_t clock_ms = 0;
  std::string type;  // telemetry, mode, image-progress, ack, log
  std::string data;  // JSON object
};

struct GsSession {
  std::vector<FrameRecord> frames;
  std::vector<ImageRecord> images;
  std::vector<CommandRecord> commands;
  std::vector<StreamEvent> events;
  std::size_t crc_failures = 0;
  std::int64_t clock_ms = 0;
  std::optional<obc::Housekeeping> last_housekeeping;
  std::optional<std::int64_t> clock_offset_ms;  // satellite clock minus ground clock at reception
  bool live = false;
  bool finished = false;
};

// JSON views used by the CLI, the session files and the service.
std::string frame_json(const FrameRecord& f);
std::string command_json(const CommandRecord& c);
std::string image_json(const ImageRecord& img);
std::string state_json(const GsSession& s);

/// Ground segment of a pass. Thread-safe: the pass thread drives it while
/// service threads read copies.
class GroundStation {
 public:
  GroundStation(Scenario scenario, std::optional<std::filesystem::path> session_dir = std::nullopt);

  /// Queues an operator command; it is keyed onto the uplink at the next step.
  /// Throws std::invalid_argument for invalid commands.
  int submit(const dtmf::UplinkCommand& cmd);

  /// Advances to `now_ms`: releases decoded output that is due, times out
  /// commands, and returns uplink audio (after the channel) to deliver now.
  std::vector<audio::AudioBuffer> step(std::int64_t now_ms);

  /// A satellite transmission began; it passes through the channel and is decoded.
  void on_downlink(const obc::DownlinkSegment& seg);

  /// Releases everything still scheduled and writes the final command history.
  void finish();

  void set_live(bool live);
  bool live() const;

  GsSession snapshot() const;
  /// Runs `fn` with the session locked; `fn` must not call back into this object.
  template <class Fn>
  auto with_session(Fn&& fn) const {
    std::lock_guard lock(mu_);
    return fn(static_cast<const GsSession&>(s_));
  }
  std::vector<StreamEvent> events_since(std::int64_t seq) const;
  std::optional<ImageRecord> image(int id) const;
  std::int64_t last_seq() const;

  /// Blocks until an event newer than `seq` exists, the session finishes, or the timeout passes.
  bool wait_for_events(std::int64_t seq, std::chrono::milliseconds timeout) const;

 private:
  struct Release {
    std::int64_t at_ms;
    std::uint64_t order;
    std::function<void()> apply;
  };

  void emit(const std::string& type, const std::string& data);
  void glog(const std::string& message);
  void schedule(std::int64_t at, std::function<void()> fn);
  void release_due(std::int64_t now_ms);
  void on_frame(const afsk::TelemetryFrame& f, int segment);
  void write_commands();

  Scenario scenario_;
  std::optional<std::filesystem::path> dir_;
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  GsSession s_;
  std::vector<dtmf::UplinkCommand> outbox_;
  std::vector<int> outbox_ids_;
  std::vector<Release> releases_;
  std::uint64_t release_order_ = 0;
  int uplinks_sent_ = 0;
  std::int64_t uplink_free_ms_ = 0;
  std::optional<obc::ImageMeta> pending_meta_;
};

struct PassOptions {
  /// Logical-to-wall pacing: 1.0 is real time, 0 runs as fast as possible.
  double pace = 0.0;
  /// Checked every tick; setting it ends the pass early.
  const std::atomic<bool>* stop = nullptr;
};

/// Satellite and ground station in lockstep, both directions through the
/// scenario's AWGN channel. Writes the full session when `session_dir` is set.
GsSession run_pass(const Scenario& scenario, std::optional<std::filesystem::path> session_dir = std::nullopt,
                   GroundStation* ground = nullptr, const PassOptions& opts = {});

}  // namespace cubesim::gs
