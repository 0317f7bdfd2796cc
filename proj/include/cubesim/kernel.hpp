#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

#include "cubesim/audio.hpp"
#include "cubesim/bus.hpp"
#include "cubesim/dtmf.hpp"
#include "cubesim/obc.hpp"
#include "cubesim/scenario.hpp"

namespace cubesim::obc {

/// One transmission from the satellite.
struct DownlinkSegment {
  enum class Kind { Afsk, Sstv };

  int index = 0;  // 1-based, matches downlink/NNN.wav
  Kind kind = Kind::Afsk;
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
  std::optional<afsk::TelemetryFrame> frame;  // Afsk
  int image_id = 0;                           // Sstv
  audio::AudioBuffer audio;
};

/// Immutable copy of the observable satellite state.
struct Snapshot {
  Mode mode = Mode::Boot;
  std::int64_t clock_ms = 0;
  std::optional<SensorSample> last_sample;
  int image_count = 0;
  std::size_t log_size = 0;
};

/// Tick-driven onboard computer. Owns the MCU emulator, the byte links between
/// them, the uplink receiver and the downlink transmitter.
class Kernel {
 public:
  /// `session_dir`, when given, receives scenario.json, log.jsonl, images/,
  /// downlink/ and uplink/ as the run progresses.
  explicit Kernel(Scenario scenario, std::optional<std::filesystem::path> session_dir = std::nullopt,
                  std::unique_ptr<AttitudeController> controller = nullptr);
  ~Kernel();
  Kernel(const Kernel&) = delete;
  Kernel& operator=(const Kernel&) = delete;

  /// Places received audio on the receiver timeline at `start_ms` (or now, if earlier).
  void receive_uplink(const audio::AudioBuffer& audio, std::int64_t start_ms);

  /// Advances the logical clock by one tick.
  void tick();
  bool done() const noexcept;

  std::int64_t clock_ms() const noexcept { return state_.clock_ms; }
  const SatelliteState& state() const noexcept { return state_; }
  Snapshot snapshot() const;
  const Scenario& scenario() const noexcept { return scenario_; }

  /// Segments that started transmitting since the last call.
  std::vector<DownlinkSegment> take_downlink();

  /// Bus transactions that exhausted their retries.
  std::size_t bus_failures() const noexcept { return bus_failures_; }

 private:
  struct Queued {
    DownlinkSegment::Kind kind;
    std::optional<afsk::TelemetryFrame> frame;
    int image_id = 0;
    std::string label;
  };
  struct BusTxn {
    bus::BusRequest request;
    int attempts = 0;
    std::int64_t deadline_us = 0;
  };

  void log(const std::string& kind, const std::string& detail);
  void dispatch(const Trigger& trigger);
  void execute(const Action& a);
  void queue_frame(afsk::TelemetryFrame f, std::string label);
  void step_uplink(std::int64_t from_ms, std::int64_t to_ms);
  void step_timers();
  void step_subroutines();
  void step_bus();
  void on_bus_reply(const bus::BusRequest& req, const bus::BusResponse& resp);
  void step_transmitter();
  void finish_capture();

  Scenario scenario_;
  std::optional<std::filesystem::path> dir_;
  std::unique_ptr<AttitudeController> controller_;
  SatelliteState state_;

  // uplink receiver
  std::deque<double> rx_;
  std::int64_t rx_base_ = 0;  // absolute sample index of rx_.front()
  dtmf::Decoder decoder_;
  dtmf::CommandAssembler assembler_;
  int uplink_count_ = 0;

  // timers
  std::optional<std::int64_t> boot_due_;
  std::optional<std::int64_t> housekeeping_due_;
  std::int64_t next_poll_ = 0;
  std::size_t next_event_ = 0;
  std::vector<ScheduledEvent> gps_events_;

  // subroutines
  std::optional<std::int64_t> capture_started_;
  bool detumble_active_ = false;
  std::optional<std::int64_t> prev_sample_ms_;
  bool image_downlink_active_ = false;
  std::optional<std::int64_t> image_downlink_end_;

  // bus
  bus::Mcu mcu_;
  bus::ByteLink to_mcu_;
  bus::ByteLink from_mcu_;
  std::deque<bus::BusRequest> bus_queue_;
  std::optional<BusTxn> inflight_;
  Bytes bus_rx_;
  std::size_t bus_failures_ = 0;

  // transmitter
  std::deque<Queued> tx_queue_;
  std::int64_t tx_busy_until_ = 0;
  int segment_count_ = 0;
  std::vector<DownlinkSegment> fresh_;
};

/// Runs the scenario standalone: scheduled uplinks are synthesized and passed
/// through the channel model directly into the receiver.
struct MissionRecord {
  SatelliteState state;
  std::vector<DownlinkSegment> downlink;
};
MissionRecord run_mission(const Scenario& scenario, std::optional<std::filesystem::path> session_dir = std::nullopt);

/// Seed for the channel noise on the n-th uplink (1-based) of a run.
std::uint64_t uplink_noise_seed(std::uint64_t scenario_seed, int n);
/// Seed for the channel noise on the n-th downlink segment (1-based) of a run.
std::uint64_t downlink_noise_seed(std::uint64_t scenario_seed, int n);

}  // namespace cubesim::obc
