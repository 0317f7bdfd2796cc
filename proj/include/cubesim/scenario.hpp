#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "cubesim/bus.hpp"
#include "cubesim/dtmf.hpp"
#include "cubesim/obc.hpp"

namespace cubesim {

struct ScheduledEvent {
  enum class Kind { Uplink, GpsRegion };

  double t_s = 0.0;
  Kind kind = Kind::Uplink;
  dtmf::UplinkCommand command;  // Uplink
  std::string region;           // GpsRegion
  bool enter = true;            // GpsRegion
};

/// Everything a run depends on. Two runs of the same scenario are byte-identical.
struct Scenario {
  std::uint64_t seed = 1;
  double duration_s = 120.0;
  int tick_ms = 10;
  double snr_db = 30.0;
  double boot_s = 5.0;
  double housekeeping_period_s = 30.0;
  int sensor_poll_ms = 1000;
  double omega_high = 10.0;  // deg/s
  double omega_low = 2.0;    // deg/s
  double detumble_k = 1.0;
  double detumble_m_max = 10.0;
  double coupling_gain = 0.0;
  obc::CameraParams camera{};
  std::int64_t bus_byte_time_us = 87;
  bus::FaultConfig bus_faults{};
  bus::SensorProfiles sensors = bus::default_profiles(1);
  std::vector<ScheduledEvent> events;

  /// Throws ScenarioError listing every problem found.
  void validate() const;
  std::string to_json() const;
  static Scenario from_json(const std::string& text);
  static Scenario load(const std::filesystem::path& path);
};

class ScenarioError : public std::runtime_error {
 public:
  explicit ScenarioError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  std::vector<std::string> problems_;
};

/// SET_MODE(2) at 10 s, CAPTURE at 20 s, DOWNLINK_IMAGE at 40 s, 30 dB, 120 s.
Scenario reference_scenario();

}  // namespace cubesim
