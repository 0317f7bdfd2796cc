#include <fstream>
#include <set>
#include <sstream>

#include "cubesim/scenario.hpp"
#include "json.hpp"

namespace cubesim {

using nlohmann::json;

namespace {

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& p : v) s += (s.empty() ? "" : "; ") + p;
  return s;
}

json profile_json(const bus::SensorProfile& p) {
  return {{"bias", p.bias}, {"amplitude", p.amplitude}, {"freq_hz", p.freq_hz}, {"phase", p.phase}, {"sigma", p.sigma}};
}

// Reads known keys of an object and records anything unexpected.
class Reader {
 public:
  Reader(const json& j, std::string where, std::vector<std::string>& problems)
      : j_(j), where_(std::move(where)), problems_(problems) {
    if (!j_.is_object()) problems_.push_back(where_ + ": expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.is_object() || !j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      problems_.push_back(where_ + "." + key + ": wrong type");
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    if (!j_.is_object() || !j_.contains(key)) return nullptr;
    return &j_.at(key);
  }

  void finish() {
    if (!j_.is_object()) return;
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) problems_.push_back(where_ + ": unknown key '" + k + "'");
  }

 private:
  const json& j_;
  std::string where_;
  std::vector<std::string>& problems_;
  std::set<std::string> seen_;
};

}  // namespace

ScenarioError::ScenarioError(std::vector<std::string> problems)
    : std::runtime_error("invalid scenario: " + join(problems)), problems_(std::move(problems)) {}

void Scenario::validate() const {
  std::vector<std::string> p;
  if (!(duration_s > 0.0)) p.push_back("duration_s must be positive");
  if (tick_ms <= 0 || tick_ms > 100) p.push_back("tick_ms must be in 1..100");
  if (!(boot_s >= 0.0)) p.push_back("boot_s must be nonnegative");
  if (!(housekeeping_period_s > 0.0)) p.push_back("housekeeping_period_s must be positive");
  if (sensor_poll_ms < tick_ms) p.push_back("sensor_poll_ms must be at least one tick");
  if (!(omega_low > 0.0) || !(omega_high > omega_low)) p.push_back("need 0 < omega_low < omega_high");
  if (!(detumble_k > 0.0) || !(detumble_m_max > 0.0)) p.push_back("detumble k and m_max must be positive");
  if (!(coupling_gain >= 0.0)) p.push_back("coupling_gain must be nonnegative");
  if (!(camera.noise_sigma >= 0.0) || camera.blur_radius < 0 || camera.blur_radius > 8)
    p.push_back("camera: noise_sigma >= 0 and blur_radius in 0..8 required");
  if (bus_byte_time_us < 1) p.push_back("bus.byte_time_us must be positive");
  for (double q : {bus_faults.bit_flip_prob, bus_faults.drop_prob})
    if (!(q >= 0.0 && q <= 1.0)) p.push_back("bus fault probabilities must be in [0, 1]");
  for (std::size_t i = 0; i < sensors.size(); ++i)
    if (!(sensors[i].sigma >= 0.0)) p.push_back(std::string("sensors.") + bus::sensor_name(static_cast<bus::Sensor>(i)) + ".sigma must be >= 0");
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    const std::string at = "events[" + std::to_string(i) + "]";
    if (!(e.t_s >= 0.0) || e.t_s > duration_s) p.push_back(at + ": t_s outside the run");
    if (e.kind == ScheduledEvent::Kind::Uplink) {
      try {
        dtmf::command_encode(e.command);
      } catch (const std::exception& ex) {
        p.push_back(at + ": " + ex.what());
      }
    } else if (e.region.empty()) {
      p.push_back(at + ": gps region name is empty");
    }
  }
  if (!p.empty()) throw ScenarioError(std::move(p));
}

std::string Scenario::to_json() const {
  json sensors_j = json::object();
  for (std::size_t i = 0; i < sensors.size(); ++i) sensors_j[bus::sensor_name(static_cast<bus::Sensor>(i))] = profile_json(sensors[i]);
  json events_j = json::array();
  for (const auto& e : events) {
    if (e.kind == ScheduledEvent::Kind::Uplink)
      events_j.push_back({{"t_s", e.t_s},
                          {"uplink", {{"opcode", std::string(1, static_cast<char>('0' + static_cast<int>(e.command.opcode) / 10)) +
                                                     static_cast<char>('0' + static_cast<int>(e.command.opcode) % 10)},
                                      {"args", e.command.args}}}});
    else
      events_j.push_back({{"t_s", e.t_s}, {"gps", e.region}, {"enter", e.enter}});
  }
  json j = {
      {"seed", seed},
      {"duration_s", duration_s},
      {"tick_ms", tick_ms},
      {"snr_db", snr_db},
      {"boot_s", boot_s},
      {"housekeeping_period_s", housekeeping_period_s},
      {"sensor_poll_ms", sensor_poll_ms},
      {"omega_high", omega_high},
      {"omega_low", omega_low},
      {"detumble", {{"k", detumble_k}, {"m_max", detumble_m_max}}},
      {"coupling_gain", coupling_gain},
      {"camera", {{"noise_sigma", camera.noise_sigma}, {"blur_radius", camera.blur_radius}}},
      {"bus",
       {{"byte_time_us", bus_byte_time_us}, {"bit_flip_prob", bus_faults.bit_flip_prob}, {"drop_prob", bus_faults.drop_prob}}},
      {"sensors", sensors_j},
      {"events", events_j},
  };
  return j.dump(2) + "\n";
}

Scenario Scenario::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ScenarioError({std::string("not valid JSON: ") + e.what()});
  }

  std::vector<std::string> problems;
  Scenario s;
  Reader r(j, "scenario", problems);
  r.get("seed", s.seed);
  r.get("duration_s", s.duration_s);
  r.get("tick_ms", s.tick_ms);
  r.get("snr_db", s.snr_db);
  r.get("boot_s", s.boot_s);
  r.get("housekeeping_period_s", s.housekeeping_period_s);
  r.get("sensor_poll_ms", s.sensor_poll_ms);
  r.get("omega_high", s.omega_high);
  r.get("omega_low", s.omega_low);
  r.get("coupling_gain", s.coupling_gain);
  if (const auto* d = r.child("detumble")) {
    Reader rd(*d, "detumble", problems);
    rd.get("k", s.detumble_k);
    rd.get("m_max", s.detumble_m_max);
    rd.finish();
  }
  if (const auto* c = r.child("camera")) {
    Reader rc(*c, "camera", problems);
    rc.get("noise_sigma", s.camera.noise_sigma);
    rc.get("blur_radius", s.camera.blur_radius);
    rc.finish();
  }
  if (const auto* b = r.child("bus")) {
    Reader rb(*b, "bus", problems);
    rb.get("byte_time_us", s.bus_byte_time_us);
    rb.get("bit_flip_prob", s.bus_faults.bit_flip_prob);
    rb.get("drop_prob", s.bus_faults.drop_prob);
    rb.finish();
  }
  if (const auto* sj = r.child("sensors")) {
    Reader rs(*sj, "sensors", problems);
    for (std::size_t i = 0; i < bus::kSensorCount; ++i) {
      const char* name = bus::sensor_name(static_cast<bus::Sensor>(i));
      if (const auto* pj = rs.child(name)) {
        Reader rp(*pj, std::string("sensors.") + name, problems);
        auto& p = s.sensors[i];
        rp.get("bias", p.bias);
        rp.get("amplitude", p.amplitude);
        rp.get("freq_hz", p.freq_hz);
        rp.get("phase", p.phase);
        rp.get("sigma", p.sigma);
        rp.finish();
      }
    }
    rs.finish();
  }
  if (const auto* ej = r.child("events")) {
    if (!ej->is_array()) {
      problems.push_back("events: expected an array");
    } else {
      for (std::size_t i = 0; i < ej->size(); ++i) {
        const std::string at = "events[" + std::to_string(i) + "]";
        Reader re((*ej)[i], at, problems);
        ScheduledEvent e;
        re.get("t_s", e.t_s);
        const auto* up = re.child("uplink");
        const auto* gps = re.child("gps");
        re.get("enter", e.enter);
        if ((up == nullptr) == (gps == nullptr)) {
          problems.push_back(at + ": exactly one of 'uplink' or 'gps' is required");
        } else if (up) {
          Reader ru(*up, at + ".uplink", problems);
          std::string opcode, args;
          ru.get("opcode", opcode);
          ru.get("args", args);
          ru.finish();
          if (const auto op = dtmf::opcode_from_string(opcode)) {
            e.command = {*op, args};
          } else {
            problems.push_back(at + ": unknown opcode '" + opcode + "'");
          }
        } else {
          e.kind = ScheduledEvent::Kind::GpsRegion;
          if (gps->is_string()) e.region = gps->get<std::string>();
          else problems.push_back(at + ".gps: expected a region name");
        }
        re.finish();
        s.events.push_back(std::move(e));
      }
    }
  }
  r.finish();
  try {
    s.validate();
  } catch (const ScenarioError& e) {
    problems.insert(problems.end(), e.problems().begin(), e.problems().end());
  }
  if (!problems.empty()) throw ScenarioError(std::move(problems));
  return s;
}

Scenario Scenario::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError({"cannot open " + path.string()});
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

Scenario reference_scenario() {
  Scenario s;
  s.events = {
      {10.0, ScheduledEvent::Kind::Uplink, {dtmf::Opcode::SetMode, "2"}, {}, true},
      {20.0, ScheduledEvent::Kind::Uplink, {dtmf::Opcode::Capture, ""}, {}, true},
      {40.0, ScheduledEvent::Kind::Uplink, {dtmf::Opcode::DownlinkImage, ""}, {}, true},
  };
  return s;
}

}  // namespace cubesim
