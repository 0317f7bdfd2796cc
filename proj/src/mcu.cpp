#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "cubesim/bus.hpp"
#include "cubesim/rng.hpp"

namespace cubesim::bus {

Mcu::Mcu(McuConfig cfg) : cfg_(cfg), fault_rng_(cfg.faults.seed) {}

double Mcu::coupling_factor() const { return std::exp(-cfg_.coupling_gain * duty_integral_); }

void Mcu::advance(double t) {
  if (t <= last_t_) return;
  double mean = 0.0;
  for (int d : duty_) mean += std::abs(d);
  mean /= static_cast<double>(kPwmChannels);
  duty_integral_ += mean / 100.0 * (t - last_t_);
  last_t_ = t;
}

double Mcu::reading(Sensor s, double t) const {
  double v = sensor_value(cfg_.profiles[static_cast<std::size_t>(s)], t);
  if (s <= Sensor::GyroZ) v *= coupling_factor();
  return v;
}

BusResponse Mcu::respond(const BusRequest& r, double t) {
  switch (static_cast<Command>(r.cmd)) {
    case Command::Ping:
      return {Status::Ok, {}};
    case Command::ReadSensor: {
      if (r.arg0 >= kSensorCount) return {Status::BadArg, {}};
      const auto s = static_cast<Sensor>(r.arg0);
      Bytes out;
      put_u16be(out, to_counts(s, reading(s, t)));
      return {Status::Ok, out};
    }
    case Command::SetPwm: {
      const std::size_t ch = r.arg0 & 0x7F;
      if (ch >= kPwmChannels) return {Status::BadArg, {}};
      const int duty = std::min<int>(r.arg1, 100);
      duty_[ch] = (r.arg0 & 0x80) ? -duty : duty;
      return {Status::Ok, {}};
    }
    case Command::ReadAll: {
      if (r.arg0 > 1) return {Status::BadArg, {}};
      Bytes out;
      for (std::size_t i = 0; i < kSensorCount; ++i) {
        const auto s = static_cast<Sensor>(i);
        put_u16be(out, to_counts(s, reading(s, t)));
      }
      if (r.arg0 == 1)
        for (int d : duty_) out.push_back(static_cast<std::uint8_t>(std::abs(d) | (d < 0 ? 0x80 : 0)));
      return {Status::Ok, out};
    }
  }
  return {Status::UnknownCmd, {}};
}

std::optional<Bytes> Mcu::handle(std::span<const std::uint8_t> request, double t) {
  advance(t);
  const auto parsed = parse_request(request);
  BusResponse r = parsed.status == ParseStatus::Ok ? respond(parsed.request, t) : BusResponse{Status::BadCrc, {}};
  Bytes wire = encode_response(r);

  // Both draws happen on every reply so the fault sequence depends only on the reply count.
  const double drop = unit_open(fault_rng_());
  const std::uint64_t flip = fault_rng_();
  if (drop < cfg_.faults.drop_prob) return std::nullopt;
  if (unit_open(flip) < cfg_.faults.bit_flip_prob) {
    const std::size_t bit = static_cast<std::size_t>((flip >> 20) % (wire.size() * 8));
    wire[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
  }
  return wire;
}

std::vector<Bytes> Mcu::receive(std::span<const std::uint8_t> bytes, double t) {
  rx_.insert(rx_.end(), bytes.begin(), bytes.end());
  std::vector<Bytes> out;
  std::size_t at = 0;
  while (at < rx_.size()) {
    if (rx_[at] != kRequestSync) {
      const auto next = std::find(rx_.begin() + static_cast<std::ptrdiff_t>(at), rx_.end(), kRequestSync);
      at = static_cast<std::size_t>(next - rx_.begin());
      ++resyncs_;
      continue;
    }
    if (rx_.size() - at < kRequestSize) break;
    if (auto reply = handle(std::span<const std::uint8_t>(rx_).subspan(at, kRequestSize), t)) out.push_back(std::move(*reply));
    at += kRequestSize;
  }
  rx_.erase(rx_.begin(), rx_.begin() + static_cast<std::ptrdiff_t>(at));
  return out;
}

void ByteLink::send(std::span<const std::uint8_t> bytes, std::int64_t now_us) {
  for (auto b : bytes) {
    line_free_us_ = std::max(line_free_us_, now_us) + byte_time_us_;
    queue_.emplace_back(line_free_us_, b);
  }
}

Bytes ByteLink::receive(std::int64_t now_us) {
  Bytes out;
  while (!queue_.empty() && queue_.front().first <= now_us) {
    out.push_back(queue_.front().second);
    queue_.pop_front();
  }
  return out;
}

}  // namespace cubesim::bus
