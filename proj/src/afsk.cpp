#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>

#include "cubesim/afsk.hpp"

namespace cubesim::afsk {

void AfskConfig::validate(int rate) const {
  if (!(baud > 0)) throw std::invalid_argument("afsk: baud must be positive");
  if (mark_hz == space_hz) throw std::invalid_argument("afsk: mark and space tones must differ");
  const double nyquist = rate / 2.0;
  if (!(mark_hz > 0 && mark_hz < nyquist && space_hz > 0 && space_hz < nyquist))
    throw std::invalid_argument("afsk: tones must lie below Nyquist");
  if (leader_bits < 0 || trailer_bits < 0) throw std::invalid_argument("afsk: negative leader/trailer");
  if (rate / baud < 8) throw std::invalid_argument("afsk: fewer than 8 samples per bit");
}

audio::AudioBuffer afsk_modulate(std::span<const std::uint8_t> bytes, const AfskConfig& cfg, int rate) {
  if (bytes.empty()) throw std::invalid_argument("afsk: nothing to modulate");
  cfg.validate(rate);

  std::vector<bool> bits;
  bits.reserve(cfg.leader_bits + bytes.size() * 10 + cfg.trailer_bits);
  bits.insert(bits.end(), cfg.leader_bits, true);
  for (auto byte : bytes) {
    bits.push_back(false);
    for (int b = 0; b < 8; ++b) bits.push_back(((byte >> b) & 1) != 0);
    bits.push_back(true);
  }
  bits.insert(bits.end(), cfg.trailer_bits, true);

  audio::AudioBuffer buf(rate);
  audio::Oscillator osc(rate, cfg.amplitude);
  const double samples_per_bit = rate / cfg.baud;
  std::size_t emitted = 0;
  for (std::size_t k = 0; k < bits.size(); ++k) {
    const auto end = static_cast<std::size_t>(std::llround(static_cast<double>(k + 1) * samples_per_bit));
    osc.append_samples(buf, bits[k] ? cfg.mark_hz : cfg.space_hz, end - emitted);
    emitted = end;
  }
  return buf;
}

Bytes afsk_demodulate(const audio::AudioBuffer& buf, const AfskConfig& cfg) {
  cfg.validate(buf.rate);
  Bytes out;
  if (buf.empty()) return out;

  const double bit = buf.rate / cfg.baud;
  const auto window = static_cast<std::ptrdiff_t>(std::lround(bit));
  const std::ptrdiff_t half = window / 2;
  const auto n_samples = static_cast<std::ptrdiff_t>(buf.size());

  // Correlators cover a sliding chunk so long recordings stay cache-sized.
  const std::ptrdiff_t back = 16 * window;
  const std::ptrdiff_t chunk = std::max<std::ptrdiff_t>(1 << 16, 64 * window);
  std::ptrdiff_t base = 0, limit = -1;
  std::optional<audio::ToneCorrelator> mark, space;

  // Window centred on sample n.
  auto powers = [&](std::ptrdiff_t n) {
    const auto lo = std::clamp<std::ptrdiff_t>(n - half, 0, n_samples);
    const auto hi = std::clamp<std::ptrdiff_t>(n - half + window, 0, n_samples);
    if (lo < base || hi > limit) {
      base = std::max<std::ptrdiff_t>(0, lo - back);
      limit = std::min(n_samples, base + chunk);
      const auto part = std::span<const double>(buf.samples).subspan(static_cast<std::size_t>(base),
                                                                     static_cast<std::size_t>(limit - base));
      mark.emplace(part, buf.rate, cfg.mark_hz);
      space.emplace(part, buf.rate, cfg.space_hz);
    }
    return std::pair{mark->power(lo - base, hi - base), space->power(lo - base, hi - base)};
  };

  // Carrier gate relative to the strongest window, so decisions do not depend
  // on absolute level.
  double peak = 0.0;
  for (std::ptrdiff_t n = 0; n < n_samples; n += std::max<std::ptrdiff_t>(1, half / 2)) {
    auto [m, s] = powers(n);
    peak = std::max(peak, m + s);
  }
  if (!(peak > 0.0)) return out;
  const double gate = 0.1 * peak;

  enum class Tone { None, Mark, Space };
  auto tone_at = [&](double pos) {
    const auto n = static_cast<std::ptrdiff_t>(std::lround(pos));
    if (n < 0 || n >= n_samples) return Tone::None;
    auto [m, s] = powers(n);
    if (m + s < gate) return Tone::None;
    return m >= s ? Tone::Mark : Tone::Space;
  };

  std::ptrdiff_t n = 0;
  while (n < n_samples) {
    // Next falling edge into a space tone with carrier present.
    auto [m, s] = powers(n);
    if (m + s < gate || m >= s) {
      ++n;
      continue;
    }
    const double edge = static_cast<double>(n);
    if (tone_at(edge + 0.5 * bit) != Tone::Space) {
      ++n;
      continue;
    }
    std::uint8_t value = 0;
    bool ok = true;
    for (int b = 0; b < 8 && ok; ++b) {
      const Tone t = tone_at(edge + (b + 1.5) * bit);
      if (t == Tone::None) ok = false;
      if (t == Tone::Mark) value |= static_cast<std::uint8_t>(1u << b);
    }
    if (ok && tone_at(edge + 9.5 * bit) == Tone::Mark) {
      out.push_back(value);
      n = static_cast<std::ptrdiff_t>(std::lround(edge + 9.5 * bit));
    } else {
      // Framing error: skip the bogus start bit and hunt again.
      n = static_cast<std::ptrdiff_t>(std::lround(edge + bit));
    }
  }
  return out;
}

}  // namespace cubesim::afsk
