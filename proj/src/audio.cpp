#include "cubesim/audio.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "cubesim/rng.hpp"

namespace cubesim::audio {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double clip(double v) { return std::clamp(v, -1.0, 1.0); }
}  // namespace

void AudioBuffer::append(const AudioBuffer& other) {
  if (other.empty()) return;
  if (other.rate != rate) throw std::invalid_argument("cannot append buffers with different sample rates");
  samples.insert(samples.end(), other.samples.begin(), other.samples.end());
}

void AudioBuffer::append_silence(double seconds) {
  if (seconds <= 0) return;
  samples.resize(samples.size() + static_cast<std::size_t>(std::llround(seconds * rate)), 0.0);
}

Oscillator::Oscillator(int rate, double amplitude) : rate_(rate), amplitude_(amplitude) {
  if (rate <= 0) throw std::invalid_argument("oscillator rate must be positive");
  if (!(amplitude > 0.0 && amplitude <= 1.0)) throw std::invalid_argument("oscillator amplitude must be in (0, 1]");
}

void Oscillator::append(AudioBuffer& buf, double freq_hz, double seconds) {
  if (seconds < 0) throw std::invalid_argument("negative segment duration");
  append_samples(buf, freq_hz, static_cast<std::size_t>(std::llround(seconds * rate_)));
}

void Oscillator::append_samples(AudioBuffer& buf, double freq_hz, std::size_t count) {
  if (!(freq_hz > 0.0) || freq_hz >= rate_ / 2.0)
    throw std::invalid_argument("oscillator frequency " + std::to_string(freq_hz) + " Hz outside (0, Nyquist)");
  if (buf.rate != rate_) throw std::invalid_argument("buffer rate does not match oscillator rate");
  if (count == 0) return;
  const double step = kTwoPi * freq_hz / rate_;
  for (std::size_t n = 0; n < count; ++n)
    buf.samples.push_back(clip(amplitude_ * std::sin(phase_ + step * static_cast<double>(n))));
  phase_ = std::fmod(phase_ + step * static_cast<double>(count), kTwoPi);
}

double goertzel_power(std::span<const double> window, int rate, double freq_hz) {
  const double w = kTwoPi * freq_hz / rate;
  const double coeff = 2.0 * std::cos(w);
  double s1 = 0.0, s2 = 0.0;
  for (double x : window) {
    const double s0 = x + coeff * s1 - s2;
    s2 = s1;
    s1 = s0;
  }
  return std::max(0.0, s1 * s1 + s2 * s2 - coeff * s1 * s2);
}

double goertzel_power(const AudioBuffer& buf, double freq_hz, std::size_t start, std::size_t len) {
  if (len < 8) throw std::invalid_argument("goertzel window must be at least 8 samples");
  if (start > buf.size() || len > buf.size() - start) throw std::out_of_range("goertzel window outside buffer");
  return goertzel_power(buf.view().subspan(start, len), buf.rate, freq_hz);
}

double mean_power(std::span<const double> samples) {
  if (samples.empty()) return 0.0;
  double acc = 0.0;
  for (double s : samples) acc += s * s;
  return acc / static_cast<double>(samples.size());
}

AudioBuffer awgn_apply(const AudioBuffer& buf, double snr_db, std::uint64_t seed) {
  if (buf.empty()) throw std::invalid_argument("awgn: empty buffer");
  const double signal = mean_power(buf.samples);
  if (!(signal > 0.0)) throw std::invalid_argument("awgn: input has zero power, SNR undefined");

  GaussianSource gauss(seed);
  AudioBuffer out(buf.rate);
  out.samples.resize(buf.size());
  double noise_energy = 0.0;
  for (auto& n : out.samples) {
    n = gauss.next();
    noise_energy += n * n;
  }
  // Scale to the exact target noise power so the realized SNR matches.
  const double target = signal / std::pow(10.0, snr_db / 10.0);
  const double scale = std::sqrt(target * static_cast<double>(buf.size()) / noise_energy);
  for (std::size_t i = 0; i < buf.size(); ++i) out.samples[i] = clip(buf.samples[i] + scale * out.samples[i]);
  return out;
}

AudioBuffer resample_linear(const AudioBuffer& buf, int new_rate) {
  if (new_rate <= 0) throw std::invalid_argument("resample: rate must be positive");
  if (new_rate == buf.rate || buf.empty()) return AudioBuffer(buf.samples, new_rate);
  const auto out_len = static_cast<std::size_t>(
      std::llround(static_cast<double>(buf.size()) * new_rate / static_cast<double>(buf.rate)));
  AudioBuffer out(new_rate);
  out.samples.resize(out_len);
  const double ratio = static_cast<double>(buf.rate) / new_rate;
  const std::size_t last = buf.size() - 1;
  for (std::size_t j = 0; j < out_len; ++j) {
    const double pos = static_cast<double>(j) * ratio;
    const auto i = static_cast<std::size_t>(pos);
    if (i >= last) {
      out.samples[j] = buf.samples[last];
      continue;
    }
    const double frac = pos - static_cast<double>(i);
    out.samples[j] = buf.samples[i] + frac * (buf.samples[i + 1] - buf.samples[i]);
  }
  return out;
}

ToneCorrelator::ToneCorrelator(std::span<const double> samples, int rate, double freq_hz)
    : re_(samples.size() + 1, 0.0), im_(samples.size() + 1, 0.0) {
  const double w = kTwoPi * freq_hz / rate;
  // Rotate a phasor incrementally, renormalizing periodically against drift.
  double c = 1.0, s = 0.0;
  const double cw = std::cos(w), sw = std::sin(w);
  for (std::size_t n = 0; n < samples.size(); ++n) {
    if ((n & 1023) == 0) {
      c = std::cos(w * static_cast<double>(n));
      s = std::sin(w * static_cast<double>(n));
    }
    re_[n + 1] = re_[n] + samples[n] * c;
    im_[n + 1] = im_[n] - samples[n] * s;
    const double nc = c * cw - s * sw;
    s = s * cw + c * sw;
    c = nc;
  }
}

double ToneCorrelator::power(std::ptrdiff_t begin, std::ptrdiff_t end) const {
  const auto n = static_cast<std::ptrdiff_t>(re_.size() - 1);
  begin = std::clamp<std::ptrdiff_t>(begin, 0, n);
  end = std::clamp<std::ptrdiff_t>(end, 0, n);
  if (end <= begin) return 0.0;
  const double re = re_[end] - re_[begin];
  const double im = im_[end] - im_[begin];
  return re * re + im * im;
}

}  // namespace cubesim::audio
