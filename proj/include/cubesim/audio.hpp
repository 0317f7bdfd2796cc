#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

namespace cubesim::audio {

inline constexpr int kCanonicalRate = 48000;
inline constexpr double kDefaultAmplitude = 0.8;

/// Mono sample sequence, normalized to [-1, 1].
struct AudioBuffer {
  std::vector<double> samples;
  int rate = kCanonicalRate;

  AudioBuffer() = default;
  explicit AudioBuffer(int sample_rate) : rate(sample_rate) {}
  AudioBuffer(std::vector<double> s, int sample_rate) : samples(std::move(s)), rate(sample_rate) {}

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
  double duration() const noexcept { return static_cast<double>(samples.size()) / rate; }
  std::span<const double> view() const noexcept { return samples; }

  /// Appends another buffer at the same rate.
  void append(const AudioBuffer& other);
  void append_silence(double seconds);

  bool operator==(const AudioBuffer&) const = default;
};

/// Phase-continuous sine generator. Consecutive segments share phase so FSK
/// and SSTV transitions carry no discontinuity.
class Oscillator {
 public:
  explicit Oscillator(int rate = kCanonicalRate, double amplitude = kDefaultAmplitude);

  /// Appends round(seconds * rate) samples of `freq_hz`.
  void append(AudioBuffer& buf, double freq_hz, double seconds);
  /// Appends exactly `count` samples of `freq_hz`.
  void append_samples(AudioBuffer& buf, double freq_hz, std::size_t count);

  double phase() const noexcept { return phase_; }
  double amplitude() const noexcept { return amplitude_; }
  int rate() const noexcept { return rate_; }

 private:
  int rate_;
  double amplitude_;
  double phase_ = 0.0;
};

/// Goertzel power |sum x[n] e^{-j w n}|^2 at exactly `freq_hz` over `window`.
double goertzel_power(std::span<const double> window, int rate, double freq_hz);

/// Goertzel power over samples [start, start + len) of `buf`; len >= 8.
double goertzel_power(const AudioBuffer& buf, double freq_hz, std::size_t start, std::size_t len);

/// Mean square of the samples.
double mean_power(std::span<const double> samples);

/// Adds Gaussian noise scaled to `snr_db` relative to the buffer's mean power,
/// then clips to [-1, 1]. Pure function of its arguments.
AudioBuffer awgn_apply(const AudioBuffer& buf, double snr_db, std::uint64_t seed);

/// Linear-interpolation resampling.
AudioBuffer resample_linear(const AudioBuffer& buf, int new_rate);

class WavError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Canonical RIFF/WAVE, PCM 16-bit signed little-endian, mono.
std::vector<std::uint8_t> wav_encode(const AudioBuffer& buf);
AudioBuffer wav_decode(std::span<const std::uint8_t> bytes);

void wav_write(const AudioBuffer& buf, const std::filesystem::path& path);
AudioBuffer wav_read(const std::filesystem::path& path);

/// Reads a WAV and resamples to the canonical rate when needed.
AudioBuffer wav_read_canonical(const std::filesystem::path& path);

/// Running complex correlation against one tone, so the Goertzel power of any
/// window is available in O(1) after an O(n) pass.
class ToneCorrelator {
 public:
  ToneCorrelator(std::span<const double> samples, int rate, double freq_hz);

  /// Power over [begin, end), clamped to the sample range.
  double power(std::ptrdiff_t begin, std::ptrdiff_t end) const;

 private:
  std::vector<double> re_;
  std::vector<double> im_;
};

}  // namespace cubesim::audio
