#include "cubesim/sstv.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>

namespace cubesim::sstv {

using audio::AudioBuffer;
namespace r36 = robot36;

namespace {

double clamp255(double v) { return std::clamp(v, 0.0, 255.0); }

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(clamp255(v))); }

/// Emits tone segments against an exact time cursor so rounding never accumulates.
class SegmentWriter {
 public:
  SegmentWriter(AudioBuffer& buf, double amplitude) : buf_(buf), osc_(buf.rate, amplitude) {}

  void tone(double hz, double ms) {
    const double end = cursor_ + ms * buf_.rate / 1000.0;
    osc_.append_samples(buf_, hz, static_cast<std::size_t>(std::llround(end) - std::llround(cursor_)));
    cursor_ = end;
  }

  /// `values` spread evenly across `ms`.
  void scan(std::span<const double> values, double ms) {
    const double per = ms / static_cast<double>(values.size());
    for (double v : values) tone(value_to_hz(v), per);
  }

 private:
  AudioBuffer& buf_;
  audio::Oscillator osc_;
  double cursor_ = 0.0;
};

}  // namespace

YCrCb rgb_to_ycrcb(Rgb p) noexcept {
  const double y = 0.299 * p.r + 0.587 * p.g + 0.114 * p.b;
  return {clamp255(y), clamp255((p.r - y) * 0.713 + 128.0), clamp255((p.b - y) * 0.564 + 128.0)};
}

Rgb ycrcb_to_rgb(YCrCb c) noexcept {
  const double r = c.y + (c.cr - 128.0) / 0.713;
  const double b = c.y + (c.cb - 128.0) / 0.564;
  const double g = (c.y - 0.299 * r - 0.114 * b) / 0.587;
  return {to_byte(r), to_byte(g), to_byte(b)};
}

AudioBuffer sstv_encode(const ImageRaster& img, int rate, double amplitude) {
  if (img.width() != r36::kWidth || img.height() != r36::kLines)
    throw std::invalid_argument("sstv: Robot36 needs a 320x240 raster, got " + std::to_string(img.width()) + "x" +
                                std::to_string(img.height()));
  AudioBuffer buf(rate);
  buf.samples.reserve(static_cast<std::size_t>(r36::kTotalMs * rate / 1000.0) + 16);
  SegmentWriter w(buf, amplitude);

  w.tone(r36::kLeaderHz, r36::kLeaderMs);
  w.tone(r36::kBreakHz, r36::kBreakMs);
  w.tone(r36::kLeaderHz, r36::kLeaderMs);

  w.tone(r36::kVisStartHz, r36::kVisBitMs);
  int parity = 0;
  for (int b = 0; b < 7; ++b) {
    const int bit = (r36::kVisCode >> b) & 1;
    parity ^= bit;
    w.tone(bit ? r36::kVisOneHz : r36::kVisZeroHz, r36::kVisBitMs);
  }
  w.tone(parity ? r36::kVisOneHz : r36::kVisZeroHz, r36::kVisBitMs);
  w.tone(r36::kVisStopHz, r36::kVisBitMs);

  std::vector<double> luma(r36::kWidth), chroma(r36::kWidth);
  for (int line = 0; line < r36::kLines; ++line) {
    const bool even = (line % 2) == 0;
    const int pair = line - (line % 2);
    for (int x = 0; x < r36::kWidth; ++x) {
      luma[x] = rgb_to_ycrcb(img.at(x, line)).y;
      const YCrCb a = rgb_to_ycrcb(img.at(x, pair));
      const YCrCb b = rgb_to_ycrcb(img.at(x, pair + 1));
      chroma[x] = even ? 0.5 * (a.cr + b.cr) : 0.5 * (a.cb + b.cb);
    }
    w.tone(r36::kSyncHz, r36::kSyncMs);
    w.tone(r36::kPorchHz, r36::kPorchMs);
    w.scan(luma, r36::kLumaMs);
    w.tone(even ? r36::kEvenSeparatorHz : r36::kOddSeparatorHz, r36::kSeparatorMs);
    w.tone(r36::kChromaPorchHz, r36::kChromaPorchMs);
    w.scan(chroma, r36::kChromaMs);
  }
  return buf;
}

std::vector<double> frequency_track(std::span<const double> x, int rate, std::vector<double>* power) {
  // Mix the pixel band down around its centre, low-pass to drop the image at
  // twice the carrier, then differentiate phase.
  constexpr double kCentreHz = 1900.0;
  constexpr double kCutoffHz = 1100.0;
  constexpr int kTaps = 49;

  const std::size_t n = x.size();
  std::vector<double> f(n, kCentreHz);
  if (power) power->assign(n, 0.0);
  if (n < 2) return f;

  std::vector<double> zr(n), zi(n);
  const double w = 2.0 * std::numbers::pi * kCentreHz / rate;
  for (std::size_t i = 0; i < n; ++i) {
    const double ph = w * static_cast<double>(i % static_cast<std::size_t>(rate));  // period divides rate for integral Hz
    zr[i] = x[i] * std::cos(ph);
    zi[i] = -x[i] * std::sin(ph);
  }

  std::array<double, kTaps> h{};
  const double fc = kCutoffHz / rate;
  for (int k = 0; k < kTaps; ++k) {
    const double m = k - (kTaps - 1) / 2.0;
    const double sinc = m == 0 ? 2.0 * fc : std::sin(2.0 * std::numbers::pi * fc * m) / (std::numbers::pi * m);
    const double hann = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (k + 1) / (kTaps + 1));
    h[k] = sinc * hann;
  }
  const double gain = std::accumulate(h.begin(), h.end(), 0.0);
  for (auto& v : h) v /= gain;

  constexpr int kHalf = (kTaps - 1) / 2;
  const auto sn = static_cast<std::ptrdiff_t>(n);
  double prev_r = 0.0, prev_i = 0.0;
  for (std::ptrdiff_t i = 0; i < sn; ++i) {
    double ar = 0.0, ai = 0.0;
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - kHalf);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(sn - 1, i + kHalf);
    for (std::ptrdiff_t j = lo; j <= hi; ++j) {
      const double c = h[static_cast<std::size_t>(j - i + kHalf)];
      ar += c * zr[static_cast<std::size_t>(j)];
      ai += c * zi[static_cast<std::size_t>(j)];
    }
    if (power) (*power)[static_cast<std::size_t>(i)] = ar * ar + ai * ai;
    if (i > 0) {
      // arg(z[i] * conj(z[i-1]))
      const double re = ar * prev_r + ai * prev_i;
      const double im = ai * prev_r - ar * prev_i;
      f[static_cast<std::size_t>(i)] = kCentreHz + std::atan2(im, re) * rate / (2.0 * std::numbers::pi);
    }
    prev_r = ar;
    prev_i = ai;
  }
  f[0] = f[1];
  return f;
}

namespace {

/// Prefix sums for window counts and means.
class Prefix {
 public:
  Prefix() = default;
  template <typename Fn>
  Prefix(std::size_t n, Fn&& value) : sums_(n + 1, 0.0) {
    for (std::size_t i = 0; i < n; ++i) sums_[i + 1] = sums_[i] + value(i);
  }
  double sum(std::ptrdiff_t a, std::ptrdiff_t b) const {
    const auto n = static_cast<std::ptrdiff_t>(sums_.size() - 1);
    a = std::clamp<std::ptrdiff_t>(a, 0, n);
    b = std::clamp<std::ptrdiff_t>(b, 0, n);
    return b > a ? sums_[static_cast<std::size_t>(b)] - sums_[static_cast<std::size_t>(a)] : 0.0;
  }
  double mean(std::ptrdiff_t a, std::ptrdiff_t b) const { return b > a ? sum(a, b) / static_cast<double>(b - a) : 0.0; }

 private:
  std::vector<double> sums_;
};

struct Analysis {
  int rate = audio::kCanonicalRate;
  std::size_t n = 0;
  Prefix freq;     // frequency, valid samples only
  Prefix valid;    // carrier-present indicator
  Prefix above;    // valid && f > 1550 (leader side of the start-bit edge)
  Prefix below;    // valid && f < 1550
  Prefix sync;     // valid && f < 1350
  Prefix porch;    // valid && 1350 <= f < 1700
  std::vector<double> f;

  double samples_per_ms() const { return rate / 1000.0; }
  std::ptrdiff_t ms(double v) const { return static_cast<std::ptrdiff_t>(std::llround(v * samples_per_ms())); }

  /// Mean frequency over valid samples in [a, b); NaN when none are valid.
  double mean_hz(std::ptrdiff_t a, std::ptrdiff_t b) const {
    const double c = valid.sum(a, b);
    return c > 0 ? freq.sum(a, b) / c : std::numeric_limits<double>::quiet_NaN();
  }
};

Analysis analyse(const AudioBuffer& buf) {
  Analysis a;
  a.rate = buf.rate;
  a.n = buf.size();
  std::vector<double> power;
  a.f = frequency_track(buf.samples, buf.rate, &power);
  const double peak = power.empty() ? 0.0 : *std::max_element(power.begin(), power.end());
  const double gate = 0.05 * peak;
  std::vector<std::uint8_t> ok(a.n);
  for (std::size_t i = 0; i < a.n; ++i) ok[i] = peak > 0.0 && power[i] >= gate;
  const auto& f = a.f;
  a.valid = Prefix(a.n, [&](std::size_t i) { return ok[i] ? 1.0 : 0.0; });
  a.freq = Prefix(a.n, [&](std::size_t i) { return ok[i] ? f[i] : 0.0; });
  a.above = Prefix(a.n, [&](std::size_t i) { return ok[i] && f[i] > 1550.0 ? 1.0 : 0.0; });
  a.below = Prefix(a.n, [&](std::size_t i) { return ok[i] && f[i] < 1550.0 ? 1.0 : 0.0; });
  a.sync = Prefix(a.n, [&](std::size_t i) { return ok[i] && f[i] < 1350.0 ? 1.0 : 0.0; });
  a.porch = Prefix(a.n, [&](std::size_t i) { return ok[i] && f[i] >= 1350.0 && f[i] < 1700.0 ? 1.0 : 0.0; });
  return a;
}

/// Index maximizing `score` over [lo, hi]; the centre of the best plateau.
template <typename Fn>
std::pair<std::ptrdiff_t, double> best_edge(std::ptrdiff_t lo, std::ptrdiff_t hi, Fn&& score) {
  double best = -1.0;
  std::ptrdiff_t first = lo, last = lo;
  for (std::ptrdiff_t e = lo; e <= hi; ++e) {
    const double s = score(e);
    if (s > best) {
      best = s;
      first = last = e;
    } else if (s == best && last == e - 1) {
      last = e;
    }
  }
  return {(first + last) / 2, best};
}

struct VisMatch {
  std::ptrdiff_t start_edge = -1;  // sample index where the start bit begins
  int code = -1;
  bool parity_ok = false;
};

/// Finds the first Robot36 VIS header. Diagnostics for rejected headers go to `why`.
std::optional<VisMatch> find_vis(const Analysis& a, std::string& why) {
  const double spm = a.samples_per_ms();
  const auto total_ms = static_cast<std::ptrdiff_t>(static_cast<double>(a.n) / spm);
  why = "no Robot36 VIS header found";

  // Coarse 1 ms grid of mean frequencies.
  std::vector<double> grid(static_cast<std::size_t>(std::max<std::ptrdiff_t>(total_ms, 0)));
  std::vector<std::uint8_t> near_leader(grid.size()), near_sync(grid.size());
  for (std::size_t m = 0; m < grid.size(); ++m) {
    const auto lo = static_cast<std::ptrdiff_t>(std::llround(static_cast<double>(m) * spm));
    const auto hi = static_cast<std::ptrdiff_t>(std::llround(static_cast<double>(m + 1) * spm));
    grid[m] = a.valid.sum(lo, hi) >= 0.5 * static_cast<double>(hi - lo) ? a.mean_hz(lo, hi)
                                                                        : std::numeric_limits<double>::quiet_NaN();
    near_leader[m] = std::abs(grid[m] - r36::kLeaderHz) < 100.0;
    near_sync[m] = std::abs(grid[m] - r36::kVisStartHz) < 100.0;
  }
  const Prefix leader(grid.size(), [&](std::size_t m) { return double(near_leader[m]); });
  const Prefix start(grid.size(), [&](std::size_t m) { return double(near_sync[m]); });

  const auto bit_ms = static_cast<std::ptrdiff_t>(r36::kVisBitMs);
  for (std::ptrdiff_t m = 290; m + 10 * bit_ms < total_ms; ++m) {
    if (leader.sum(m - 290, m - 10) < 0.8 * 280) continue;
    if (start.sum(m + 5, m + 25) < 0.8 * 20) continue;

    // Refine to the exact 1900 -> 1200 Hz edge.
    const auto centre = static_cast<std::ptrdiff_t>(std::llround(static_cast<double>(m) * spm));
    const auto w = a.ms(10);
    auto [edge, score] = best_edge(centre - w, centre + w, [&](std::ptrdiff_t e) {
      return a.above.sum(e - w, e) + a.below.sum(e, e + w);
    });
    (void)score;

    const auto bit = a.ms(r36::kVisBitMs);
    const auto margin = a.ms(5);
    auto bit_hz = [&](int slot) { return a.mean_hz(edge + slot * bit + margin, edge + (slot + 1) * bit - margin); };

    int code = 0, parity = 0;
    bool tones_ok = true;
    for (int b = 0; b < 8; ++b) {
      const double hz = bit_hz(b + 1);
      if (!(std::abs(hz - r36::kVisOneHz) < 100.0 || std::abs(hz - r36::kVisZeroHz) < 100.0)) tones_ok = false;
      const int v = hz < 1200.0 ? 1 : 0;
      parity ^= v;
      if (b < 7) code |= v << b;
    }
    const bool stop_ok = std::abs(bit_hz(9) - r36::kVisStopHz) < 100.0;
    if (!tones_ok || !stop_ok) continue;
    if (parity != 0) {
      why = "VIS parity error";
      m += 5;
      continue;
    }
    if (code != r36::kVisCode) {
      why = "unsupported VIS code " + std::to_string(code) + " (Robot36 is 8)";
      m += 300;
      continue;
    }
    return VisMatch{edge, code, true};
  }
  return std::nullopt;
}

}  // namespace

bool sstv_detect(const AudioBuffer& input) {
  const AudioBuffer buf =
      input.rate == audio::kCanonicalRate ? input : audio::resample_linear(input, audio::kCanonicalRate);
  std::string why;
  return find_vis(analyse(buf), why).has_value();
}

DecodeResult sstv_decode(const AudioBuffer& input, const RowCallback& on_row) {
  const AudioBuffer buf =
      input.rate == audio::kCanonicalRate ? input : audio::resample_linear(input, audio::kCanonicalRate);
  const Analysis a = analyse(buf);
  std::string why;
  const auto vis = find_vis(a, why);
  if (!vis) throw DecodeError("sstv: " + why);

  DecodeResult result{ImageRaster(r36::kWidth, r36::kLines), {}};
  DecodeReport& rep = result.report;
  rep.vis_ok = true;
  rep.vis_code = vis->code;
  rep.start_seconds = static_cast<double>(vis->start_edge) / buf.rate;
  rep.sync_error_ms.assign(r36::kLines, std::numeric_limits<double>::quiet_NaN());

  const double spm = a.samples_per_ms();
  const double line0 = static_cast<double>(vis->start_edge) + r36::kVisMs * spm;
  const auto sync_len = a.ms(r36::kSyncMs);
  const auto porch_len = a.ms(r36::kPorchMs);
  const auto search = a.ms(3);
  const double luma_px = r36::kLumaMs * spm / r36::kWidth;
  const double chroma_px = r36::kChromaMs * spm / r36::kWidth;
  const double chroma_offset = (r36::kPorchMs + r36::kLumaMs + r36::kSeparatorMs + r36::kChromaPorchMs) * spm;

  std::vector<std::vector<double>> luma(r36::kLines, std::vector<double>(r36::kWidth, 0.0));
  std::vector<double> cr(r36::kWidth, 128.0), cb(r36::kWidth, 128.0);
  double offset = 0.0;  // measured minus nominal, carried across lines
  double error_sum = 0.0;

  // Pixel windows stay clear of the neighbouring segments, which the
  // discriminator's low-pass smears across the boundary.
  const double guard = 0.35 * spm;
  auto measure = [&](std::span<const double> track, double start, double per_px, std::vector<double>& hz) {
    const Prefix sums(track.size(), [&](std::size_t i) { return track[i]; });
    const double first = start + guard + per_px / 2;
    const double last = start + r36::kWidth * per_px - guard - per_px / 2;
    for (int x = 0; x < r36::kWidth; ++x) {
      const double centre = std::clamp(start + (x + 0.5) * per_px, first, last);
      const auto lo = static_cast<std::ptrdiff_t>(std::llround(centre - per_px / 2));
      const auto hi = static_cast<std::ptrdiff_t>(std::llround(centre + per_px / 2));
      hz[static_cast<std::size_t>(x)] = sums.mean(lo, hi);
    }
  };

  // One analysis-by-synthesis pass: re-modulate the first estimate with its
  // neighbouring tones, run it through the same discriminator and correct by
  // the residual. This undoes most of the smear at sharp transitions.
  constexpr double kResidualDeadbandHz = 8.0;
  std::vector<double> hz(r36::kWidth), synth_hz(r36::kWidth);
  auto scan = [&](double start, double per_px, double before_hz, double after_hz, std::vector<double>& out) {
    const auto lo = static_cast<std::ptrdiff_t>(std::floor(start)) - a.ms(1.5);
    const auto hi = static_cast<std::ptrdiff_t>(std::ceil(start + r36::kWidth * per_px)) + a.ms(1.5);
    std::vector<double> window(static_cast<std::size_t>(hi - lo));
    for (std::ptrdiff_t i = lo; i < hi; ++i) {
      const bool inside = i >= 0 && i < static_cast<std::ptrdiff_t>(a.n);
      window[static_cast<std::size_t>(i - lo)] = inside && a.valid.sum(i, i + 1) > 0 ? a.f[static_cast<std::size_t>(i)] : 0.0;
    }
    const double local = start - static_cast<double>(lo);
    measure(window, local, per_px, hz);
    for (int x = 0; x < r36::kWidth; ++x) out[static_cast<std::size_t>(x)] = clamp255(hz_to_value(hz[static_cast<std::size_t>(x)]));

    AudioBuffer model(buf.rate);
    audio::Oscillator osc(buf.rate);
    const auto first_px = static_cast<std::size_t>(std::llround(local));
    osc.append_samples(model, before_hz, first_px);
    std::size_t at = first_px;
    for (int x = 0; x < r36::kWidth; ++x) {
      const auto end = static_cast<std::size_t>(std::llround(local + (x + 1) * per_px));
      osc.append_samples(model, value_to_hz(out[static_cast<std::size_t>(x)]), end - at);
      at = end;
    }
    osc.append_samples(model, after_hz, window.size() - at);
    const auto model_track = frequency_track(model.samples, model.rate);
    measure(model_track, local, per_px, synth_hz);
    for (int x = 0; x < r36::kWidth; ++x) {
      const auto i = static_cast<std::size_t>(x);
      // Soft threshold: small residuals are mostly noise, leave them alone.
      const double r = hz[i] - synth_hz[i];
      const double shrunk = std::copysign(std::max(std::abs(r) - kResidualDeadbandHz, 0.0), r);
      out[i] = clamp255(out[i] + shrunk * 255.0 / 800.0);
    }
  };

  for (int line = 0; line < r36::kLines; ++line) {
    const double nominal_end = line0 + line * r36::kLineMs * spm + static_cast<double>(sync_len);
    const auto expected = static_cast<std::ptrdiff_t>(std::llround(nominal_end + offset));
    auto [end, score] = best_edge(expected - search, expected + search, [&](std::ptrdiff_t e) {
      return a.sync.sum(e - sync_len, e) + a.porch.sum(e, e + porch_len);
    });
    const bool synced = score >= 0.6 * static_cast<double>(sync_len + porch_len);

    const bool even = (line % 2) == 0;
    auto& chroma = even ? cr : cb;
    if (synced) {
      ++rep.lines_synced;
      offset = static_cast<double>(end) - nominal_end;
      const double err = offset / spm;
      rep.sync_error_ms[static_cast<std::size_t>(line)] = err;
      error_sum += std::abs(err);
      const double luma_start = static_cast<double>(end) + static_cast<double>(porch_len);
      scan(luma_start, luma_px, r36::kPorchHz, even ? r36::kEvenSeparatorHz : r36::kOddSeparatorHz,
           luma[static_cast<std::size_t>(line)]);
      scan(static_cast<double>(end) + chroma_offset, chroma_px, r36::kChromaPorchHz, r36::kSyncHz, chroma);
    } else {
      ++rep.lines_lost;
      if (line > 0) luma[static_cast<std::size_t>(line)] = luma[static_cast<std::size_t>(line - 1)];
      // chroma keeps the previous pair's values
    }

    if (!even) {
      for (int r = line - 1; r <= line; ++r) {
        for (int x = 0; x < r36::kWidth; ++x) {
          const Rgb p = ycrcb_to_rgb({luma[static_cast<std::size_t>(r)][static_cast<std::size_t>(x)],
                                      cr[static_cast<std::size_t>(x)], cb[static_cast<std::size_t>(x)]});
          result.image.set(x, r, p);
        }
        if (on_row) on_row(r, result.image.row(r));
      }
    }
  }
  rep.mean_sync_error_ms = rep.lines_synced > 0 ? error_sum / rep.lines_synced : 0.0;
  return result;
}

}  // namespace cubesim::sstv
