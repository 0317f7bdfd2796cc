#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cubesim/audio.hpp"
#include "cubesim/raster.hpp"

namespace cubesim::sstv {

/// Robot36 mode table. Durations in milliseconds, tones in Hz.
namespace robot36 {
inline constexpr int kVisCode = 8;
inline constexpr int kWidth = 320;
inline constexpr int kLines = 240;

inline constexpr double kLeaderHz = 1900, kLeaderMs = 300;
inline constexpr double kBreakHz = 1200, kBreakMs = 10;
inline constexpr double kVisBitMs = 30;
inline constexpr double kVisStartHz = 1200, kVisStopHz = 1200;
inline constexpr double kVisOneHz = 1100, kVisZeroHz = 1300;

inline constexpr double kSyncHz = 1200, kSyncMs = 9;
inline constexpr double kPorchHz = 1500, kPorchMs = 3;
inline constexpr double kLumaMs = 88;
inline constexpr double kSeparatorMs = 4.5;
inline constexpr double kEvenSeparatorHz = 1500;  // R-Y follows
inline constexpr double kOddSeparatorHz = 2300;   // B-Y follows
inline constexpr double kChromaPorchHz = 1900, kChromaPorchMs = 1.5;
inline constexpr double kChromaMs = 44;

inline constexpr double kBlackHz = 1500, kWhiteHz = 2300;

inline constexpr double kHeaderMs = 2 * kLeaderMs + kBreakMs;  // 610
inline constexpr double kVisMs = 10 * kVisBitMs;                 // start + 7 data + parity + stop
inline constexpr double kLineMs = kSyncMs + kPorchMs + kLumaMs + kSeparatorMs + kChromaPorchMs + kChromaMs;
inline constexpr double kTotalMs = kHeaderMs + kVisMs + kLines * kLineMs;

static_assert(kLineMs == 150.0);
static_assert(kTotalMs == 36910.0);
}  // namespace robot36

/// f(v) = 1500 + 800 v / 255.
constexpr double value_to_hz(double v) noexcept { return robot36::kBlackHz + 800.0 * v / 255.0; }
constexpr double hz_to_value(double hz) noexcept { return (hz - robot36::kBlackHz) * 255.0 / 800.0; }

/// BT.601 full-range luma and scaled colour differences, clamped to [0, 255].
struct YCrCb {
  double y, cr, cb;
};

YCrCb rgb_to_ycrcb(Rgb p) noexcept;
Rgb ycrcb_to_rgb(YCrCb c) noexcept;

/// Encodes a 320x240 raster as one Robot36 transmission.
audio::AudioBuffer sstv_encode(const ImageRaster& img, int rate = audio::kCanonicalRate,
                               double amplitude = audio::kDefaultAmplitude);

struct DecodeReport {
  bool vis_ok = false;
  int vis_code = -1;
  int lines_total = robot36::kLines;
  int lines_synced = 0;
  int lines_lost = 0;
  double mean_sync_error_ms = 0.0;
  std::vector<double> sync_error_ms;  // per line, NaN when the line was lost
  double start_seconds = 0.0;         // onset of the VIS start bit
};

struct DecodeResult {
  ImageRaster image;
  DecodeReport report;
};

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Called once per finished raster row, in row order. `rgb` holds width*3 bytes.
using RowCallback = std::function<void(int row, std::span<const std::uint8_t> rgb)>;

/// Locates the VIS header, verifies the mode, then decodes every line.
/// Throws DecodeError when no Robot36 header is present.
DecodeResult sstv_decode(const audio::AudioBuffer& buf, const RowCallback& on_row = {});

/// Cheap check used for segment classification: true when a Robot36 VIS header is found.
bool sstv_detect(const audio::AudioBuffer& buf);

/// Instantaneous-frequency track of a buffer, one value per sample.
/// `power` receives the baseband envelope power when non-null.
std::vector<double> frequency_track(std::span<const double> samples, int rate, std::vector<double>* power = nullptr);

}  // namespace cubesim::sstv
