#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "cubesim/dtmf.hpp"

namespace cubesim::dtmf {

namespace {
constexpr double kBlockSeconds = 0.020;
constexpr int kBlocksToRegister = 2;  // 40 ms
constexpr int kBlocksToRelease = 2;   // 40 ms
constexpr double kDominance = 4.0;
constexpr double kMaxTwist = 10.0;         // row/column power ratio, either way
constexpr double kMinToneFraction = 0.5;   // of the block energy carried by the two tones

constexpr std::array<std::uint8_t, 16> kCodes = {
    // row-major over kGrid
    0x1, 0x2, 0x3, 0xD,  //
    0x4, 0x5, 0x6, 0xE,  //
    0x7, 0x8, 0x9, 0xF,  //
    0xB, 0xA, 0xC, 0x0,
};
}  // namespace

std::optional<GridPosition> grid_position(char symbol) noexcept {
  for (int r = 0; r < 4; ++r) {
    const auto c = kGrid[static_cast<std::size_t>(r)].find(symbol);
    if (c != std::string_view::npos) return GridPosition{r, static_cast<int>(c)};
  }
  return std::nullopt;
}

bool is_symbol(char c) noexcept { return grid_position(c).has_value(); }

std::uint8_t mt8870_code(char symbol) {
  const auto pos = grid_position(symbol);
  if (!pos) throw std::invalid_argument(std::string("not a DTMF symbol: '") + symbol + "'");
  return kCodes[static_cast<std::size_t>(pos->row * 4 + pos->col)];
}

char symbol_for_code(std::uint8_t code) {
  for (std::size_t i = 0; i < kCodes.size(); ++i)
    if (kCodes[i] == (code & 0xF)) return kGrid[i / 4][i % 4];
  return '?';
}

audio::AudioBuffer dtmf_encode(std::string_view symbols, ToneTiming timing, int rate, double amplitude) {
  if (timing.tone_ms < 40.0 || timing.gap_ms < 40.0) throw std::invalid_argument("dtmf: tone and gap must be >= 40 ms");
  audio::AudioBuffer buf(rate);
  const auto tone_len = static_cast<std::size_t>(std::llround(timing.tone_ms * rate / 1000.0));
  const auto gap_len = static_cast<std::size_t>(std::llround(timing.gap_ms * rate / 1000.0));
  for (char s : symbols) {
    const auto pos = grid_position(s);
    if (!pos) throw std::invalid_argument(std::string("dtmf: unknown symbol '") + s + "'");
    const double wr = 2.0 * std::numbers::pi * kRowHz[static_cast<std::size_t>(pos->row)] / rate;
    const double wc = 2.0 * std::numbers::pi * kColHz[static_cast<std::size_t>(pos->col)] / rate;
    for (std::size_t n = 0; n < tone_len; ++n) {
      const double t = static_cast<double>(n);
      buf.samples.push_back(0.5 * amplitude * (std::sin(wr * t) + std::sin(wc * t)));
    }
    buf.samples.resize(buf.samples.size() + gap_len, 0.0);
  }
  return buf;
}

std::optional<char> classify_block(std::span<const double> block, int rate) {
  double energy = 0.0;
  for (double x : block) energy += x * x;
  if (!(energy > 0.0)) return std::nullopt;

  std::array<double, 4> row{}, col{};
  for (std::size_t i = 0; i < 4; ++i) {
    row[i] = audio::goertzel_power(block, rate, kRowHz[i]);
    col[i] = audio::goertzel_power(block, rate, kColHz[i]);
  }
  auto dominant = [](const std::array<double, 4>& p) -> std::optional<std::size_t> {
    const auto best = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    for (std::size_t i = 0; i < 4; ++i)
      if (i != best && p[best] < kDominance * p[i]) return std::nullopt;
    return best;
  };
  const auto r = dominant(row);
  const auto c = dominant(col);
  if (!r || !c) return std::nullopt;

  const double pr = row[*r], pc = col[*c];
  if (pr > kMaxTwist * pc || pc > kMaxTwist * pr) return std::nullopt;
  // A sinusoid's Goertzel power relates to its energy by 2|S|^2 / N.
  const double tone_energy = 2.0 * (pr + pc) / static_cast<double>(block.size());
  if (tone_energy < kMinToneFraction * energy) return std::nullopt;
  return kGrid[*r][*c];
}

Decoder::Decoder(int rate, double start_seconds)
    : rate_(rate),
      block_len_(static_cast<std::size_t>(std::llround(kBlockSeconds * rate))),
      start_seconds_(start_seconds) {
  if (rate <= 0) throw std::invalid_argument("dtmf decoder: rate must be positive");
}

void Decoder::feed(std::span<const double> samples) {
  pending_.insert(pending_.end(), samples.begin(), samples.end());
  std::size_t at = 0;
  while (pending_.size() - at >= block_len_) {
    const double t0 = start_seconds_ + static_cast<double>(consumed_) / rate_;
    const double t1 = start_seconds_ + static_cast<double>(consumed_ + block_len_) / rate_;
    process_block(std::span<const double>(pending_).subspan(at, block_len_), t0, t1);
    consumed_ += block_len_;
    at += block_len_;
  }
  pending_.erase(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(at));
}

void Decoder::process_block(std::span<const double> block, double t0, double t1) {
  const auto sym = classify_block(block, rate_);

  if (active_) {
    if (sym == active_) {
      misses_ = 0;
      active_end_ = t1;
      return;
    }
    if (++misses_ < kBlocksToRelease) return;
    ready_.push_back({mt8870_code(*active_), active_start_, active_end_});
    active_.reset();
  }

  if (!sym) {
    candidate_.reset();
    candidate_run_ = 0;
    return;
  }
  if (sym == candidate_) {
    ++candidate_run_;
  } else {
    candidate_ = sym;
    candidate_run_ = 1;
    candidate_start_ = t0;
  }
  if (candidate_run_ >= kBlocksToRegister) {
    active_ = candidate_;
    active_start_ = candidate_start_;
    active_end_ = t1;
    misses_ = 0;
    candidate_.reset();
    candidate_run_ = 0;
  }
}

void Decoder::flush() {
  if (active_) {
    ready_.push_back({mt8870_code(*active_), active_start_, active_end_});
    active_.reset();
  }
  candidate_.reset();
  candidate_run_ = 0;
}

std::vector<Mt8870Event> Decoder::take_events() {
  std::vector<Mt8870Event> out;
  out.swap(ready_);
  return out;
}

std::vector<Mt8870Event> dtmf_decode(const audio::AudioBuffer& buf) {
  Decoder d(buf.rate);
  d.feed(buf.samples);
  d.flush();
  return d.take_events();
}

}  // namespace cubesim::dtmf
