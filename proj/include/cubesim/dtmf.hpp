#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cubesim/audio.hpp"

namespace cubesim::dtmf {

inline constexpr std::array<double, 4> kRowHz{697.0, 770.0, 852.0, 941.0};
inline constexpr std::array<double, 4> kColHz{1209.0, 1336.0, 1477.0, 1633.0};
inline constexpr std::array<std::string_view, 4> kGrid{"123A", "456B", "789C", "*0#D"};

struct GridPosition {
  int row;
  int col;
};

std::optional<GridPosition> grid_position(char symbol) noexcept;
bool is_symbol(char c) noexcept;

/// MT8870 4-bit output for a symbol (1..9 -> 1..9, 0 -> 10, * -> 11, # -> 12, A..C -> 13..15, D -> 0).
std::uint8_t mt8870_code(char symbol);
/// Inverse of mt8870_code.
char symbol_for_code(std::uint8_t code);

struct Mt8870Event {
  std::uint8_t code = 0;
  double t_start = 0.0;  // seconds
  double t_end = 0.0;

  char symbol() const { return symbol_for_code(code); }
  bool operator==(const Mt8870Event&) const = default;
};

struct ToneTiming {
  double tone_ms = 80.0;
  double gap_ms = 80.0;
};

/// Each symbol: row + column sinusoids at half amplitude each, then silence.
audio::AudioBuffer dtmf_encode(std::string_view symbols, ToneTiming timing = {}, int rate = audio::kCanonicalRate,
                               double amplitude = audio::kDefaultAmplitude);

/// Streaming MT8870-style detector. Audio is analysed in 20 ms blocks; a
/// symbol registers after 40 ms of one dominant row and column tone and
/// closes after 40 ms without it.
class Decoder {
 public:
  explicit Decoder(int rate = audio::kCanonicalRate, double start_seconds = 0.0);

  void feed(std::span<const double> samples);
  /// Treats the end of input as a tone drop.
  void flush();
  /// Events closed since the last call.
  std::vector<Mt8870Event> take_events();

 private:
  void process_block(std::span<const double> block, double t0, double t1);

  int rate_;
  std::size_t block_len_;
  double start_seconds_;
  std::uint64_t consumed_ = 0;  // samples analysed so far
  std::vector<double> pending_;
  std::vector<Mt8870Event> ready_;

  std::optional<char> active_;
  double active_start_ = 0.0, active_end_ = 0.0;
  int misses_ = 0;
  std::optional<char> candidate_;
  double candidate_start_ = 0.0;
  int candidate_run_ = 0;
};

/// Which symbol, if any, a single analysis block carries.
std::optional<char> classify_block(std::span<const double> block, int rate);

std::vector<Mt8870Event> dtmf_decode(const audio::AudioBuffer& buf);

// ---------------------------------------------------------------------------
// Uplink command grammar: '*' opcode(2) args(0..8) checksum(1) '#'
// checksum = (sum of opcode and argument digits) mod 10
// ---------------------------------------------------------------------------

enum class Opcode : std::uint8_t {
  Ping = 1,
  Capture = 2,
  DownlinkImage = 3,
  DownlinkTelemetry = 4,
  SetMode = 5,
  Reboot = 6,
};

const char* opcode_name(Opcode op) noexcept;
std::optional<Opcode> opcode_from_number(int n) noexcept;
/// Accepts "01".."06" or a name such as "PING".
std::optional<Opcode> opcode_from_string(std::string_view s) noexcept;

struct Arity {
  int min;
  int max;
};
Arity arity(Opcode op) noexcept;

struct UplinkCommand {
  Opcode opcode = Opcode::Ping;
  std::string args;

  bool operator==(const UplinkCommand&) const = default;
};

inline constexpr double kMaxSymbolGapSeconds = 2.0;
inline constexpr std::size_t kMaxArgDigits = 8;

/// Throws std::invalid_argument for unknown opcodes, non-digit args or bad arity.
std::string command_encode(const UplinkCommand& cmd);
std::string command_encode(Opcode op, std::string_view args = {});

struct UplinkDiagnostic {
  enum class Kind { BadChecksum, UnknownOpcode, BadArity, BadSymbol, GapTimeout, TooLong };
  Kind kind;
  std::string message;
  double t = 0.0;
};

const char* uplink_diagnostic_name(UplinkDiagnostic::Kind k) noexcept;

/// Outcome of one complete '*'..'#' span.
struct SpanOutcome {
  std::optional<UplinkCommand> command;
  std::optional<UplinkDiagnostic> diagnostic;
  double t_end = 0.0;
};

/// Incremental parser fed with decoder events.
class CommandAssembler {
 public:
  std::optional<SpanOutcome> push(const Mt8870Event& ev);

 private:
  bool in_span_ = false;
  std::string digits_;
  double last_end_ = 0.0;
  double span_start_ = 0.0;
  std::optional<UplinkDiagnostic> pending_;
};

struct CommandParse {
  std::optional<UplinkCommand> command;
  std::vector<UplinkDiagnostic> diagnostics;
};

/// Uplink transmission: the command's symbols with `pad_seconds` of silence either side.
audio::AudioBuffer command_audio(const UplinkCommand& cmd, double pad_seconds = 0.3, int rate = audio::kCanonicalRate);

/// Returns the first valid command in `events`, plus diagnostics for any rejected spans before it.
CommandParse command_parse(std::span<const Mt8870Event> events);

}  // namespace cubesim::dtmf
