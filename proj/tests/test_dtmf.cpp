#include <algorithm>
#include <random>
#include <regex>
#include <set>

#include "cubesim/dtmf.hpp"
#include "cubesim/rng.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace cubesim;
using namespace cubesim::dtmf;

namespace {

/// Events for a symbol string at the default 80/80 ms cadence.
std::vector<Mt8870Event> events_for(std::string_view symbols, double t0 = 0.0, double step = 0.16) {
  std::vector<Mt8870Event> out;
  double t = t0;
  for (char c : symbols) {
    out.push_back({mt8870_code(c), t, t + 0.08});
    t += step;
  }
  return out;
}

std::string symbols_of(const std::vector<Mt8870Event>& evs) {
  std::string s;
  for (const auto& e : evs) s.push_back(e.symbol());
  return s;
}

/// Grammar oracle written from the command table, independent of the assembler.
std::optional<UplinkCommand> oracle_parse(const std::string& span) {
  static const std::regex re(R"(^\*([0-9]{2})([0-9]*)([0-9])#$)");
  std::smatch m;
  if (!std::regex_match(span, m, re)) return std::nullopt;
  const std::string op = m[1], args = m[2];
  int sum = 0;
  for (char c : op + args) sum += c - '0';
  if (sum % 10 != std::stoi(m[3])) return std::nullopt;
  const int n = std::stoi(op);
  const std::size_t maxa[] = {0, 8, 0, 3, 0, 1, 0};
  const std::size_t mina[] = {0, 0, 0, 0, 0, 1, 0};
  if (n < 1 || n > 6) return std::nullopt;
  if (args.size() < mina[n] || args.size() > maxa[n]) return std::nullopt;
  return UplinkCommand{static_cast<Opcode>(n), args};
}

}  // namespace

TEST_CASE("MT8870 truth table") {
  const std::string order = "D1234567890*#ABC";
  for (std::uint8_t code = 0; code < 16; ++code) {
    CHECK(mt8870_code(order[code]) == code);
    CHECK(symbol_for_code(code) == order[code]);
  }
}

TEST_CASE("the 16 symbols map bijectively onto 4-bit codes") {
  std::set<std::uint8_t> codes;
  for (auto row : kGrid)
    for (char c : row) codes.insert(mt8870_code(c));
  CHECK(codes.size() == 16);
  CHECK(*codes.rbegin() == 15);
  CHECK_THROWS_AS(mt8870_code('E'), std::invalid_argument);
}

TEST_CASE("grid positions follow the keypad") {
  CHECK(grid_position('5')->row == 1);
  CHECK(grid_position('5')->col == 1);
  CHECK(grid_position('#')->row == 3);
  CHECK(grid_position('#')->col == 2);
  CHECK_FALSE(grid_position('x'));
}

TEST_CASE("symbol '1' is 697 + 1209 Hz") {
  const auto a = dtmf_encode("1");
  CHECK(a.size() == static_cast<std::size_t>(0.16 * 48000));
  const std::size_t tone = static_cast<std::size_t>(0.08 * 48000);
  const double low = audio::goertzel_power(a, 697.0, 0, tone);
  const double high = audio::goertzel_power(a, 1209.0, 0, tone);
  for (double f : {770.0, 852.0, 941.0, 1336.0, 1477.0, 1633.0}) {
    const double other = audio::goertzel_power(a, f, 0, tone);
    CHECK(low >= 50.0 * other);
    CHECK(high >= 50.0 * other);
  }
  CHECK(high == doctest::Approx(low).epsilon(0.05));
}

TEST_CASE("encoder rules") {
  CHECK(dtmf_encode("").empty());
  CHECK_THROWS_AS(dtmf_encode("12x"), std::invalid_argument);
  CHECK_THROWS_AS(dtmf_encode("1", {30.0, 80.0}), std::invalid_argument);
  CHECK_THROWS_AS(dtmf_encode("1", {80.0, 30.0}), std::invalid_argument);
}

TEST_CASE("every symbol round trips to one event with its code") {
  for (auto row : kGrid)
    for (char c : row) {
      const auto evs = dtmf_decode(dtmf_encode(std::string(1, c)));
      REQUIRE(evs.size() == 1);
      CHECK(evs[0].code == mt8870_code(c));
      CHECK(evs[0].t_start >= 0.0);
      CHECK(evs[0].t_end <= 0.2);
    }
}

TEST_CASE("whole alphabet round trips across amplitudes") {
  const std::string all = "123A456B789C*0#D";
  for (double amp : {0.1, 0.3, 0.6, 0.9}) {
    const auto evs = dtmf_decode(dtmf_encode(all, {}, 48000, amp));
    CHECK(symbols_of(evs) == all);
  }
}

TEST_CASE("minimum timing still decodes") {
  CHECK(symbols_of(dtmf_decode(dtmf_encode("*022#", {40.0, 40.0}))) == "*022#");
}

TEST_CASE("single tones produce no events") {
  for (double f : {697.0, 770.0, 852.0, 941.0, 1209.0, 1336.0, 1477.0, 1633.0}) {
    audio::AudioBuffer b(std::vector<double>(oracle::sine(f, 0.6, 48000, 48000)), 48000);
    CHECK_MESSAGE(dtmf_decode(b).empty(), f);
  }
}

TEST_CASE("two tones from the same group produce no events") {
  for (auto [f1, f2] : {std::pair{697.0, 770.0}, {852.0, 941.0}, {1209.0, 1336.0}, {1477.0, 1633.0}}) {
    auto a = oracle::sine(f1, 0.4, 48000, 48000);
    const auto b = oracle::sine(f2, 0.4, 48000, 48000);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    CHECK(dtmf_decode(audio::AudioBuffer(a, 48000)).empty());
  }
}

TEST_CASE("white noise produces no events") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed)
    for (double sigma : {0.05, 0.3}) {
      GaussianSource g(seed);
      std::vector<double> x(48000 * 3);
      for (auto& v : x) v = std::clamp(sigma * g.next(), -1.0, 1.0);
      CHECK(dtmf_decode(audio::AudioBuffer(x, 48000)).empty());
    }
}

TEST_CASE("streaming decoder matches batch decoding for any chunking") {
  const auto a = dtmf_encode("*0527#");
  const auto batch = dtmf_decode(a);
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    Decoder d;
    std::size_t at = 0;
    std::vector<Mt8870Event> got;
    while (at < a.size()) {
      const std::size_t n = std::min<std::size_t>(1 + rng() % 3000, a.size() - at);
      d.feed(std::span<const double>(a.samples).subspan(at, n));
      at += n;
      auto evs = d.take_events();
      got.insert(got.end(), evs.begin(), evs.end());
    }
    d.flush();
    auto evs = d.take_events();
    got.insert(got.end(), evs.begin(), evs.end());
    CHECK(got == batch);
  }
}

TEST_CASE("'*022#' survives 15 dB AWGN") {
  const auto clean = dtmf_encode("*022#");
  int ok = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed)
    ok += symbols_of(dtmf_decode(audio::awgn_apply(clean, 15.0, seed))) == "*022#";
  CHECK(ok == 10);
}

TEST_CASE("command encoding examples") {
  CHECK(command_encode(Opcode::Ping) == "*011#");
  CHECK(command_encode(Opcode::Capture) == "*022#");
  CHECK(command_encode(Opcode::SetMode, "2") == "*0527#");
  CHECK(command_encode(Opcode::DownlinkImage, "12") == "*03126#");
  CHECK_THROWS_AS(command_encode(Opcode::SetMode), std::invalid_argument);
  CHECK_THROWS_AS(command_encode(Opcode::Capture, "1"), std::invalid_argument);
  CHECK_THROWS_AS(command_encode(Opcode::Ping, "12a"), std::invalid_argument);
  CHECK_THROWS_AS(command_encode(static_cast<Opcode>(9)), std::invalid_argument);
}

TEST_CASE("opcode lookup") {
  CHECK(opcode_from_string("PING") == Opcode::Ping);
  CHECK(opcode_from_string("05") == Opcode::SetMode);
  CHECK_FALSE(opcode_from_string("07"));
  CHECK_FALSE(opcode_from_string("ping"));
  CHECK_FALSE(opcode_from_number(0));
}

TEST_CASE("parse diagnostics") {
  auto kind_of = [](std::string_view s) {
    const auto evs = events_for(s);
    const auto p = command_parse(evs);
    REQUIRE_FALSE(p.command);
    REQUIRE(p.diagnostics.size() == 1);
    return p.diagnostics[0].kind;
  };
  CHECK(kind_of("*012#") == UplinkDiagnostic::Kind::BadChecksum);
  CHECK(kind_of("*077#") == UplinkDiagnostic::Kind::UnknownOpcode);
  CHECK(kind_of("*055#") == UplinkDiagnostic::Kind::BadArity);
  CHECK(kind_of("*0224#") == UplinkDiagnostic::Kind::BadArity);
  CHECK(kind_of("*0A11#") == UplinkDiagnostic::Kind::BadSymbol);
  CHECK(kind_of("*01#") == UplinkDiagnostic::Kind::BadArity);
  CHECK(kind_of("*011111111111#") == UplinkDiagnostic::Kind::TooLong);
}

TEST_CASE("symbols outside a span are ignored and a new '*' restarts") {
  const auto p = command_parse(events_for("12#*0*022#"));
  REQUIRE(p.command);
  CHECK(p.command->opcode == Opcode::Capture);
  CHECK(p.diagnostics.empty());
}

TEST_CASE("a gap over two seconds aborts the span") {
  auto evs = events_for("*02");
  auto tail = events_for("2#", evs.back().t_end + 2.5);
  evs.insert(evs.end(), tail.begin(), tail.end());
  const auto p = command_parse(evs);
  CHECK_FALSE(p.command);
  REQUIRE(p.diagnostics.size() == 1);
  CHECK(p.diagnostics[0].kind == UplinkDiagnostic::Kind::GapTimeout);

  auto ok = events_for("*02");
  auto late = events_for("2#", ok.back().t_end + 1.9);
  ok.insert(ok.end(), late.begin(), late.end());
  CHECK(command_parse(ok).command);
}

TEST_CASE("assembler agrees with the grammar oracle on every short span") {
  std::size_t accepted = 0;
  for (int op = 0; op < 100; ++op)
    for (int nargs = 0; nargs <= 2; ++nargs) {
      const int limit = nargs == 0 ? 1 : nargs == 1 ? 10 : 100;
      for (int a = 0; a < limit; ++a)
        for (int ck = 0; ck < 10; ++ck) {
          std::string span = "*";
          span += static_cast<char>('0' + op / 10);
          span += static_cast<char>('0' + op % 10);
          if (nargs == 2) span += static_cast<char>('0' + a / 10);
          if (nargs >= 1) span += static_cast<char>('0' + a % 10);
          span += static_cast<char>('0' + ck);
          span += '#';
          const auto evs = events_for(span);
          const auto got = command_parse(evs);
          const auto want = oracle_parse(span);
          REQUIRE_MESSAGE(got.command == want, span);
          if (!want) REQUIRE(got.diagnostics.size() == 1);
          accepted += want.has_value();
        }
    }
  CHECK(accepted == 111 + 1 + 111 + 1 + 10 + 1);
}

TEST_CASE("random PING tokens round trip through audio") {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 5; ++i) {
    std::string token;
    for (std::size_t n = rng() % 9; n > 0; --n) token.push_back(static_cast<char>('0' + rng() % 10));
    const UplinkCommand cmd{Opcode::Ping, token};
    const auto evs = dtmf_decode(command_audio(cmd));
    const auto p = command_parse(evs);
    REQUIRE(p.command);
    CHECK(*p.command == cmd);
  }
}
