#include <cctype>
#include <stdexcept>

#include "cubesim/dtmf.hpp"

namespace cubesim::dtmf {

const char* opcode_name(Opcode op) noexcept {
  switch (op) {
    case Opcode::Ping: return "PING";
    case Opcode::Capture: return "CAPTURE";
    case Opcode::DownlinkImage: return "DOWNLINK_IMAGE";
    case Opcode::DownlinkTelemetry: return "DOWNLINK_TELEMETRY";
    case Opcode::SetMode: return "SET_MODE";
    case Opcode::Reboot: return "REBOOT";
  }
  return "UNKNOWN";
}

std::optional<Opcode> opcode_from_number(int n) noexcept {
  if (n >= 1 && n <= 6) return static_cast<Opcode>(n);
  return std::nullopt;
}

std::optional<Opcode> opcode_from_string(std::string_view s) noexcept {
  if (s.size() == 2 && std::isdigit(static_cast<unsigned char>(s[0])) && std::isdigit(static_cast<unsigned char>(s[1])))
    return opcode_from_number((s[0] - '0') * 10 + (s[1] - '0'));
  for (int n = 1; n <= 6; ++n)
    if (s == opcode_name(static_cast<Opcode>(n))) return static_cast<Opcode>(n);
  return std::nullopt;
}

Arity arity(Opcode op) noexcept {
  switch (op) {
    case Opcode::Ping: return {0, 8};            // optional token echoed in the ack
    case Opcode::DownlinkImage: return {0, 3};   // optional image id, default latest
    case Opcode::SetMode: return {1, 1};
    case Opcode::Capture:
    case Opcode::DownlinkTelemetry:
    case Opcode::Reboot: return {0, 0};
  }
  return {0, 0};
}

const char* uplink_diagnostic_name(UplinkDiagnostic::Kind k) noexcept {
  switch (k) {
    case UplinkDiagnostic::Kind::BadChecksum: return "bad-checksum";
    case UplinkDiagnostic::Kind::UnknownOpcode: return "unknown-opcode";
    case UplinkDiagnostic::Kind::BadArity: return "bad-arity";
    case UplinkDiagnostic::Kind::BadSymbol: return "bad-symbol";
    case UplinkDiagnostic::Kind::GapTimeout: return "gap-timeout";
    case UplinkDiagnostic::Kind::TooLong: return "too-long";
  }
  return "unknown";
}

namespace {

int digit_sum(std::string_view digits) {
  int s = 0;
  for (char c : digits) s += c - '0';
  return s;
}

bool all_digits(std::string_view s) {
  for (char c : s)
    if (c < '0' || c > '9') return false;
  return true;
}

std::string two_digits(int n) { return {static_cast<char>('0' + n / 10), static_cast<char>('0' + n % 10)}; }

}  // namespace

std::string command_encode(Opcode op, std::string_view args) {
  const int n = static_cast<int>(op);
  if (!opcode_from_number(n)) throw std::invalid_argument("unknown opcode " + std::to_string(n));
  if (!all_digits(args)) throw std::invalid_argument("command arguments must be decimal digits");
  const Arity a = arity(op);
  if (static_cast<int>(args.size()) < a.min || static_cast<int>(args.size()) > a.max)
    throw std::invalid_argument(std::string(opcode_name(op)) + " takes " + std::to_string(a.min) + ".." +
                                std::to_string(a.max) + " argument digits, got " + std::to_string(args.size()));
  const std::string body = two_digits(n) + std::string(args);
  return "*" + body + static_cast<char>('0' + digit_sum(body) % 10) + "#";
}

std::string command_encode(const UplinkCommand& cmd) { return command_encode(cmd.opcode, cmd.args); }

std::optional<SpanOutcome> CommandAssembler::push(const Mt8870Event& ev) {
  const char sym = ev.symbol();
  std::optional<SpanOutcome> out;

  if (in_span_ && ev.t_start - last_end_ > kMaxSymbolGapSeconds) {
    in_span_ = false;
    out = SpanOutcome{std::nullopt,
                      UplinkDiagnostic{UplinkDiagnostic::Kind::GapTimeout,
                                       "symbol gap over 2 s aborted span '*" + digits_ + "'", last_end_},
                      last_end_};
  }
  last_end_ = ev.t_end;

  if (sym == '*') {
    in_span_ = true;
    span_start_ = ev.t_start;
    digits_.clear();
    pending_.reset();
    return out;
  }
  if (!in_span_) return out;

  auto fail = [&](UplinkDiagnostic::Kind k, std::string msg) {
    in_span_ = false;
    return SpanOutcome{std::nullopt, UplinkDiagnostic{k, std::move(msg), ev.t_end}, ev.t_end};
  };

  if (sym != '#') {
    if (sym < '0' || sym > '9') {
      pending_ = UplinkDiagnostic{UplinkDiagnostic::Kind::BadSymbol, std::string("non-digit symbol '") + sym + "' in command", ev.t_end};
    } else {
      digits_.push_back(sym);
    }
    if (digits_.size() > 2 + kMaxArgDigits + 1) return fail(UplinkDiagnostic::Kind::TooLong, "command span exceeds 11 digits");
    return out;
  }

  // '#' closes the span.
  in_span_ = false;
  if (pending_) {
    auto d = *pending_;
    pending_.reset();
    return SpanOutcome{std::nullopt, d, ev.t_end};
  }
  if (digits_.size() < 3) return fail(UplinkDiagnostic::Kind::BadArity, "span '*" + digits_ + "#' too short");
  const std::string body = digits_.substr(0, digits_.size() - 1);
  const int checksum = digits_.back() - '0';
  if (digit_sum(body) % 10 != checksum)
    return fail(UplinkDiagnostic::Kind::BadChecksum,
                "checksum " + std::to_string(checksum) + " != " + std::to_string(digit_sum(body) % 10) + " in '*" + digits_ + "#'");
  const auto op = opcode_from_number((body[0] - '0') * 10 + (body[1] - '0'));
  if (!op) return fail(UplinkDiagnostic::Kind::UnknownOpcode, "unknown opcode " + body.substr(0, 2));
  const std::string args = body.substr(2);
  const Arity a = arity(*op);
  if (static_cast<int>(args.size()) < a.min || static_cast<int>(args.size()) > a.max)
    return fail(UplinkDiagnostic::Kind::BadArity,
                std::string(opcode_name(*op)) + " given " + std::to_string(args.size()) + " argument digits");
  return SpanOutcome{UplinkCommand{*op, args}, std::nullopt, ev.t_end};
}

CommandParse command_parse(std::span<const Mt8870Event> events) {
  CommandParse result;
  CommandAssembler assembler;
  for (const auto& ev : events) {
    auto outcome = assembler.push(ev);
    if (!outcome) continue;
    if (outcome->diagnostic) result.diagnostics.push_back(*outcome->diagnostic);
    if (outcome->command) {
      result.command = outcome->command;
      return result;
    }
  }
  return result;
}

}  // namespace cubesim::dtmf

namespace cubesim::dtmf {

audio::AudioBuffer command_audio(const UplinkCommand& cmd, double pad_seconds, int rate) {
  audio::AudioBuffer out(rate);
  out.append_silence(pad_seconds);
  out.append(dtmf_encode(command_encode(cmd), {}, rate));
  out.append_silence(pad_seconds);
  return out;
}

}  // namespace cubesim::dtmf
