// cubesim command line: modems, channel model, mission runs and ground tools.
//
// Exit codes: 0 success, 1 decode or validation failure, 2 usage error.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <thread>

#include "CLI11.hpp"
#include "cubesim/afsk.hpp"
#include "cubesim/audio.hpp"
#include "cubesim/dtmf.hpp"
#include "cubesim/groundstation.hpp"
#include "cubesim/raster.hpp"
#include "cubesim/scenario.hpp"
#include "cubesim/service.hpp"
#include "cubesim/sstv.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace cubesim;

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;

std::atomic<bool> g_interrupted{false};
extern "C" void on_signal(int) { g_interrupted = true; }

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Bytes read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Failure("cannot open " + p.string());
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

void write_file(const fs::path& p, std::span<const std::uint8_t> data) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Failure("cannot write " + p.string());
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}

nlohmann::ordered_json report_json(const sstv::DecodeReport& r) {
  return {{"vis_ok", r.vis_ok},
          {"vis_code", r.vis_code},
          {"lines_total", r.lines_total},
          {"lines_synced", r.lines_synced},
          {"lines_lost", r.lines_lost},
          {"mean_sync_error_ms", r.mean_sync_error_ms}};
}

// --- modem ---------------------------------------------------------------

int afsk_mod(const std::string& in, const std::string& out, int ftype) {
  const Bytes data = read_file(in);
  if (data.empty()) throw Failure("input is empty");
  Bytes wire = data;
  if (ftype > 0) {
    if (!afsk::is_known_frame_type(static_cast<std::uint8_t>(ftype))) throw Failure("unknown frame type");
    wire = afsk::frame_encode(static_cast<afsk::FrameType>(ftype), data);
  }
  audio::wav_write(afsk::afsk_modulate(wire), out);
  return kOk;
}

int afsk_demod(const std::string& in, const std::string& out, bool frames) {
  const auto buf = audio::wav_read_canonical(in);
  const Bytes bytes = afsk::afsk_demodulate(buf);
  if (!out.empty()) write_file(out, bytes);
  if (!frames) {
    std::cout << to_hex(bytes) << "\n";
    return bytes.empty() ? kFailure : kOk;
  }
  const auto parsed = afsk::frame_parse(bytes);
  std::int64_t seq = 0;
  for (const auto& pf : parsed.frames) std::cout << gs::frame_json({++seq, 0, 0, pf.frame}) << "\n";
  for (const auto& d : parsed.diagnostics)
    std::cerr << afsk::diagnostic_kind_name(d.kind) << " at byte " << d.offset << ": " << d.detail << "\n";
  return parsed.frames.empty() ? kFailure : kOk;
}

int sstv_mod(const std::string& in, const std::string& out) {
  audio::wav_write(sstv::sstv_encode(ppm_read(in)), out);
  return kOk;
}

int sstv_demod(const std::string& in, const std::string& out) {
  try {
    const auto r = sstv::sstv_decode(audio::wav_read_canonical(in));
    ppm_write(r.image, out);
    std::cout << report_json(r.report).dump() << "\n";
    return kOk;
  } catch (const sstv::DecodeError& e) {
    std::cerr << e.what() << "\n";
    return kFailure;
  }
}

int dtmf_mod(const std::string& symbols, const std::string& out, double tone_ms, double gap_ms) {
  audio::wav_write(dtmf::dtmf_encode(symbols, {tone_ms, gap_ms}), out);
  return kOk;
}

int dtmf_demod(const std::string& in) {
  const auto events = dtmf::dtmf_decode(audio::wav_read_canonical(in));
  std::string symbols;
  for (const auto& e : events) {
    symbols.push_back(e.symbol());
    std::printf("%c code=%2u t=%.3f..%.3f\n", e.symbol(), e.code, e.t_start, e.t_end);
  }
  const auto parsed = dtmf::command_parse(events);
  for (const auto& d : parsed.diagnostics) std::cerr << dtmf::uplink_diagnostic_name(d.kind) << ": " << d.message << "\n";
  if (parsed.command)
    std::cout << "command " << dtmf::opcode_name(parsed.command->opcode) << " args '" << parsed.command->args << "'\n";
  return events.empty() ? kFailure : kOk;
}

// --- run ---------------------------------------------------------------------

int run(const std::string& scenario_path, const std::string& session, const std::string& serve, double pace) {
  const Scenario sc = Scenario::load(scenario_path);
  const fs::path dir(session);
  fs::create_directories(dir);

  if (serve.empty()) {
    const auto s = gs::run_pass(sc, dir, nullptr, {pace, &g_interrupted});
    std::cout << gs::state_json(s) << "\n";
    return kOk;
  }

  const auto [host, port] = gs::parse_bind_address(serve);
  gs::GroundStation ground(sc, dir);
  gs::Service service(ground);
  const int bound = service.start(host, port);
  std::cerr << "serving on http://" << host << ":" << bound << "  (Ctrl-C to stop)\n";
  gs::run_pass(sc, dir, &ground, {pace, &g_interrupted});
  std::cerr << "pass finished; still serving the session\n";
  while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  service.stop();
  return kOk;
}

// --- gs ----------------------------------------------------------------------

int gs_send(const std::string& opcode, const std::string& args, const std::string& out) {
  const auto op = dtmf::opcode_from_string(opcode);
  if (!op) throw CLI::ValidationError("OPCODE", "unknown opcode '" + opcode + "'");
  const dtmf::UplinkCommand cmd{*op, args};
  audio::AudioBuffer buf;
  try {
    buf = gs::gs_uplink(cmd);
  } catch (const std::invalid_argument& e) {
    throw CLI::ValidationError("ARGS", e.what());
  }
  audio::wav_write(buf, out);
  std::cout << dtmf::command_encode(cmd) << "\n";
  return kOk;
}

int gs_decode(const std::string& in, const std::string& session) {
  const fs::path dir(session);
  fs::create_directories(dir);
  const auto out = gs::gs_decode(audio::wav_read_canonical(in));

  std::ofstream frames(dir / "frames.jsonl", std::ios::binary | std::ios::trunc);
  std::int64_t seq = 0;
  for (const auto& pf : out.frames) {
    const auto j = gs::frame_json({++seq, 0, 0, pf.frame});
    frames << j << "\n";
    std::cout << j << "\n";
  }
  nlohmann::ordered_json report{{"frames", out.frames.size()}, {"diagnostics", out.diagnostics}};
  if (out.image) {
    ppm_write(out.image->image, dir / "image.ppm");
    report["image"] = report_json(out.image->report);
  }
  std::ofstream(dir / "decode.json", std::ios::binary) << report.dump(2) << "\n";
  for (const auto& d : out.diagnostics) std::cerr << d << "\n";
  return out.empty() ? kFailure : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cubesim: audio-linked cubesat simulator"};
  app.require_subcommand(1);

  int rc = kOk;
  std::string in, out, symbols, scenario, session, serve, opcode, args;
  int ftype = 0;
  bool frames = false;
  double snr = 20.0, pace = -1.0, tone_ms = 80.0, gap_ms = 80.0;
  std::uint64_t seed = 1;

  auto* modem = app.add_subcommand("modem", "encode or decode audio");
  modem->require_subcommand(1);
  auto* am = modem->add_subcommand("afsk-mod", "bytes file to AFSK audio");
  am->add_option("--in", in, "input bytes")->required()->check(CLI::ExistingFile);
  am->add_option("--out", out, "output WAV")->required();
  am->add_option("--frame", ftype, "wrap the input as a telemetry frame of this type (1-4)");
  am->callback([&] { rc = afsk_mod(in, out, ftype); });

  auto* ad = modem->add_subcommand("afsk-demod", "AFSK audio to bytes");
  ad->add_option("--in", in, "input WAV")->required()->check(CLI::ExistingFile);
  ad->add_option("--out", out, "raw byte output");
  ad->add_flag("--frames", frames, "parse telemetry frames and print them as JSON lines");
  ad->callback([&] { rc = afsk_demod(in, out, frames); });

  auto* sm = modem->add_subcommand("sstv-mod", "P6 image to Robot36 audio");
  sm->add_option("--in", in, "input PPM (320x240)")->required()->check(CLI::ExistingFile);
  sm->add_option("--out", out, "output WAV")->required();
  sm->callback([&] { rc = sstv_mod(in, out); });

  auto* sd = modem->add_subcommand("sstv-demod", "Robot36 audio to P6 image");
  sd->add_option("--in", in, "input WAV")->required()->check(CLI::ExistingFile);
  sd->add_option("--out", out, "output PPM")->required();
  sd->callback([&] { rc = sstv_demod(in, out); });

  auto* dm = modem->add_subcommand("dtmf-mod", "symbols to DTMF audio");
  dm->add_option("--symbols", symbols, "symbols from 0-9 A-D * #")->required();
  dm->add_option("--out", out, "output WAV")->required();
  dm->add_option("--tone-ms", tone_ms, "tone duration")->check(CLI::Range(40.0, 10000.0));
  dm->add_option("--gap-ms", gap_ms, "gap duration")->check(CLI::Range(40.0, 10000.0));
  dm->callback([&] {
    for (char c : symbols)
      if (!dtmf::is_symbol(c)) throw CLI::ValidationError("--symbols", std::string("bad symbol '") + c + "'");
    rc = dtmf_mod(symbols, out, tone_ms, gap_ms);
  });

  auto* dd = modem->add_subcommand("dtmf-demod", "DTMF audio to MT8870 events");
  dd->add_option("--in", in, "input WAV")->required()->check(CLI::ExistingFile);
  dd->callback([&] { rc = dtmf_demod(in); });

  auto* ch = app.add_subcommand("channel", "add white Gaussian noise at a given SNR");
  ch->add_option("--in", in, "input WAV")->required()->check(CLI::ExistingFile);
  ch->add_option("--out", out, "output WAV")->required();
  ch->add_option("--snr", snr, "SNR in dB")->required();
  ch->add_option("--seed", seed, "noise seed");
  ch->callback([&] { audio::wav_write(audio::awgn_apply(audio::wav_read(in), snr, seed), out); });

  auto* rn = app.add_subcommand("run", "run a full pass: satellite, channel and ground station");
  rn->add_option("--scenario", scenario, "scenario JSON")->required()->check(CLI::ExistingFile);
  rn->add_option("--session", session, "session output directory")->required();
  rn->add_option("--serve", serve, "serve the operator API on HOST:PORT during and after the pass");
  rn->add_option("--pace", pace, "logical seconds per wall second (default 1 when serving, else unpaced)")
      ->check(CLI::NonNegativeNumber);
  rn->callback([&] {
    if (!serve.empty()) {
      try {
        gs::parse_bind_address(serve);
      } catch (const std::invalid_argument& e) {
        throw CLI::ValidationError("--serve", e.what());
      }
    }
    const double p = pace >= 0.0 ? pace : (serve.empty() ? 0.0 : 1.0);
    rc = run(scenario, session, serve, p);
  });

  auto* g = app.add_subcommand("gs", "ground station tools");
  g->require_subcommand(1);
  auto* gsend = g->add_subcommand("send", "encode an uplink command as DTMF audio");
  gsend->add_option("OPCODE", opcode, "01-06 or a name such as PING")->required();
  gsend->add_option("ARGS", args, "argument digits");
  gsend->add_option("--out", out, "output WAV")->required();
  gsend->callback([&] { rc = gs_send(opcode, args, out); });

  auto* gdec = g->add_subcommand("decode", "decode a received downlink recording");
  gdec->add_option("--in", in, "input WAV")->required()->check(CLI::ExistingFile);
  gdec->add_option("--session", session, "output directory")->required();
  gdec->callback([&] { rc = gs_decode(in, session); });

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  } catch (const ScenarioError& e) {
    std::cerr << e.what() << "\n";
    return kFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return rc;
}
