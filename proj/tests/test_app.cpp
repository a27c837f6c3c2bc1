#include <doctest.h>

#include <pty.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "physiort/analysis.hpp"
#include "physiort/app/commands.hpp"
#include "physiort/app/controller.hpp"
#include "physiort/app/hub.hpp"
#include "physiort/app/live.hpp"
#include "physiort/app/recorder.hpp"
#include "physiort/app/source.hpp"
#include "physiort/error.hpp"
#include "physiort/store.hpp"
#include "physiort/synth.hpp"
#include "support/app_fixtures.hpp"
#include "support/scratch_dir.hpp"

using namespace physiort;
using namespace physiort::app;
using namespace std::chrono_literals;
using physiort::test::eventually;
using nlohmann::json;

namespace {

Errc error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::InvalidState;
}

std::vector<wire::SampleFrame> drain(ByteSource& src, std::size_t channels, int bits) {
  wire::FrameDecoder dec(channels, bits);
  std::vector<wire::SampleFrame> frames;
  std::string chunk;
  while (true) {
    chunk.clear();
    const bool more = src.read(chunk, 10ms);
    dec.feed_into(chunk, frames);
    if (!more) break;
  }
  CHECK(dec.stats().frames_dropped == 0);
  return frames;
}

}  // namespace

TEST_CASE("biofeedback norm maps the range onto [0, 1]") {
  config::BiofeedbackSpec spec;
  spec.range_lo = 50;
  spec.range_hi = 110;
  CHECK(biofeedback_norm(50, spec) == 0.0);
  CHECK(biofeedback_norm(110, spec) == 1.0);
  CHECK(biofeedback_norm(80, spec) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(biofeedback_norm(20, spec) == 0.0);
  CHECK(biofeedback_norm(500, spec) == 1.0);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1000, 1000);
  for (int i = 0; i < 1000; ++i) {
    const double n = biofeedback_norm(u(rng), spec);
    CHECK((n >= 0.0 && n <= 1.0));
  }
}

TEST_CASE("wire positions follow adc_index") {
  const auto pos = wire_positions(test::ppg_eda_channels());
  CHECK(pos == std::vector<std::size_t>{1, 0, 2});
}

TEST_CASE("simulator source emits exactly the frame limit, deterministically") {
  const auto ch = test::ppg_eda_channels();
  auto settings = test::simulator_acq(64, false).simulator;
  SimulatorSource a(ch, 64, 10, settings, 7, 1000);
  SimulatorSource b(ch, 64, 10, settings, 7, 1000);
  SimulatorSource c(ch, 64, 10, settings, 8, 1000);
  const auto fa = drain(a, 3, 10);
  CHECK(fa.size() == 1000);
  CHECK(a.frames_emitted() == 1000);
  CHECK(fa == drain(b, 3, 10));
  CHECK(fa != drain(c, 3, 10));
}

TEST_CASE("simulator source crosses block boundaries without gaps") {
  std::vector<config::ChannelSpec> ch{{"ppg", config::SignalKind::PPG, "finger", 0}};
  auto settings = test::simulator_acq(20, false).simulator;
  const std::uint64_t n = static_cast<std::uint64_t>(SimulatorSource::kBlockSeconds * 20) * 2 + 17;
  SimulatorSource s(ch, 20, 12, settings, 1, n);
  CHECK(drain(s, 1, 12).size() == n);
}

TEST_CASE("paced simulator keeps wall-clock rate") {
  std::vector<config::ChannelSpec> ch{{"ppg", config::SignalKind::PPG, "finger", 0}};
  SimulatorSource s(ch, 200, 10, test::simulator_acq(200, true).simulator, 1, std::nullopt);
  const auto t0 = std::chrono::steady_clock::now();
  std::string buf;
  while (std::chrono::steady_clock::now() - t0 < 500ms) s.read(buf, 20ms);
  const double expected = 200 * 0.5;
  CHECK(std::abs(static_cast<double>(s.frames_emitted()) - expected) < 25);
}

TEST_CASE("replay source returns the file bytes") {
  ScratchDir dir("replay");
  const std::string text = "1,2\n3,4\n5,6\n";
  std::ofstream(dir / "r.wire") << text;
  ReplaySource fast(dir / "r.wire", 64, false);
  std::string got, chunk;
  while (fast.read(chunk, 10ms)) {
  }
  CHECK(chunk == text);
  ReplaySource paced(dir / "r.wire", 100, true);
  got.clear();
  while (paced.read(got, 10ms)) {
  }
  CHECK(got == text);
  CHECK(error_of([&] { ReplaySource(dir / "missing.wire", 64, false); }) == Errc::IoFailure);
}

TEST_CASE("serial source: absent device, bad rate, and a pseudo-terminal") {
  CHECK(error_of([] { SerialSource("/dev/does-not-exist-physiort", 115200); }) == Errc::TransportError);
  CHECK(error_of([] { SerialSource("/dev/null", 115200); }) == Errc::TransportError);

  int master = -1, slave = -1;
  char name[256] = {};
  REQUIRE(::openpty(&master, &slave, name, nullptr, nullptr) == 0);
  CHECK(error_of([&] { SerialSource(name, 12345); }) == Errc::TransportError);
  {
    SerialSource s(name, 115200);
    const std::string lines = "100,200\n300,400\n";
    REQUIRE(::write(master, lines.data(), lines.size()) == static_cast<ssize_t>(lines.size()));
    std::string got;
    CHECK(eventually([&] {
      s.read(got, 20ms);
      return got.size() >= lines.size();
    }));
    CHECK(got == lines);
  }
  ::close(slave);
  ::close(master);
}

TEST_CASE("open_source requires the transport's path") {
  config::AcqConfig acq;
  acq.transport = config::Transport::replay;
  CHECK(error_of([&] { open_source(acq, test::ppg_eda_channels(), 1, std::nullopt); }) == Errc::TransportError);
  acq.transport = config::Transport::serial;
  CHECK(error_of([&] { open_source(acq, test::ppg_eda_channels(), 1, std::nullopt); }) == Errc::TransportError);
}

TEST_CASE("recorder writes every generated frame, in declared channel order") {
  ScratchDir dir("rec");
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 8; ++trial) {
    const auto ch = test::ppg_eda_channels();
    const std::uint64_t n = std::uniform_int_distribution<std::uint64_t>(1, 5000)(rng);
    RecorderSetup setup;
    setup.experiment = test::experiment(ch, {1.0}, false);
    setup.acq = test::simulator_acq(64, false);
    setup.participant_id = "P" + std::to_string(trial);
    setup.data_dir = dir.path();
    setup.session_id = "s";
    setup.condition = "cond1";
    SimulatorSource src(ch, 64, 10, setup.acq.simulator, 3, n);
    SimulatorSource twin(ch, 64, 10, setup.acq.simulator, 3, n);
    Recorder rec(setup);
    const auto result = rec.run(src);
    CHECK(result.rows == n);
    CHECK(result.rows == src.frames_emitted());
    CHECK(result.end == EndReason::source_ended);
    const auto r = store::read_recording(result.path);
    REQUIRE(r.rows() == n);
    const auto frames = drain(twin, 3, 10);
    const auto pos = wire_positions(ch);
    bool same = true;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < 3; ++c) same = same && r.value(i, c) == frames[i].values[pos[c]];
    }
    CHECK(same);
  }
}

TEST_CASE("recorder timer stops at round(duration * fs) rows") {
  ScratchDir dir("timer");
  RecorderSetup setup;
  setup.experiment = test::experiment(test::ppg_eda_channels(), {2.5});
  setup.acq = test::simulator_acq(100, false);
  setup.participant_id = "P01";
  setup.data_dir = dir.path();
  setup.session_id = "s";
  setup.condition = "cond1";
  setup.duration_s = 2.5;
  SimulatorSource src(setup.experiment.channels, 100, 10, setup.acq.simulator, 1, std::nullopt);
  Recorder rec(setup);
  const auto result = rec.run(src);
  CHECK(result.rows == 250);
  CHECK(result.end == EndReason::timer);
}

TEST_CASE("recorder assesses SQI per 8 s segment and leaves the tail unassessed") {
  ScratchDir dir("sqi");
  const auto model = sqa::init_model(3);
  UiHub hub;
  HubRecorder log(hub);
  RecorderSetup setup;
  setup.experiment = test::experiment(test::ppg_eda_channels(), {20});
  setup.acq = test::simulator_acq(64, false);
  setup.participant_id = "P01";
  setup.data_dir = dir.path();
  setup.session_id = "s";
  setup.condition = "cond1";
  setup.duration_s = 20;
  setup.model = &model;
  setup.hub = &hub;
  SimulatorSource src(setup.experiment.channels, 64, 10, setup.acq.simulator, 1, std::nullopt);
  Recorder rec(setup);
  const auto result = rec.run(src);
  const auto r = store::read_recording(result.path);
  REQUIRE(r.rows() == 1280);
  for (std::size_t i = 0; i < r.rows(); ++i) {
    if (i < 1024) {
      REQUIRE(r.sqi[i] != store::kSqiUnassessed);
    } else {
      REQUIRE(r.sqi[i] == store::kSqiUnassessed);
    }
  }
  std::size_t bins = 0;
  for (const auto& m : log.of_type("sqi")) bins += m["bins"].size();
  CHECK(bins == 32);
}

TEST_CASE("live HR from the causal pipeline agrees with offline HR") {
  const double fs = 64;
  synth::PpgSpec spec;
  spec.fs = fs;
  spec.duration = 180;
  spec.hr_bpm = 68;
  spec.ibi_jitter_ms = 30;
  spec.snr_db = 30;
  spec.seed = 4;
  const auto seg = synth::generate_ppg(spec);
  std::vector<double> counts;
  for (double v : seg.samples.data) counts.push_back(v * 1023.0);

  std::vector<json> hr;
  LiveSettings ls;
  ls.window_s = 30;
  ls.step_s = 10;
  LiveMetrics live({{"ppg", config::SignalKind::PPG, "finger", 0}}, fs, ls, [&](const json& m) {
    if (m["type"] == "metric" && m["metric"] == "HR_BPM") hr.push_back(m);
  });
  for (double v : counts) live.push({v});

  const auto cascade = dsp::design_bandpass(fs);
  const auto offline = dsp::detect_peaks(dsp::filter_zero_phase(cascade, {counts, fs, 0.0}));
  REQUIRE(hr.size() == 16);
  for (const auto& m : hr) {
    const double t_end = m["t"].get<double>();
    const auto ref = dsp::hr_from_window(offline, t_end - 30, 30).value;
    REQUIRE(ref);
    REQUIRE(m["value"].is_number());
    CHECK(std::abs(m["value"].get<double>() - *ref) <= 2.0);
  }
}

TEST_CASE("live metrics emit biofeedback every step once the first window is full") {
  auto exp = test::experiment(test::ppg_eda_channels(), {30});
  config::BiofeedbackSpec bf;
  bf.metric = config::FeedbackMetric::HR;
  bf.window_seconds = 10;
  bf.step_seconds = 2;
  bf.range_lo = 50;
  bf.range_hi = 110;
  exp.biofeedback = bf;
  ScratchDir dir("bf");
  UiHub hub;
  HubRecorder log(hub);
  RecorderSetup setup;
  setup.experiment = exp;
  setup.acq = test::simulator_acq(64, false);
  setup.participant_id = "P01";
  setup.data_dir = dir.path();
  setup.session_id = "s";
  setup.condition = "cond1";
  setup.duration_s = 30;
  setup.hub = &hub;
  SimulatorSource src(exp.channels, 64, 10, setup.acq.simulator, 1, std::nullopt);
  Recorder(setup).run(src);

  const auto fb = log.of_type("biofeedback");
  REQUIRE(fb.size() == 11);
  for (std::size_t i = 0; i < fb.size(); ++i) {
    CHECK(fb[i]["t"].get<double>() == doctest::Approx(10.0 + 2.0 * static_cast<double>(i)));
    const double v = fb[i]["value"].get<double>();
    CHECK(std::abs(v - 72.0) < 8.0);
    CHECK(fb[i]["norm"].get<double>() == doctest::Approx(biofeedback_norm(v, bf)));
  }
  // Plot stream: at most 30 values per second per channel.
  std::size_t values = 0;
  for (const auto& m : log.of_type("samples")) {
    CHECK(m["dt"].get<double>() >= 1.0 / 30.0 - 1e-12);
    values += m["channels"]["ppg_finger"].size();
  }
  CHECK(values <= 30 * 30);
  CHECK(values >= 30 * 30 * 0.7);
}

TEST_CASE("controller records two timed conditions into two files") {
  ScratchDir dir("ctl");
  ControllerOptions o;
  o.experiment = test::experiment(test::ppg_eda_channels(), {10, 10});
  o.acq = test::simulator_acq(64, false);
  o.participant_id = "P01";
  o.data_dir = dir.path();
  Controller ctl(o);
  ctl.start_condition();
  REQUIRE(ctl.wait_until_idle(10s));
  ctl.start_condition();
  REQUIRE(ctl.wait_until_finished(10s));
  const auto results = ctl.results();
  REQUIRE(results.size() == 2);
  CHECK(results[0].path == dir.path() / "P01" / "cond1.csv");
  CHECK(results[1].path == dir.path() / "P01" / "cond2.csv");
  for (const auto& r : results) CHECK(store::read_recording(r.path).rows() == 640);
  CHECK(ctl.status()["phase"] == "finished");
  CHECK(ctl.handle({{"type", "start_condition"}})["type"] == "error");
}

TEST_CASE("untimed condition ends on stop") {
  ScratchDir dir("untimed");
  ControllerOptions o;
  o.experiment = test::experiment(test::ppg_eda_channels(), {0}, false);
  o.acq = test::simulator_acq(64, true);
  o.participant_id = "P01";
  o.data_dir = dir.path();
  Controller ctl(o);
  ctl.start_condition();
  std::this_thread::sleep_for(7s);
  ctl.stop();
  REQUIRE(ctl.wait_until_idle(5s));
  const auto r = store::read_recording(ctl.results().at(0).path);
  CHECK(std::abs(static_cast<double>(r.rows()) / 64.0 - 7.0) < 0.5);
  CHECK(ctl.results()[0].end == EndReason::stopped);
}

TEST_CASE("event marks land on the rows between mark_on and mark_off") {
  ScratchDir dir("marks");
  UiHub hub;
  HubRecorder log(hub);
  ControllerOptions o;
  o.experiment = test::experiment(test::ppg_eda_channels(), {0}, false);
  o.acq = test::simulator_acq(100, true);
  o.participant_id = "P01";
  o.data_dir = dir.path();
  o.hub = &hub;
  Controller ctl(o);
  auto elapsed = [&] { return ctl.status()["elapsed_s"].get<double>(); };
  CHECK(ctl.handle({{"type", "mark_on"}, {"code", 3}})["type"] == "error");
  ctl.start_condition();
  REQUIRE(eventually([&] { return elapsed() >= 2.0; }));
  CHECK(ctl.handle({{"type", "mark_on"}, {"code", 3}})["type"] == "status");
  REQUIRE(eventually([&] { return elapsed() >= 4.0; }));
  CHECK(ctl.handle({{"type", "mark_off"}})["type"] == "status");
  REQUIRE(eventually([&] { return elapsed() >= 5.0; }));
  ctl.stop();
  REQUIRE(ctl.wait_until_idle(5s));

  const auto r = store::read_recording(ctl.results().at(0).path);
  REQUIRE(r.marks.size() == 1);
  const auto mark = r.marks[0];
  CHECK(mark.code == 3);
  CHECK(ctl.results()[0].marks == r.marks);
  const auto acks = log.of_type("mark_ack");
  REQUIRE(acks.size() == 2);
  CHECK(acks[0]["action"] == "mark_on");
  CHECK(acks[0]["code"] == 3);
  CHECK(acks[0]["sample"].get<std::uint64_t>() == mark.start_sample);
  CHECK(acks[1]["action"] == "mark_off");
  CHECK(acks[1]["sample"].get<std::uint64_t>() == mark.end_sample + 1);
  CHECK(r.elapsed(mark.start_sample) == doctest::Approx(2.0).epsilon(0.15));
  CHECK(r.elapsed(mark.end_sample) == doctest::Approx(4.0).epsilon(0.1));
}

TEST_CASE("controller rejects malformed and out-of-phase commands") {
  ScratchDir dir("cmds");
  ControllerOptions o;
  o.experiment = test::experiment(test::ppg_eda_channels(), {0}, false);
  o.acq = test::simulator_acq(64, true);
  o.participant_id = "P01";
  o.data_dir = dir.path();
  Controller ctl(o);
  CHECK(ctl.handle(json::array())["type"] == "error");
  CHECK(ctl.handle({{"type", "dance"}})["type"] == "error");
  CHECK(ctl.handle({{"type", "stop"}})["type"] == "error");
  CHECK(ctl.handle({{"type", "start_condition"}, {"condition", "nope"}})["type"] == "error");
  CHECK(ctl.handle({{"type", "status"}})["phase"] == "idle");
  CHECK(ctl.handle({{"type", "start_condition"}})["phase"] == "recording");
  const auto again = ctl.handle({{"type", "start_condition"}});
  CHECK(again["type"] == "error");
  CHECK(again["command"] == "start_condition");
  CHECK(ctl.handle({{"type", "mark_on"}})["type"] == "error");
  CHECK(ctl.handle({{"type", "mark_on"}, {"code", 0}})["type"] == "error");
  CHECK(ctl.handle({{"type", "stop"}})["type"] == "status");
  CHECK(ctl.wait_until_idle(5s));
}

TEST_CASE("sync roles: one server node and two client nodes record the same condition") {
  ScratchDir dir("syncctl");
  const auto exp = test::experiment(test::ppg_eda_channels(), {2, 2});
  ControllerOptions so;
  so.experiment = exp;
  so.acq = test::simulator_acq(64, true);
  so.acq.role = config::Role::server;
  so.acq.listen_port = 0;
  so.participant_id = "S0";
  so.data_dir = dir.path();
  Controller server(so);

  std::vector<std::unique_ptr<Controller>> clients;
  for (int i = 1; i <= 2; ++i) {
    ControllerOptions co = so;
    co.acq.role = config::Role::client;
    co.acq.listen_port.reset();
    co.acq.server_address = "127.0.0.1:" + std::to_string(server.sync_port());
    co.participant_id = "C" + std::to_string(i);
    clients.push_back(std::make_unique<Controller>(co));
  }
  CHECK(clients[0]->handle({{"type", "start_condition"}})["type"] == "error");

  for (int round = 0; round < 2; ++round) {
    REQUIRE(server.sync_server()->wait_ready(2, 5s));
    server.start_condition();
    REQUIRE(server.wait_until_idle(10s));
    for (auto& c : clients) REQUIRE(eventually([&] { return c->results().size() == static_cast<std::size_t>(round + 1); }));
  }
  CHECK(server.finished());
  for (auto& c : clients) CHECK(eventually([&] { return c->finished(); }));
  for (std::size_t k = 0; k < 2; ++k) {
    const auto ref = store::read_recording(server.results()[k].path);
    CHECK(ref.rows() == 128);
    for (auto& c : clients) {
      const auto r = store::read_recording(c->results()[k].path);
      CHECK(r.rows() == 128);
      CHECK(r.header.session_id == ref.header.session_id);
      CHECK(r.header.condition == ref.header.condition);
    }
  }
}

TEST_CASE("data directory precedence: flag, environment, configuration") {
  ::unsetenv("PHYSIORT_DATA_DIR");
  CHECK(resolve_data_dir(std::nullopt, "cfg") == "cfg");
  ::setenv("PHYSIORT_DATA_DIR", "env", 1);
  CHECK(resolve_data_dir(std::nullopt, "cfg") == "env");
  CHECK(resolve_data_dir(std::string("flag"), "cfg") == "flag");
  ::unsetenv("PHYSIORT_DATA_DIR");
}

TEST_CASE("exit codes follow the error class") {
  CHECK(exit_code_for(Errc::SchemaViolation) == kExitConfig);
  CHECK(exit_code_for(Errc::TransportError) == kExitTransport);
  CHECK(exit_code_for(Errc::IoFailure) == kExitIo);
  CHECK(exit_code_for(Errc::ConnectFailed) == kExitNetwork);
  CHECK(exit_code_for(Errc::NoSessions) == kExitData);
}

namespace {

void write_json(const std::filesystem::path& p, const json& j) { std::ofstream(p) << j.dump(2); }

json experiment_doc(double seconds, bool timed = true) {
  json cond{{"name", "rest"}};
  if (timed) cond["max_time_seconds"] = seconds;
  return {{"study_name", "cli"},
          {"conditions", json::array({cond})},
          {"timed_acquisition", timed},
          {"channels", json::array({{{"name", "ppg"}, {"kind", "PPG"}, {"site", "finger"}, {"adc_index", 0}}})},
          {"plot_channels", json::array({"ppg"})},
          {"data_dir", "unused"}};
}

json acq_doc(json overrides) {
  json d{{"sampling_rate", 64}, {"baudrate", 115200}, {"adc_bits", 10}, {"vref", 5.0},
         {"transport", "simulator"}, {"role", "standalone"}};
  d.update(overrides);
  return d;
}

}  // namespace

TEST_CASE("simulate, acquire from replay, analyze: HR recovered") {
  ScratchDir dir("cli");
  std::ostringstream out, err;
  SimulateOptions sim;
  sim.hr_bpm = 72;
  sim.duration_s = 30;
  sim.out = dir / "sim.wire";
  REQUIRE(cmd_simulate(sim, out, err) == kExitOk);
  const auto truth = json::parse(std::ifstream(truth_path(sim.out)));
  CHECK(truth["frames"] == 30 * 64);

  write_json(dir / "exp.json", experiment_doc(30));
  write_json(dir / "acq.json",
             acq_doc({{"transport", "replay"}, {"replay_path", sim.out.string()}, {"simulator", {{"paced", false}}}}));
  AcquireOptions ao;
  ao.experiment = dir / "exp.json";
  ao.acquisition = dir / "acq.json";
  ao.participant_id = "P01";
  ao.data_dir = (dir / "data").string();
  std::istringstream in;
  REQUIRE(cmd_acquire(ao, in, out, err) == kExitOk);

  write_json(dir / "analysis.json", {{"hr_window_s", 30}, {"hr_step_s", 10}});
  REQUIRE(cmd_analyze(dir / "analysis.json", dir / "data", dir / "out", out, err) == kExitOk);
  std::ifstream csv(dir / "out" / "metrics.csv");
  std::string line;
  std::getline(csv, line);
  int hr_rows = 0;
  while (std::getline(csv, line)) {
    if (line.find(",HR_BPM,") == std::string::npos) continue;
    ++hr_rows;
    const auto cells = [&] {
      std::vector<std::string> v;
      std::stringstream ss(line);
      for (std::string c; std::getline(ss, c, ',');) v.push_back(c);
      return v;
    }();
    CHECK(std::abs(std::stod(cells.at(8)) - 72.0) <= 1.0);
  }
  CHECK(hr_rows == 1);
}

TEST_CASE("headless acquire reads marks and stop from its command stream") {
  ScratchDir dir("stdin");
  write_json(dir / "exp.json", experiment_doc(0, false));
  write_json(dir / "acq.json", acq_doc({{"sampling_rate", 50}}));
  AcquireOptions ao;
  ao.experiment = dir / "exp.json";
  ao.acquisition = dir / "acq.json";
  ao.participant_id = "P01";
  ao.data_dir = (dir / "data").string();
  std::istringstream in("wait 1\nmark_on 2\nwait 1\nmark_off\nwait 1\nstop\n");
  std::ostringstream out, err;
  REQUIRE_MESSAGE(cmd_acquire(ao, in, out, err) == kExitOk, err.str());
  const auto r = store::read_recording(dir / "data" / "P01" / "rest.csv");
  CHECK(std::abs(static_cast<double>(r.rows()) / 50.0 - 3.0) < 0.5);
  REQUIRE(r.marks.size() == 1);
  CHECK(r.marks[0].code == 2);
}

TEST_CASE("acquire exit codes for configuration and transport failures") {
  ScratchDir dir("exit");
  std::ostringstream out, err;
  std::istringstream in;
  AcquireOptions ao;
  ao.experiment = dir / "exp.json";
  ao.acquisition = dir / "acq.json";
  ao.participant_id = "P01";
  ao.data_dir = (dir / "data").string();
  write_json(dir / "exp.json", experiment_doc(1));
  write_json(dir / "acq.json", acq_doc({{"sampling_rate", 20000}}));
  CHECK(cmd_acquire(ao, in, out, err) == kExitConfig);
  write_json(dir / "acq.json", acq_doc({{"transport", "serial"}, {"serial_port", "/dev/does-not-exist-physiort"}}));
  CHECK(cmd_acquire(ao, in, out, err) == kExitTransport);
  ao.participant_id = "../escape";
  CHECK(cmd_acquire(ao, in, out, err) == kExitConfig);
}
