#include "physiort/app/commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "physiort/analysis.hpp"
#include "physiort/app/controller.hpp"
#include "physiort/app/gateway.hpp"
#include "physiort/app/hub.hpp"
#include "physiort/app/source.hpp"
#include "physiort/config.hpp"
#include "physiort/sqa.hpp"
#include "physiort/sync.hpp"
#include "physiort/synth.hpp"
#include "physiort/wire.hpp"

namespace physiort::app {

using nlohmann::json;
using namespace std::chrono_literals;

int exit_code_for(Errc code) noexcept {
  switch (code) {
    case Errc::MalformedDocument:
    case Errc::SchemaViolation:
    case Errc::InvariantViolation:
    case Errc::RangeViolation:
    case Errc::SpecViolation:
    case Errc::NyquistViolation:
    case Errc::InvalidId:
      return kExitConfig;
    case Errc::TransportError: return kExitTransport;
    case Errc::IoFailure: return kExitIo;
    case Errc::PortInUse:
    case Errc::NoReadyPeers:
    case Errc::ConnectFailed:
    case Errc::ServerClosed:
    case Errc::MalformedMessage:
    case Errc::UnknownType:
      return kExitNetwork;
    case Errc::CorruptFile:
    case Errc::NoSessions:
    case Errc::EmptyCorpus:
    case Errc::KindMismatch:
    case Errc::LengthMismatch:
    case Errc::TooShort:
    case Errc::WindowTooLong:
    case Errc::ValueOutOfRange:
    case Errc::OutOfOrderSample:
    case Errc::ShapeViolation:
    case Errc::OverlapViolation:
      return kExitData;
    case Errc::InvalidState: return kExitInternal;
  }
  return kExitInternal;
}

std::atomic<bool>& interrupt_flag() {
  static std::atomic<bool> flag{false};
  return flag;
}

std::filesystem::path resolve_data_dir(const std::optional<std::string>& flag, const std::string& configured) {
  if (flag && !flag->empty()) return *flag;
  if (const char* env = std::getenv("PHYSIORT_DATA_DIR"); env && *env) return env;
  return configured;
}

std::filesystem::path truth_path(const std::filesystem::path& replay) {
  auto p = replay;
  p += ".truth.json";
  return p;
}

namespace {

// Lines of `in` read on a helper thread so the session loop never blocks on input.
class LineFeed {
 public:
  explicit LineFeed(std::istream& in) : state_(std::make_shared<State>()) {
    thread_ = std::thread([st = state_, &in] {
      std::string line;
      while (std::getline(in, line)) {
        std::lock_guard lock(st->mu);
        st->lines.push_back(line);
      }
      std::lock_guard lock(st->mu);
      st->eof = true;
    });
  }
  ~LineFeed() {
    bool eof = false;
    {
      std::lock_guard lock(state_->mu);
      eof = state_->eof;
    }
    // A terminal that never closes would block join forever.
    if (eof) thread_.join();
    else thread_.detach();
  }

  std::optional<std::string> next() {
    std::lock_guard lock(state_->mu);
    if (state_->lines.empty()) return std::nullopt;
    auto l = std::move(state_->lines.front());
    state_->lines.pop_front();
    return l;
  }
  bool exhausted() {
    std::lock_guard lock(state_->mu);
    return state_->eof && state_->lines.empty();
  }

 private:
  struct State {
    std::mutex mu;
    std::deque<std::string> lines;
    bool eof = false;
  };
  std::shared_ptr<State> state_;
  std::thread thread_;
};

enum class LineResult { ok, quit };

bool sleep_interruptible(double seconds) {
  const auto until = std::chrono::steady_clock::now() + std::chrono::duration<double>(seconds);
  while (std::chrono::steady_clock::now() < until) {
    if (interrupt_flag().load()) return false;
    std::this_thread::sleep_for(10ms);
  }
  return true;
}

LineResult run_line(Controller& ctl, const std::string& line, std::ostream& out, std::ostream& err) {
  std::istringstream ss(line);
  std::string verb;
  ss >> verb;
  if (verb.empty() || verb[0] == '#') return LineResult::ok;
  json cmd;
  if (verb == "quit") return LineResult::quit;
  if (verb == "wait") {
    double s = 0;
    ss >> s;
    sleep_interruptible(s);
    return LineResult::ok;
  }
  if (verb == "start") {
    cmd = {{"type", "start_condition"}};
    std::string cond;
    if (ss >> cond) cmd["condition"] = cond;
  } else if (verb == "mark_on") {
    std::int64_t code = 0;
    ss >> code;
    cmd = {{"type", "mark_on"}, {"code", code}};
  } else {
    cmd = {{"type", verb}};
  }
  const auto reply = ctl.handle(cmd);
  if (reply.value("type", "") == "error") err << "error: " << reply.value("message", "") << "\n";
  else if (verb == "status") out << reply.dump() << "\n";
  return LineResult::ok;
}

struct Session {
  config::ExperimentConfig exp;
  config::AcqConfig acq;
  std::optional<sqa::Model> model;
  std::filesystem::path data_dir;
};

Session load_session(const AcquireOptions& o) {
  Session s;
  s.exp = config::load_experiment_file(o.experiment.string());
  s.acq = config::load_acq_file(o.acquisition.string());
  if (o.model) s.model = sqa::load_model(*o.model);
  s.data_dir = resolve_data_dir(o.data_dir, s.exp.data_dir);
  if (!config::valid_identifier(o.participant_id)) {
    throw Error(Errc::InvalidId, "participant id must be 1-64 of [A-Za-z0-9_-]", "participant_id");
  }
  return s;
}

void report_results(const Controller& ctl, std::ostream& out) {
  for (const auto& r : ctl.results()) {
    out << "recorded " << r.path.string() << " rows=" << r.rows << " dropped=" << r.frames_dropped
        << " marks=" << r.marks.size() << " end=" << to_string(r.end) << "\n";
  }
}

int finish_code(const Controller& ctl, std::ostream& err) {
  if (const auto msg = ctl.last_error()) {
    err << "error: " << *msg << "\n";
    return exit_code_for(ctl.last_error_code().value_or(Errc::InvalidState));
  }
  return kExitOk;
}

template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace

int cmd_acquire(const AcquireOptions& o, std::istream& in, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    auto s = load_session(o);
    UiHub hub;
    ControllerOptions co;
    co.experiment = s.exp;
    co.acq = s.acq;
    co.participant_id = o.participant_id;
    co.data_dir = s.data_dir;
    co.model = s.model ? &*s.model : nullptr;
    co.hub = &hub;
    Controller ctl(co);
    LineFeed feed(in);
    bool quit = false;

    auto pump = [&] {
      while (auto line = feed.next()) {
        if (run_line(ctl, *line, out, err) == LineResult::quit) quit = true;
      }
    };

    if (s.acq.role == config::Role::client) {
      out << "armed as " << s.acq.node_id.value_or(o.participant_id) << "\n";
      while (!quit && !interrupt_flag().load()) {
        pump();
        if (ctl.finished() && !ctl.recording()) break;
        if (ctl.last_error_code() == Errc::ServerClosed && !ctl.recording()) break;
        std::this_thread::sleep_for(20ms);
      }
      report_results(ctl, out);
      return finish_code(ctl, err);
    }

    const auto schedule = config::condition_schedule(s.exp);
    for (const auto& cond : schedule) {
      if (quit || interrupt_flag().load()) break;
      if (auto* server = ctl.sync_server(); server && o.wait_peers > 0) {
        const auto timeout = std::chrono::milliseconds(static_cast<std::int64_t>(o.peer_timeout_s * 1000));
        if (!server->wait_ready(o.wait_peers, timeout)) {
          throw Error(Errc::NoReadyPeers, "fewer than " + std::to_string(o.wait_peers) + " clients armed");
        }
      }
      ctl.start_condition(cond.name);
      out << "condition " << cond.name << " started\n";
      while (ctl.recording()) {
        pump();
        if (interrupt_flag().load() || quit || (!cond.duration_seconds && feed.exhausted())) {
          try {
            ctl.stop();
          } catch (const Error&) {
          }
          ctl.wait_until_idle(10s);
          break;
        }
        std::this_thread::sleep_for(20ms);
      }
      ctl.wait_until_idle(10s);
      if (ctl.last_error()) break;
    }
    report_results(ctl, out);
    return finish_code(ctl, err);
  });
}

int cmd_serve(const AcquireOptions& o, std::istream& in, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    auto s = load_session(o);
    UiHub hub;
    ControllerOptions co;
    co.experiment = s.exp;
    co.acq = s.acq;
    co.participant_id = o.participant_id;
    co.data_dir = s.data_dir;
    co.model = s.model ? &*s.model : nullptr;
    co.hub = &hub;
    Controller ctl(co);
    GatewayOptions go;
    go.port = o.ws_port.value_or(8765);
    Gateway gw(go, hub, [&](const json& c) { return ctl.handle(c); }, [&] { return ctl.status(); });
    out << "gateway listening on port " << gw.port() << "\n" << std::flush;
    LineFeed feed(in);
    bool quit = false;
    while (!quit && !interrupt_flag().load() && !feed.exhausted()) {
      while (auto line = feed.next()) {
        if (run_line(ctl, *line, out, err) == LineResult::quit) quit = true;
      }
      std::this_thread::sleep_for(20ms);
    }
    if (ctl.recording()) {
      try {
        ctl.stop();
      } catch (const Error&) {
      }
      ctl.wait_until_idle(10s);
    }
    gw.stop();
    report_results(ctl, out);
    return finish_code(ctl, err);
  });
}

int cmd_analyze(const std::filesystem::path& analysis_json, const std::filesystem::path& data_dir,
                const std::filesystem::path& out_dir, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto cfg = analysis::load_analysis_file(analysis_json);
    const auto result = analysis::batch_process(cfg, data_dir);
    analysis::write_outputs(result, out_dir);
    std::size_t excluded = 0;
    for (const auto& r : result.table.rows) excluded += r.excluded ? 1 : 0;
    out << "rows=" << result.table.rows.size() << " excluded=" << excluded << " problems=" << result.problems.size()
        << "\n";
    for (const auto& p : result.problems) err << "skipped " << p.file << ": " << p.error << "\n";
    for (const auto& c : result.comparisons) {
      out << dsp::to_string(c.metric) << " pairs=" << c.pairs_total;
      if (c.stats) out << " kept=" << c.stats->n << " rmse=" << c.stats->rmse << " mae=" << c.stats->mae;
      out << "\n";
    }
    return kExitOk;
  });
}

int cmd_train_sqa(const TrainSqaOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (o.out.empty()) throw Error(Errc::SchemaViolation, "an output model path is required", "out");
    const auto data = synth::corpus(o.segments, o.artifact_fraction, o.seed);
    sqa::TrainOptions t;
    t.epochs = o.epochs;
    t.batch_size = o.batch_size;
    t.seed = o.seed;
    const auto result = sqa::train(data, t);
    out << "initial accuracy " << result.initial_accuracy << "\n";
    for (const auto& e : result.history) {
      out << "epoch " << e.epoch << " loss " << e.train_loss << " accuracy " << e.bin_accuracy << "\n";
    }
    sqa::save_model(result.model, o.out);
    out << "model written to " << o.out.string() << "\n";
    return kExitOk;
  });
}

int cmd_simulate(const SimulateOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (o.out.empty()) throw Error(Errc::SchemaViolation, "an output path is required", "out");
    if (!(o.fs >= config::kMinSamplingRate && o.fs <= config::kMaxSamplingRate)) {
      throw Error(Errc::RangeViolation, "sampling rate out of range", "fs");
    }
    if (o.adc_bits != 10 && o.adc_bits != 12) throw Error(Errc::RangeViolation, "adc_bits must be 10 or 12", "adc_bits");
    std::vector<config::ChannelSpec> channels;
    if (o.experiment) {
      channels = config::load_experiment_file(o.experiment->string()).channels;
    } else {
      channels.push_back({"ppg", config::SignalKind::PPG, "finger", 0});
    }

    synth::PpgSpec spec;
    spec.fs = o.fs;
    spec.duration = o.duration_s;
    spec.hr_bpm = o.hr_bpm;
    spec.ibi_jitter_ms = o.ibi_jitter_ms;
    spec.snr_db = o.snr_db;
    spec.seed = o.seed;
    const auto ppg = synth::generate_ppg(spec);
    const auto n = ppg.samples.size();

    std::vector<std::vector<std::uint32_t>> counts;
    for (std::size_t c = 0; c < channels.size(); ++c) {
      dsp::SampleSeries s;
      switch (channels[c].kind) {
        case config::SignalKind::PPG: s = ppg.samples; break;
        case config::SignalKind::EDA: {
          synth::EdaSpec e;
          e.fs = o.fs;
          e.duration = o.duration_s;
          e.seed = o.seed + 1000 + c;
          s = synth::generate_eda(e);
          break;
        }
        case config::SignalKind::RSP: {
          synth::RspSpec r;
          r.fs = o.fs;
          r.duration = o.duration_s;
          r.seed = o.seed + 2000 + c;
          s = synth::generate_rsp(r);
          break;
        }
      }
      s.data.resize(n, s.data.empty() ? 0.5 : s.data.back());
      counts.push_back(synth::quantize(s.data, o.adc_bits));
    }

    if (o.out.has_parent_path()) std::filesystem::create_directories(o.out.parent_path());
    std::ofstream f(o.out, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(Errc::IoFailure, "cannot write " + o.out.string());
    const auto pos = wire_positions(channels);
    wire::SampleFrame frame;
    frame.values.resize(channels.size());
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < channels.size(); ++c) frame.values[pos[c]] = counts[c][i];
      f << wire::encode_frame(frame, o.adc_bits);
    }
    f.close();
    if (!f) throw Error(Errc::IoFailure, "cannot write " + o.out.string());

    json truth{{"hr_bpm", o.hr_bpm},
               {"ibi_jitter_ms", o.ibi_jitter_ms},
               {"snr_db", o.snr_db},
               {"fs", o.fs},
               {"adc_bits", o.adc_bits},
               {"seed", o.seed},
               {"frames", n},
               {"truth_ibis_ms", ppg.truth_ibis_ms},
               {"truth_peak_times", ppg.truth_peak_times}};
    std::ofstream t(truth_path(o.out));
    t << truth.dump(2) << "\n";
    if (!t) throw Error(Errc::IoFailure, "cannot write " + truth_path(o.out).string());
    out << "wrote " << n << " frames to " << o.out.string() << "\n";
    return kExitOk;
  });
}

int cmd_sync_server(const SyncServerOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    sync::ServerOptions so;
    so.port = o.port;
    so.allow_without_peers = false;
    sync::SyncServer server(so);
    out << "sync server on port " << server.port() << "\n" << std::flush;
    const auto timeout = std::chrono::milliseconds(static_cast<std::int64_t>(o.ready_timeout_s * 1000));
    if (!server.wait_ready(o.clients, timeout)) {
      throw Error(Errc::NoReadyPeers, "fewer than " + std::to_string(o.clients) + " clients armed");
    }
    const auto report = server.start(make_session_id(1), o.condition, o.duration_s);
    out << "start sent to " << report.recipients.size() << " clients\n" << std::flush;
    sleep_interruptible(o.duration_s);
    server.stop();
    out << "stop sent\n";
    server.shutdown();
    return kExitOk;
  });
}

int cmd_sync_client(const SyncClientOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto [host, port] = config::split_host_port(o.server);
    std::mutex mu;
    std::condition_variable cv;
    bool started = false, stopped = false, closed = false;
    sync::ClientOptions co;
    co.host = host;
    co.port = static_cast<std::uint16_t>(port);
    co.node_id = o.node_id;
    sync::ClientCallbacks cb;
    cb.on_start = [&](const sync::SyncMessage& m, std::int64_t) {
      std::lock_guard lock(mu);
      out << "start session=" << m.session_id << " condition=" << m.condition << "\n" << std::flush;
      started = true;
      cv.notify_all();
    };
    cb.on_stop = [&](const sync::SyncMessage&) {
      std::lock_guard lock(mu);
      out << "stop\n" << std::flush;
      stopped = true;
      cv.notify_all();
    };
    cb.on_closed = [&] {
      std::lock_guard lock(mu);
      closed = true;
      cv.notify_all();
    };
    sync::SyncClient client(co, cb);
    client.arm();
    std::unique_lock lock(mu);
    const bool ok = cv.wait_for(lock, std::chrono::duration<double>(o.timeout_s), [&] {
      return stopped || closed || interrupt_flag().load();
    });
    lock.unlock();
    client.close();
    if (client.rejected()) throw Error(Errc::ConnectFailed, "server rejected node id " + o.node_id);
    if (!ok || !started) throw Error(Errc::ServerClosed, "no start received");
    return kExitOk;
  });
}

}  // namespace physiort::app
