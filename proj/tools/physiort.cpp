#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "physiort/app/commands.hpp"

namespace app = physiort::app;

namespace {

void on_sigint(int) { app::interrupt_flag().store(true); }

void add_session_flags(CLI::App* cmd, app::AcquireOptions& o, std::string& model) {
  cmd->add_option("--experiment,-e", o.experiment, "experiment configuration (JSON)")->required();
  cmd->add_option("--acquisition,-a", o.acquisition, "acquisition configuration (JSON)")->required();
  cmd->add_option("--participant,-p", o.participant_id, "participant id")->required();
  cmd->add_option("--data-dir", o.data_dir, "session directory; overrides PHYSIORT_DATA_DIR and the config");
  cmd->add_option("--model", model, "SQA model file; SQI stays -1 without one");
  cmd->add_option("--wait-peers", o.wait_peers, "server role: armed clients required before each start");
  cmd->add_option("--peer-timeout", o.peer_timeout_s, "seconds to wait for --wait-peers");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"physiort: physiological signal acquisition, quality assessment and analysis"};
  cli.require_subcommand(1);

  app::AcquireOptions acq;
  std::string acq_model;
  auto* acquire = cli.add_subcommand("acquire", "record the condition schedule headless, commands on stdin");
  add_session_flags(acquire, acq, acq_model);

  app::AcquireOptions srv;
  std::string srv_model;
  std::uint16_t ws_port = 8765;
  auto* serve = cli.add_subcommand("serve", "run the WebSocket gateway for consoles");
  add_session_flags(serve, srv, srv_model);
  serve->add_option("--port", ws_port, "WebSocket port");

  std::string analysis_json, data_dir, out_dir = "analysis_out";
  auto* analyze = cli.add_subcommand("analyze", "batch-process recorded sessions");
  analyze->add_option("--config,-c", analysis_json, "analysis configuration (JSON)")->required();
  analyze->add_option("--data-dir", data_dir, "session directory")->required();
  analyze->add_option("--out,-o", out_dir, "output directory");

  app::TrainSqaOptions train;
  auto* train_cmd = cli.add_subcommand("train-sqa", "train the signal quality model on a synthetic corpus");
  train_cmd->add_option("--segments", train.segments, "corpus size");
  train_cmd->add_option("--artifact-fraction", train.artifact_fraction, "share of segments with artifacts");
  train_cmd->add_option("--epochs", train.epochs, "training epochs");
  train_cmd->add_option("--batch-size", train.batch_size, "mini-batch size");
  train_cmd->add_option("--seed", train.seed, "random seed");
  train_cmd->add_option("--out,-o", train.out, "model file")->required();

  app::SimulateOptions sim;
  std::string sim_experiment;
  auto* simulate = cli.add_subcommand("simulate", "write a synthetic wire-grammar replay file");
  simulate->add_option("--hr", sim.hr_bpm, "heart rate (bpm)");
  simulate->add_option("--jitter", sim.ibi_jitter_ms, "beat interval jitter SD (ms)");
  simulate->add_option("--snr", sim.snr_db, "signal to noise ratio (dB)");
  simulate->add_option("--duration", sim.duration_s, "seconds");
  simulate->add_option("--fs", sim.fs, "sampling rate (Hz)");
  simulate->add_option("--adc-bits", sim.adc_bits, "10 or 12");
  simulate->add_option("--seed", sim.seed, "random seed");
  simulate->add_option("--experiment", sim_experiment, "take the channel set from an experiment configuration");
  simulate->add_option("--out,-o", sim.out, "replay file")->required();

  app::SyncServerOptions ss;
  auto* sync_server = cli.add_subcommand("sync-server", "broadcast one timed start to armed clients");
  sync_server->add_option("--port", ss.port, "TCP port");
  sync_server->add_option("--clients", ss.clients, "clients to wait for");
  sync_server->add_option("--condition", ss.condition, "condition name");
  sync_server->add_option("--duration", ss.duration_s, "seconds");
  sync_server->add_option("--ready-timeout", ss.ready_timeout_s, "seconds to wait for clients");

  app::SyncClientOptions sc;
  auto* sync_client = cli.add_subcommand("sync-client", "arm once and report the start and stop received");
  sync_client->add_option("--server", sc.server, "host:port");
  sync_client->add_option("--node-id", sc.node_id, "node id");
  sync_client->add_option("--timeout", sc.timeout_s, "seconds to wait for the session");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = cli.exit(e);
    return rc == 0 ? app::kExitOk : app::kExitUsage;
  }

  std::signal(SIGINT, on_sigint);
  if (*acquire) {
    if (!acq_model.empty()) acq.model = acq_model;
    return app::cmd_acquire(acq, std::cin, std::cout, std::cerr);
  }
  if (*serve) {
    if (!srv_model.empty()) srv.model = srv_model;
    srv.ws_port = ws_port;
    return app::cmd_serve(srv, std::cin, std::cout, std::cerr);
  }
  if (*analyze) return app::cmd_analyze(analysis_json, data_dir, out_dir, std::cout, std::cerr);
  if (*train_cmd) return app::cmd_train_sqa(train, std::cout, std::cerr);
  if (*simulate) {
    if (!sim_experiment.empty()) sim.experiment = sim_experiment;
    return app::cmd_simulate(sim, std::cout, std::cerr);
  }
  if (*sync_server) return app::cmd_sync_server(ss, std::cout, std::cerr);
  if (*sync_client) return app::cmd_sync_client(sc, std::cout, std::cerr);
  return app::kExitUsage;
}
