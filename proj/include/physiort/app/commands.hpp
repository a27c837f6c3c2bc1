#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "physiort/error.hpp"

namespace physiort::app {

// Process exit codes of the CLI.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitConfig = 2,
  kExitTransport = 3,
  kExitIo = 4,
  kExitNetwork = 5,
  kExitData = 6,
  kExitInternal = 7,
};

int exit_code_for(Errc code) noexcept;

// Set by the CLI's SIGINT handler; long-running commands wind down when it flips.
std::atomic<bool>& interrupt_flag();

// CLI flag, then PHYSIORT_DATA_DIR, then the experiment's data_dir.
std::filesystem::path resolve_data_dir(const std::optional<std::string>& flag, const std::string& configured);

struct AcquireOptions {
  std::filesystem::path experiment;
  std::filesystem::path acquisition;
  std::string participant_id;
  std::optional<std::string> data_dir;
  std::optional<std::filesystem::path> model;
  std::optional<std::uint16_t> ws_port;  // serve only
  std::size_t wait_peers = 0;            // server role: armed clients required before each start
  double peer_timeout_s = 30.0;
};

// Headless session. Timed conditions run back to back; untimed ones start
// automatically and end on a "stop" line. Commands read from `in`, one per line:
//   start [condition] | stop | mark_on <code> | mark_off | status | wait <seconds> | quit
int cmd_acquire(const AcquireOptions& options, std::istream& in, std::ostream& out, std::ostream& err);

// Gateway-driven session; runs until "quit", end of `in`, or SIGINT.
int cmd_serve(const AcquireOptions& options, std::istream& in, std::ostream& out, std::ostream& err);

int cmd_analyze(const std::filesystem::path& analysis_json, const std::filesystem::path& data_dir,
                const std::filesystem::path& out_dir, std::ostream& out, std::ostream& err);

struct TrainSqaOptions {
  std::size_t segments = 2000;
  double artifact_fraction = 0.5;
  int epochs = 15;
  std::size_t batch_size = 256;
  std::uint64_t seed = 1;
  std::filesystem::path out;
};
int cmd_train_sqa(const TrainSqaOptions& options, std::ostream& out, std::ostream& err);

struct SimulateOptions {
  double hr_bpm = 72.0;
  double ibi_jitter_ms = 30.0;
  double snr_db = 30.0;
  double duration_s = 30.0;
  double fs = 64.0;
  int adc_bits = 10;
  std::uint64_t seed = 1;
  std::optional<std::filesystem::path> experiment;  // channel set; one PPG channel when absent
  std::filesystem::path out;                        // wire-grammar replay file
};
// Also writes <out>.truth.json with the generator's beat intervals.
int cmd_simulate(const SimulateOptions& options, std::ostream& out, std::ostream& err);
std::filesystem::path truth_path(const std::filesystem::path& replay);

struct SyncServerOptions {
  std::uint16_t port = 9798;
  std::size_t clients = 1;
  std::string condition = "sync";
  double duration_s = 5.0;
  double ready_timeout_s = 30.0;
};
// Waits for the clients, broadcasts one timed start, then stop.
int cmd_sync_server(const SyncServerOptions& options, std::ostream& out, std::ostream& err);

struct SyncClientOptions {
  std::string server = "127.0.0.1:9798";
  std::string node_id = "node";
  double timeout_s = 60.0;
};
// Arms once and reports the start and stop it receives.
int cmd_sync_client(const SyncClientOptions& options, std::ostream& out, std::ostream& err);

}  // namespace physiort::app
