#pragma once

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "physiort/app/hub.hpp"
#include "physiort/app/recorder.hpp"
#include "physiort/app/source.hpp"
#include "physiort/config.hpp"
#include "physiort/error.hpp"
#include "physiort/sqa.hpp"
#include "physiort/sync.hpp"

namespace physiort::app {

using SourceFactory = std::function<std::unique_ptr<ByteSource>(const std::string& condition, std::size_t index,
                                                                std::optional<double> duration_s)>;

struct ControllerOptions {
  config::ExperimentConfig experiment;
  config::AcqConfig acq;
  std::string participant_id;
  std::filesystem::path data_dir;
  const sqa::Model* model = nullptr;
  UiHub* hub = nullptr;
  SourceFactory source_factory;  // defaults to open_source
  std::chrono::milliseconds sync_heartbeat = sync::kHeartbeatInterval;
};

// Session state machine behind the gateway and the headless CLI. Console
// commands and sync triggers serialize through it; each condition records on
// its own worker thread.
//   standalone: commands drive the recorder directly
//   server:     start/stop are broadcast to clients and recorded locally
//   client:     the sync server drives recording; console start/stop are refused
class Controller {
 public:
  explicit Controller(ControllerOptions options);  // PortInUse, ConnectFailed
  ~Controller();
  Controller(const Controller&) = delete;
  Controller& operator=(const Controller&) = delete;

  // Executes one console command. Returns the reply for the requester (status or
  // error); broadcasts go through the hub.
  nlohmann::json handle(const nlohmann::json& command);

  nlohmann::json status() const;
  std::vector<ConditionResult> results() const;
  std::optional<std::string> last_error() const;
  std::optional<Errc> last_error_code() const;
  bool recording() const;
  bool finished() const;  // every scheduled condition has a file
  bool wait_until_idle(std::chrono::milliseconds timeout) const;
  bool wait_until_recording(std::chrono::milliseconds timeout) const;
  bool wait_until_finished(std::chrono::milliseconds timeout) const;

  // Direct equivalents of the console commands; throw InvalidState.
  void start_condition(std::optional<std::string> condition = std::nullopt);
  void stop();
  void mark_on(std::int32_t code);
  void mark_off();

  std::uint16_t sync_port() const;  // server role only
  sync::SyncServer* sync_server() noexcept { return server_.get(); }
  sync::SyncClient* sync_client() noexcept { return client_.get(); }

 private:
  void launch(const std::string& session_id, const std::string& condition, std::optional<double> duration_s,
              std::int64_t start_mono_ns);
  void worker_main(std::shared_ptr<Recorder> rec, std::unique_ptr<ByteSource> source);
  void publish_status();
  std::size_t condition_index(const std::string& name) const;
  nlohmann::json status_locked() const;
  void note_error(const std::exception& e);  // mu_ held

  ControllerOptions opt_;
  std::vector<config::ScheduledCondition> schedule_;
  std::string digest_;
  std::unique_ptr<sync::SyncServer> server_;
  std::unique_ptr<sync::SyncClient> client_;

  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::shared_ptr<Recorder> active_;
  std::string active_session_;
  std::thread worker_;
  std::vector<ConditionResult> results_;
  std::vector<bool> done_;
  std::optional<std::string> error_;
  std::optional<Errc> error_code_;
  std::uint64_t session_counter_ = 0;
  bool closing_ = false;
};

// Identifier-safe session id from the UTC clock and a counter.
std::string make_session_id(std::uint64_t counter);

}  // namespace physiort::app
