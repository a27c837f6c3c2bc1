#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace physiort::sync {

constexpr std::uint16_t kDefaultPort = 9798;
constexpr std::chrono::milliseconds kHeartbeatInterval{2000};
constexpr int kMissedHeartbeatsForDisconnect = 3;

enum class MsgType { hello, ready, start, stop, heartbeat };
enum class Phase { idle, armed, recording, stopped };

std::string_view to_string(MsgType t) noexcept;
std::string_view to_string(Phase p) noexcept;

// One line of the protocol. phase and detail are optional extensions: heartbeats
// report the sender's phase, and a rejected hello carries the reason in detail.
struct SyncMessage {
  MsgType type = MsgType::heartbeat;
  std::string session_id;
  std::string condition;
  std::optional<double> duration_s;
  std::string node_id;
  std::int64_t server_mono_ns = 0;
  std::optional<Phase> phase;
  std::string detail;
  friend bool operator==(const SyncMessage&, const SyncMessage&) = default;
};

// Line includes the trailing '\n'. Both directions throw MalformedMessage for
// structurally invalid messages; decode throws UnknownType for unknown types.
std::string encode_msg(const SyncMessage& m);
SyncMessage decode_msg(std::string_view line);

std::int64_t mono_now_ns();

// ---------------------------------------------------------------------------
// Client-side phase machine, free of I/O.

enum class ClientAction { none, start_recording, stop_recording };

class ClientStateMachine {
 public:
  Phase phase() const noexcept { return phase_; }
  const std::optional<SyncMessage>& active_start() const noexcept { return start_; }

  bool arm();  // idle -> armed
  ClientAction on_message(const SyncMessage& m);
  ClientAction finish();       // recording -> stopped (local timer)
  bool reset();                // stopped -> idle
  ClientAction on_disconnect();  // any -> idle, stopping a recording first

 private:
  Phase phase_ = Phase::idle;
  std::optional<SyncMessage> start_;
};

bool legal_transition(Phase from, Phase to) noexcept;

// ---------------------------------------------------------------------------
// Server

struct PeerInfo {
  std::string node_id;
  Phase phase = Phase::idle;
  bool connected = true;
};

struct ServerOptions {
  std::uint16_t port = kDefaultPort;  // 0 picks a free port
  std::string bind_address = "0.0.0.0";
  bool allow_without_peers = true;
  std::chrono::milliseconds heartbeat_interval = kHeartbeatInterval;
};

struct StartReport {
  SyncMessage message;
  std::vector<std::string> recipients;  // clients the start was queued to
  bool no_ready_peers = false;
};

// Receives broadcast start/stop on the server node itself, on the server's
// dispatch thread, with the local receipt time.
using LocalHandler = std::function<void(const SyncMessage&, std::int64_t receipt_ns)>;

class SyncServer {
 public:
  explicit SyncServer(ServerOptions options, LocalHandler local = {});  // PortInUse
  ~SyncServer();
  SyncServer(const SyncServer&) = delete;
  SyncServer& operator=(const SyncServer&) = delete;

  std::uint16_t port() const noexcept;
  std::vector<PeerInfo> peers() const;
  std::size_t ready_count() const;
  Phase phase() const;

  // Queues start to every armed peer, then hands it to the local handler, in
  // one dispatch step. Throws NoReadyPeers unless allow_without_peers.
  StartReport start(const std::string& session_id, const std::string& condition, std::optional<double> duration_s);
  void stop();
  // Server back to idle after a finished session.
  void reset();
  // Waits until at least n peers are armed or the timeout passes.
  bool wait_ready(std::size_t n, std::chrono::milliseconds timeout) const;
  void shutdown();

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

// ---------------------------------------------------------------------------
// Client

struct ClientOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = kDefaultPort;
  std::string node_id;
  std::chrono::milliseconds heartbeat_interval = kHeartbeatInterval;
  std::chrono::milliseconds connect_timeout{3000};
};

struct ClientCallbacks {
  std::function<void(const SyncMessage&, std::int64_t receipt_ns)> on_start;
  std::function<void(const SyncMessage&)> on_stop;
  std::function<void()> on_closed;                       // server went away
  std::function<void(const SyncMessage&)> on_server_status;  // heartbeats from the server
};

class SyncClient {
 public:
  SyncClient(ClientOptions options, ClientCallbacks callbacks);  // ConnectFailed; sends hello
  ~SyncClient();
  SyncClient(const SyncClient&) = delete;
  SyncClient& operator=(const SyncClient&) = delete;

  Phase phase() const;
  bool connected() const;
  std::optional<SyncMessage> active_start() const;
  bool rejected() const;  // the server refused our hello

  void arm();     // idle -> armed, sends ready
  void finish();  // local end of a timed recording
  void reset();   // stopped -> idle
  void close();

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

// Loopback harness: one server plus n_clients clients in this process. Every
// recorder notes its monotonic receipt time of the same start.
struct JitterReport {
  std::int64_t max_skew_ns = 0;
  std::vector<std::int64_t> receipt_ns;  // server first, then clients
};
JitterReport measure_trigger_jitter(std::size_t n_clients);

}  // namespace physiort::sync
