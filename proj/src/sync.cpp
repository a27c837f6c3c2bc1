#include "physiort/sync.hpp"

#include <sys/socket.h>

#include <algorithm>
#include <boost/asio.hpp>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <future>
#include <istream>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include <json.hpp>

#include "physiort/error.hpp"

namespace physiort::sync {

namespace asio = boost::asio;
using asio::ip::tcp;
using nlohmann::json;

namespace {

constexpr std::size_t kMaxLineBytes = 64 * 1024;

const std::map<std::string, MsgType, std::less<>> kTypes{{"hello", MsgType::hello},
                                                          {"ready", MsgType::ready},
                                                          {"start", MsgType::start},
                                                          {"stop", MsgType::stop},
                                                          {"heartbeat", MsgType::heartbeat}};
const std::map<std::string, Phase, std::less<>> kPhases{
    {"idle", Phase::idle}, {"armed", Phase::armed}, {"recording", Phase::recording}, {"stopped", Phase::stopped}};

void validate(const SyncMessage& m) {
  auto bad = [](const std::string& what) { throw Error(Errc::MalformedMessage, what); };
  if (m.type == MsgType::start) {
    if (m.session_id.empty()) bad("start requires session_id");
    if (m.condition.empty()) bad("start requires condition");
  }
  if ((m.type == MsgType::hello || m.type == MsgType::ready) && m.node_id.empty()) bad("hello/ready require node_id");
  if (m.duration_s && !(std::isfinite(*m.duration_s) && *m.duration_s > 0.0)) bad("duration_s must be positive");
  if (m.duration_s && m.type != MsgType::start && m.type != MsgType::heartbeat) bad("duration_s only accompanies start");
}

}  // namespace

std::string_view to_string(MsgType t) noexcept {
  switch (t) {
    case MsgType::hello: return "hello";
    case MsgType::ready: return "ready";
    case MsgType::start: return "start";
    case MsgType::stop: return "stop";
    case MsgType::heartbeat: return "heartbeat";
  }
  return "?";
}

std::string_view to_string(Phase p) noexcept {
  switch (p) {
    case Phase::idle: return "idle";
    case Phase::armed: return "armed";
    case Phase::recording: return "recording";
    case Phase::stopped: return "stopped";
  }
  return "?";
}

std::string encode_msg(const SyncMessage& m) {
  validate(m);
  json j{{"type", to_string(m.type)}};
  if (!m.node_id.empty()) j["node_id"] = m.node_id;
  if (!m.session_id.empty()) j["session_id"] = m.session_id;
  if (!m.condition.empty()) j["condition"] = m.condition;
  if (m.duration_s) j["duration_s"] = *m.duration_s;
  if (m.server_mono_ns != 0) j["server_mono_ns"] = m.server_mono_ns;
  if (m.phase) j["phase"] = to_string(*m.phase);
  if (!m.detail.empty()) j["detail"] = m.detail;
  return j.dump() + "\n";
}

SyncMessage decode_msg(std::string_view line) {
  while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.remove_suffix(1);
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception&) {
    throw Error(Errc::MalformedMessage, "sync line is not JSON");
  }
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) {
    throw Error(Errc::MalformedMessage, "sync message needs a string type");
  }
  const auto type_name = j["type"].get<std::string>();
  const auto t = kTypes.find(type_name);
  if (t == kTypes.end()) throw Error(Errc::UnknownType, "unknown sync message type: " + type_name, "type");

  SyncMessage m;
  m.type = t->second;
  for (const auto& [key, value] : j.items()) {
    auto text = [&]() -> std::string {
      if (!value.is_string()) throw Error(Errc::MalformedMessage, key + " must be a string", key);
      return value.get<std::string>();
    };
    if (key == "type") continue;
    if (key == "node_id") {
      m.node_id = text();
    } else if (key == "session_id") {
      m.session_id = text();
    } else if (key == "condition") {
      m.condition = text();
    } else if (key == "detail") {
      m.detail = text();
    } else if (key == "duration_s") {
      if (!value.is_number()) throw Error(Errc::MalformedMessage, "duration_s must be a number", key);
      m.duration_s = value.get<double>();
    } else if (key == "server_mono_ns") {
      if (!value.is_number_integer()) throw Error(Errc::MalformedMessage, "server_mono_ns must be an integer", key);
      m.server_mono_ns = value.get<std::int64_t>();
    } else if (key == "phase") {
      const auto p = kPhases.find(text());
      if (p == kPhases.end()) throw Error(Errc::MalformedMessage, "unknown phase", key);
      m.phase = p->second;
    } else {
      throw Error(Errc::MalformedMessage, "unknown field " + key, key);
    }
  }
  validate(m);
  return m;
}

std::int64_t mono_now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

// ---------------------------------------------------------------------------
// Client phase machine

bool legal_transition(Phase from, Phase to) noexcept {
  return (from == Phase::idle && to == Phase::armed) || (from == Phase::armed && to == Phase::recording) ||
         (from == Phase::recording && to == Phase::stopped) || (from == Phase::stopped && to == Phase::idle);
}

bool ClientStateMachine::arm() {
  if (phase_ != Phase::idle) return false;
  phase_ = Phase::armed;
  return true;
}

ClientAction ClientStateMachine::on_message(const SyncMessage& m) {
  if (m.type == MsgType::start && phase_ == Phase::armed) {
    phase_ = Phase::recording;
    start_ = m;
    return ClientAction::start_recording;
  }
  if (m.type == MsgType::stop && phase_ == Phase::recording &&
      (m.session_id.empty() || (start_ && m.session_id == start_->session_id))) {
    phase_ = Phase::stopped;
    return ClientAction::stop_recording;
  }
  return ClientAction::none;
}

ClientAction ClientStateMachine::finish() {
  if (phase_ != Phase::recording) return ClientAction::none;
  phase_ = Phase::stopped;
  return ClientAction::stop_recording;
}

bool ClientStateMachine::reset() {
  if (phase_ != Phase::stopped) return false;
  phase_ = Phase::idle;
  start_.reset();
  return true;
}

ClientAction ClientStateMachine::on_disconnect() {
  const auto action = finish();
  if (phase_ == Phase::stopped) reset();
  phase_ = Phase::idle;
  start_.reset();
  return action;
}

// ---------------------------------------------------------------------------
// Server

namespace {

struct Peer {
  explicit Peer(asio::io_context& io) : socket(io), buf(kMaxLineBytes) {}
  tcp::socket socket;
  asio::streambuf buf;
  std::deque<std::string> out;
  bool writing = false;
  bool close_after_write = false;
  bool open = true;
  std::string node_id;
  Phase phase = Phase::idle;
  bool registered = false;
  bool alive = true;  // false after missed heartbeats; the socket stays open
  std::chrono::steady_clock::time_point last_seen = std::chrono::steady_clock::now();
};

}  // namespace

struct SyncServer::Impl : std::enable_shared_from_this<SyncServer::Impl> {
  Impl(ServerOptions o, LocalHandler h) : opt(std::move(o)), local(std::move(h)), acceptor(io), timer(io) {}

  ServerOptions opt;
  LocalHandler local;
  asio::io_context io;
  tcp::acceptor acceptor;
  asio::steady_timer timer;
  std::thread thread;
  std::uint16_t bound_port = 0;

  // Mutated on the io thread only; mu guards reads from other threads.
  mutable std::mutex mu;
  mutable std::condition_variable changed;
  std::set<std::shared_ptr<Peer>> conns;
  Phase phase = Phase::idle;
  std::optional<SyncMessage> current;

  template <class F>
  auto run_on_io(F&& f) -> decltype(f()) {
    using R = decltype(f());
    std::packaged_task<R()> task(std::forward<F>(f));
    auto fut = task.get_future();
    asio::post(io, [&task] { task(); });
    return fut.get();
  }

  void accept() {
    auto peer = std::make_shared<Peer>(io);
    acceptor.async_accept(peer->socket, [self = shared_from_this(), peer](boost::system::error_code ec) {
      if (ec) {
        if (ec != asio::error::operation_aborted) self->accept();
        return;
      }
      peer->socket.set_option(tcp::no_delay(true));
      {
        std::lock_guard lock(self->mu);
        self->conns.insert(peer);
      }
      self->read(peer);
      self->accept();
    });
  }

  void read(const std::shared_ptr<Peer>& peer) {
    asio::async_read_until(peer->socket, peer->buf, '\n',
                           [self = shared_from_this(), peer](boost::system::error_code ec, std::size_t) {
                             if (ec) {
                               self->drop(peer);
                               return;
                             }
                             std::istream is(&peer->buf);
                             std::string line;
                             std::getline(is, line);
                             self->handle(peer, line);
                             if (peer->open) self->read(peer);
                           });
  }

  void send(const std::shared_ptr<Peer>& peer, std::string line) {
    if (!peer->open) return;
    peer->out.push_back(std::move(line));
  }

  void flush(const std::shared_ptr<Peer>& peer) {
    if (peer->writing || peer->out.empty() || !peer->open) return;
    peer->writing = true;
    asio::async_write(peer->socket, asio::buffer(peer->out.front()),
                      [self = shared_from_this(), peer](boost::system::error_code ec, std::size_t) {
                        peer->writing = false;
                        if (ec) {
                          self->drop(peer);
                          return;
                        }
                        peer->out.pop_front();
                        if (peer->out.empty() && peer->close_after_write) {
                          self->drop(peer);
                          return;
                        }
                        self->flush(peer);
                      });
  }

  void drop(const std::shared_ptr<Peer>& peer) {
    if (!peer->open) return;
    boost::system::error_code ignored;
    peer->socket.shutdown(tcp::socket::shutdown_both, ignored);
    peer->socket.close(ignored);
    std::lock_guard lock(mu);
    peer->open = false;
    conns.erase(peer);
    changed.notify_all();
  }

  std::shared_ptr<Peer> find(const std::string& node_id) {
    for (const auto& p : conns) {
      if (p->registered && p->node_id == node_id) return p;
    }
    return nullptr;
  }

  SyncMessage status_message() const {
    SyncMessage m;
    m.type = MsgType::heartbeat;
    m.node_id = "server";
    m.phase = phase;
    m.server_mono_ns = mono_now_ns();
    if (current) {
      m.session_id = current->session_id;
      m.condition = current->condition;
      m.duration_s = current->duration_s;
    }
    return m;
  }

  void handle(const std::shared_ptr<Peer>& peer, const std::string& line) {
    SyncMessage m;
    try {
      m = decode_msg(line);
    } catch (const Error&) {
      return;  // malformed lines are ignored; the connection stays up
    }
    std::unique_lock lock(mu);
    peer->last_seen = std::chrono::steady_clock::now();
    peer->alive = true;
    switch (m.type) {
      case MsgType::hello: {
        auto existing = find(m.node_id);
        if (existing && existing != peer && !existing->alive) {
          // A stale registration yields to the reconnecting node.
          existing->registered = false;
          lock.unlock();
          drop(existing);
          lock.lock();
          existing.reset();
        }
        if (existing && existing != peer) {
          lock.unlock();
          SyncMessage reject = status_message();
          reject.detail = "rejected: duplicate node_id " + m.node_id;
          send(peer, encode_msg(reject));
          peer->close_after_write = true;
          flush(peer);
          return;
        }
        peer->node_id = m.node_id;
        peer->registered = true;
        peer->phase = Phase::idle;
        changed.notify_all();
        lock.unlock();
        send(peer, encode_msg(status_message()));
        flush(peer);
        return;
      }
      case MsgType::ready:
        if (peer->registered) peer->phase = Phase::armed;
        break;
      case MsgType::heartbeat:
        if (peer->registered && m.phase) peer->phase = *m.phase;
        break;
      case MsgType::start:
      case MsgType::stop:
        break;  // only the server issues these
    }
    changed.notify_all();
  }

  void heartbeat() {
    timer.expires_after(opt.heartbeat_interval);
    timer.async_wait([self = shared_from_this()](boost::system::error_code ec) {
      if (ec) return;
      const auto now = std::chrono::steady_clock::now();
      const auto line = encode_msg(self->status_message());
      std::vector<std::shared_ptr<Peer>> peers;
      {
        std::lock_guard lock(self->mu);
        peers.assign(self->conns.begin(), self->conns.end());
      }
      for (const auto& p : peers) {
        if (now - p->last_seen > self->opt.heartbeat_interval * kMissedHeartbeatsForDisconnect) {
          std::lock_guard lock(self->mu);
          p->alive = false;
          self->changed.notify_all();
        }
        if (p->registered) {
          self->send(p, line);
          self->flush(p);
        }
      }
      self->heartbeat();
    });
  }

  StartReport do_start(const std::string& session_id, const std::string& condition, std::optional<double> duration_s) {
    StartReport report;
    SyncMessage m;
    m.type = MsgType::start;
    m.session_id = session_id;
    m.condition = condition;
    m.duration_s = duration_s;
    std::vector<std::shared_ptr<Peer>> targets;
    {
      std::lock_guard lock(mu);
      for (const auto& p : conns) {
        if (p->registered && p->phase == Phase::armed) targets.push_back(p);
      }
      if (targets.empty()) {
        report.no_ready_peers = true;
        if (!opt.allow_without_peers) throw Error(Errc::NoReadyPeers, "no client is armed");
      }
      m.server_mono_ns = mono_now_ns();
      const auto line = encode_msg(m);
      // Enqueue to every ready peer before any write is issued.
      for (const auto& p : targets) {
        send(p, line);
        p->phase = Phase::recording;
        report.recipients.push_back(p->node_id);
      }
      phase = Phase::recording;
      current = m;
      changed.notify_all();
    }
    for (const auto& p : targets) flush(p);
    if (local) local(m, mono_now_ns());
    report.message = m;
    return report;
  }

  void do_stop() {
    SyncMessage m;
    m.type = MsgType::stop;
    m.server_mono_ns = mono_now_ns();
    std::vector<std::shared_ptr<Peer>> targets;
    {
      std::lock_guard lock(mu);
      if (current) {
        m.session_id = current->session_id;
        m.condition = current->condition;
      }
      const auto line = encode_msg(m);
      for (const auto& p : conns) {
        if (!p->registered) continue;
        send(p, line);
        if (p->phase == Phase::recording) p->phase = Phase::stopped;
        targets.push_back(p);
      }
      if (phase == Phase::recording) phase = Phase::stopped;
      changed.notify_all();
    }
    for (const auto& p : targets) flush(p);
    if (local) local(m, mono_now_ns());
  }
};

SyncServer::SyncServer(ServerOptions options, LocalHandler local)
    : impl_(std::make_shared<Impl>(std::move(options), std::move(local))) {
  auto& im = *impl_;
  try {
    const tcp::endpoint ep(asio::ip::make_address(im.opt.bind_address), im.opt.port);
    im.acceptor.open(ep.protocol());
    im.acceptor.set_option(tcp::acceptor::reuse_address(true));
    im.acceptor.bind(ep);
    im.acceptor.listen();
  } catch (const boost::system::system_error& e) {
    if (e.code() == asio::error::address_in_use) {
      throw Error(Errc::PortInUse, "port " + std::to_string(im.opt.port) + " is in use");
    }
    throw Error(Errc::TransportError, std::string("cannot listen: ") + e.what());
  }
  im.bound_port = im.acceptor.local_endpoint().port();
  im.accept();
  im.heartbeat();
  im.thread = std::thread([&io = im.io] { io.run(); });
}

SyncServer::~SyncServer() { shutdown(); }

std::uint16_t SyncServer::port() const noexcept { return impl_->bound_port; }

std::vector<PeerInfo> SyncServer::peers() const {
  std::lock_guard lock(impl_->mu);
  std::vector<PeerInfo> out;
  for (const auto& p : impl_->conns) {
    if (p->registered) out.push_back({p->node_id, p->phase, p->open && p->alive});
  }
  std::sort(out.begin(), out.end(), [](const PeerInfo& a, const PeerInfo& b) { return a.node_id < b.node_id; });
  return out;
}

std::size_t SyncServer::ready_count() const {
  std::lock_guard lock(impl_->mu);
  return static_cast<std::size_t>(std::count_if(impl_->conns.begin(), impl_->conns.end(), [](const auto& p) {
    return p->registered && p->phase == Phase::armed;
  }));
}

Phase SyncServer::phase() const {
  std::lock_guard lock(impl_->mu);
  return impl_->phase;
}

StartReport SyncServer::start(const std::string& session_id, const std::string& condition,
                              std::optional<double> duration_s) {
  return impl_->run_on_io([&] { return impl_->do_start(session_id, condition, duration_s); });
}

void SyncServer::stop() {
  impl_->run_on_io([&] { impl_->do_stop(); });
}

void SyncServer::reset() {
  impl_->run_on_io([&] {
    std::lock_guard lock(impl_->mu);
    impl_->phase = Phase::idle;
    impl_->current.reset();
  });
}

bool SyncServer::wait_ready(std::size_t n, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(impl_->mu);
  return impl_->changed.wait_for(lock, timeout, [&] {
    return static_cast<std::size_t>(std::count_if(impl_->conns.begin(), impl_->conns.end(), [](const auto& p) {
             return p->registered && p->phase == Phase::armed;
           })) >= n;
  });
}

void SyncServer::shutdown() {
  if (!impl_ || !impl_->thread.joinable()) return;
  auto im = impl_;
  asio::post(im->io, [im] {
    boost::system::error_code ignored;
    im->acceptor.close(ignored);
    im->timer.cancel();
    std::vector<std::shared_ptr<Peer>> peers;
    {
      std::lock_guard lock(im->mu);
      peers.assign(im->conns.begin(), im->conns.end());
    }
    for (const auto& p : peers) im->drop(p);
    // Every pending operation now completes with an error and run() returns.
  });
  im->thread.join();
}

// ---------------------------------------------------------------------------
// Client

struct SyncClient::Impl {
  ClientOptions opt;
  ClientCallbacks cb;
  asio::io_context io;
  tcp::socket socket{io};
  std::thread reader, beater;

  mutable std::mutex mu;
  std::condition_variable wake;
  ClientStateMachine sm;
  bool is_connected = false;
  bool is_rejected = false;
  bool closing = false;
  std::mutex write_mu;

  void write(const SyncMessage& m) {
    const auto line = encode_msg(m);
    std::lock_guard lock(write_mu);
    boost::system::error_code ec;
    asio::write(socket, asio::buffer(line), ec);
  }

  SyncMessage own(MsgType type) const {
    SyncMessage m;
    m.type = type;
    m.node_id = opt.node_id;
    m.phase = sm.phase();
    return m;
  }

  void read_loop() {
    asio::streambuf buf(kMaxLineBytes);
    for (;;) {
      boost::system::error_code ec;
      asio::read_until(socket, buf, '\n', ec);
      const auto receipt = mono_now_ns();
      if (ec) break;
      std::istream is(&buf);
      std::string line;
      std::getline(is, line);
      SyncMessage m;
      try {
        m = decode_msg(line);
      } catch (const Error&) {
        continue;
      }
      ClientAction action = ClientAction::none;
      {
        std::lock_guard lock(mu);
        if (m.type == MsgType::heartbeat && m.detail.rfind("rejected", 0) == 0) is_rejected = true;
        action = sm.on_message(m);
      }
      if (action == ClientAction::start_recording && cb.on_start) cb.on_start(m, receipt);
      if (action == ClientAction::stop_recording && cb.on_stop) cb.on_stop(m);
      if (m.type == MsgType::heartbeat && cb.on_server_status) cb.on_server_status(m);
      if (m.type == MsgType::start || m.type == MsgType::stop) {
        std::lock_guard lock(mu);
        write(own(MsgType::heartbeat));
      }
    }
    bool notify = false;
    {
      std::lock_guard lock(mu);
      is_connected = false;
      sm.on_disconnect();
      notify = !closing;
      wake.notify_all();
    }
    if (notify && cb.on_closed) cb.on_closed();
  }

  void beat_loop() {
    std::unique_lock lock(mu);
    while (!closing && is_connected) {
      if (wake.wait_for(lock, opt.heartbeat_interval, [&] { return closing || !is_connected; })) break;
      write(own(MsgType::heartbeat));
    }
  }
};

SyncClient::SyncClient(ClientOptions options, ClientCallbacks callbacks) : impl_(std::make_shared<Impl>()) {
  auto& im = *impl_;
  im.opt = std::move(options);
  im.cb = std::move(callbacks);
  if (im.opt.node_id.empty()) throw Error(Errc::RangeViolation, "client needs a node_id", "node_id");

  boost::system::error_code result = asio::error::timed_out;
  try {
    tcp::resolver resolver(im.io);
    const auto endpoints = resolver.resolve(im.opt.host, std::to_string(im.opt.port));
    asio::async_connect(im.socket, endpoints,
                        [&](const boost::system::error_code& ec, const tcp::endpoint&) { result = ec; });
    im.io.run_for(im.opt.connect_timeout);
  } catch (const boost::system::system_error& e) {
    throw Error(Errc::ConnectFailed, std::string("cannot resolve server: ") + e.what());
  }
  if (result) {
    boost::system::error_code ignored;
    im.socket.close(ignored);
    throw Error(Errc::ConnectFailed,
                "cannot connect to " + im.opt.host + ":" + std::to_string(im.opt.port) + ": " + result.message());
  }
  im.socket.set_option(tcp::no_delay(true));
  im.is_connected = true;
  im.write(im.own(MsgType::hello));
  im.reader = std::thread([&im] { im.read_loop(); });
  im.beater = std::thread([&im] { im.beat_loop(); });
}

SyncClient::~SyncClient() { close(); }

Phase SyncClient::phase() const {
  std::lock_guard lock(impl_->mu);
  return impl_->sm.phase();
}

bool SyncClient::connected() const {
  std::lock_guard lock(impl_->mu);
  return impl_->is_connected;
}

bool SyncClient::rejected() const {
  std::lock_guard lock(impl_->mu);
  return impl_->is_rejected;
}

std::optional<SyncMessage> SyncClient::active_start() const {
  std::lock_guard lock(impl_->mu);
  return impl_->sm.active_start();
}

void SyncClient::arm() {
  std::lock_guard lock(impl_->mu);
  if (!impl_->is_connected) throw Error(Errc::ServerClosed, "not connected to a sync server");
  impl_->sm.arm();
  if (impl_->sm.phase() == Phase::armed) impl_->write(impl_->own(MsgType::ready));
}

void SyncClient::finish() {
  std::lock_guard lock(impl_->mu);
  if (impl_->sm.finish() == ClientAction::stop_recording && impl_->is_connected) {
    impl_->write(impl_->own(MsgType::heartbeat));
  }
}

void SyncClient::reset() {
  std::lock_guard lock(impl_->mu);
  if (impl_->sm.reset() && impl_->is_connected) impl_->write(impl_->own(MsgType::heartbeat));
}

void SyncClient::close() {
  auto& im = *impl_;
  {
    std::lock_guard lock(im.mu);
    if (im.closing) return;
    im.closing = true;
    im.wake.notify_all();
  }
  if (im.socket.is_open()) ::shutdown(im.socket.native_handle(), SHUT_RDWR);
  if (im.reader.joinable()) im.reader.join();
  if (im.beater.joinable()) im.beater.join();
  boost::system::error_code ignored;
  im.socket.close(ignored);
}

// ---------------------------------------------------------------------------

JitterReport measure_trigger_jitter(std::size_t n_clients) {
  std::mutex mu;
  std::condition_variable cv;
  JitterReport report;
  report.receipt_ns.assign(n_clients + 1, 0);
  std::size_t received = 0;
  auto note = [&](std::size_t slot, std::int64_t t) {
    std::lock_guard lock(mu);
    report.receipt_ns[slot] = t;
    ++received;
    cv.notify_all();
  };

  ServerOptions so;
  so.port = 0;
  so.bind_address = "127.0.0.1";
  SyncServer server(so, [&](const SyncMessage& m, std::int64_t t) {
    if (m.type == MsgType::start) note(0, t);
  });
  std::vector<std::unique_ptr<SyncClient>> clients;
  for (std::size_t i = 0; i < n_clients; ++i) {
    ClientOptions co;
    co.port = server.port();
    co.node_id = "node" + std::to_string(i + 1);
    ClientCallbacks cb;
    cb.on_start = [&, slot = i + 1](const SyncMessage&, std::int64_t t) { note(slot, t); };
    clients.push_back(std::make_unique<SyncClient>(co, cb));
    clients.back()->arm();
  }
  if (!server.wait_ready(n_clients, std::chrono::seconds(5))) {
    throw Error(Errc::NoReadyPeers, "clients did not become ready");
  }
  server.start("jitter", "trigger", std::nullopt);
  {
    std::unique_lock lock(mu);
    if (!cv.wait_for(lock, std::chrono::seconds(5), [&] { return received == n_clients + 1; })) {
      throw Error(Errc::TransportError, "not every node received the start");
    }
  }
  const auto [lo, hi] = std::minmax_element(report.receipt_ns.begin(), report.receipt_ns.end());
  report.max_skew_ns = *hi - *lo;
  for (auto& c : clients) c->close();
  server.shutdown();
  return report;
}

}  // namespace physiort::sync
