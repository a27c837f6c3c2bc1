#include "physiort/app/controller.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>

#include "physiort/error.hpp"
#include "physiort/store.hpp"

namespace physiort::app {

using nlohmann::json;

std::string make_session_id(std::uint64_t counter) {
  const auto secs = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[64];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return std::string(buf) + "_" + std::to_string(counter);
}

namespace {

std::uint64_t stream_seed(const std::string& participant, std::size_t index) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : participant) h = (h ^ c) * 1099511628211ULL;
  return h ^ (0x9e3779b97f4a7c15ULL * (index + 1));
}

}  // namespace

Controller::Controller(ControllerOptions options) : opt_(std::move(options)) {
  schedule_ = config::condition_schedule(opt_.experiment);
  done_.assign(schedule_.size(), false);
  digest_ = store::config_digest(opt_.experiment, opt_.acq);
  if (!opt_.source_factory) {
    opt_.source_factory = [acq = opt_.acq, channels = opt_.experiment.channels, pid = opt_.participant_id](
                              const std::string&, std::size_t index, std::optional<double> duration_s) {
      std::optional<std::uint64_t> limit;
      if (duration_s) limit = static_cast<std::uint64_t>(std::llround(*duration_s * acq.sampling_rate));
      return open_source(acq, channels, stream_seed(pid, index), limit);
    };
  }

  switch (opt_.acq.role) {
    case config::Role::standalone: break;
    case config::Role::server: {
      sync::ServerOptions so;
      so.port = static_cast<std::uint16_t>(opt_.acq.listen_port.value_or(sync::kDefaultPort));
      so.heartbeat_interval = opt_.sync_heartbeat;
      server_ = std::make_unique<sync::SyncServer>(so, [this](const sync::SyncMessage& m, std::int64_t receipt) {
        try {
          if (m.type == sync::MsgType::start) {
            launch(m.session_id, m.condition, m.duration_s, receipt);
          } else if (m.type == sync::MsgType::stop) {
            std::lock_guard lock(mu_);
            if (active_) active_->request_stop();
          }
        } catch (const std::exception& e) {
          std::lock_guard lock(mu_);
          note_error(e);
        }
      });
      break;
    }
    case config::Role::client: {
      const auto [host, port] = config::split_host_port(opt_.acq.server_address.value_or(""));
      sync::ClientOptions co;
      co.host = host;
      co.port = static_cast<std::uint16_t>(port);
      co.node_id = opt_.acq.node_id.value_or(opt_.participant_id);
      co.heartbeat_interval = opt_.sync_heartbeat;
      sync::ClientCallbacks cb;
      cb.on_start = [this](const sync::SyncMessage& m, std::int64_t receipt) {
        try {
          launch(m.session_id, m.condition, m.duration_s, receipt);
        } catch (const std::exception& e) {
          std::lock_guard lock(mu_);
          note_error(e);
          cv_.notify_all();
        }
      };
      cb.on_stop = [this](const sync::SyncMessage&) {
        std::lock_guard lock(mu_);
        if (active_) active_->request_stop();
      };
      cb.on_closed = [this] {
        std::lock_guard lock(mu_);
        if (active_) active_->request_stop();
        if (!closing_) {
          error_ = "sync server closed the connection";
          error_code_ = Errc::ServerClosed;
        }
        cv_.notify_all();
      };
      client_ = std::make_unique<sync::SyncClient>(co, cb);
      client_->arm();
      break;
    }
  }
}

Controller::~Controller() {
  {
    std::lock_guard lock(mu_);
    closing_ = true;
    if (active_) active_->request_stop();
  }
  if (client_) client_->close();
  if (worker_.joinable()) worker_.join();
  client_.reset();
  server_.reset();
}

std::size_t Controller::condition_index(const std::string& name) const {
  for (std::size_t i = 0; i < schedule_.size(); ++i) {
    if (schedule_[i].name == name) return i;
  }
  throw Error(Errc::InvalidState, "unknown condition '" + name + "'", "condition");
}

void Controller::launch(const std::string& session_id, const std::string& condition, std::optional<double> duration_s,
                        std::int64_t start_mono_ns) {
  const std::size_t index = condition_index(condition);
  std::thread old;
  {
    std::lock_guard lock(mu_);
    if (closing_) return;
    if (active_) throw Error(Errc::InvalidState, "a condition is already recording");
    RecorderSetup setup;
    setup.experiment = opt_.experiment;
    setup.acq = opt_.acq;
    setup.participant_id = opt_.participant_id;
    setup.data_dir = opt_.data_dir;
    setup.session_id = session_id;
    setup.condition = condition;
    setup.duration_s = duration_s;
    setup.model = opt_.model;
    setup.hub = opt_.hub;
    setup.config_digest = digest_;
    setup.start_mono_ns = start_mono_ns;
    setup.on_progress = [this](std::uint64_t) { publish_status(); };
    auto rec = std::make_shared<Recorder>(std::move(setup));
    active_ = rec;
    active_session_ = session_id;
    error_.reset();
    error_code_.reset();
    old = std::move(worker_);
    worker_ = std::thread([this, rec, condition, index, duration_s] {
      std::unique_ptr<ByteSource> source;
      try {
        source = opt_.source_factory(condition, index, duration_s);
      } catch (const std::exception& e) {
        std::lock_guard lock(mu_);
        note_error(e);
        active_.reset();
        cv_.notify_all();
        return;
      }
      worker_main(rec, std::move(source));
    });
    cv_.notify_all();
  }
  if (old.joinable()) old.join();
  publish_status();
}

void Controller::worker_main(std::shared_ptr<Recorder> rec, std::unique_ptr<ByteSource> source) {
  std::optional<ConditionResult> result;
  std::exception_ptr failure;
  try {
    result = rec->run(*source);
  } catch (const std::exception&) {
    failure = std::current_exception();
  }
  bool more = false;
  {
    std::lock_guard lock(mu_);
    if (result) {
      done_[condition_index(result->condition)] = true;
      results_.push_back(*result);
    }
    if (failure) {
      try {
        std::rethrow_exception(failure);
      } catch (const std::exception& e) {
        note_error(e);
      }
    }
    more = std::find(done_.begin(), done_.end(), false) != done_.end();
    active_.reset();
    cv_.notify_all();
  }
  if (client_) {
    try {
      client_->finish();
      client_->reset();
      if (more && client_->connected()) client_->arm();
    } catch (const Error&) {
    }
  }
  publish_status();
}

void Controller::start_condition(std::optional<std::string> condition) {
  if (opt_.acq.role == config::Role::client) {
    throw Error(Errc::InvalidState, "this node is driven by the sync server");
  }
  std::string name;
  std::optional<double> duration;
  std::string session;
  {
    std::lock_guard lock(mu_);
    if (active_) throw Error(Errc::InvalidState, "a condition is already recording");
    std::size_t index = 0;
    if (condition) {
      index = condition_index(*condition);
    } else {
      const auto it = std::find(done_.begin(), done_.end(), false);
      if (it == done_.end()) throw Error(Errc::InvalidState, "every condition has been recorded");
      index = static_cast<std::size_t>(it - done_.begin());
    }
    name = schedule_[index].name;
    duration = schedule_[index].duration_seconds;
    session = make_session_id(++session_counter_);
  }
  if (server_) {
    server_->reset();
    server_->start(session, name, duration);
    std::lock_guard lock(mu_);
    if (!active_ && error_) throw Error(Errc::InvalidState, *error_);
  } else {
    launch(session, name, duration, 0);
  }
}

void Controller::stop() {
  if (opt_.acq.role == config::Role::client) {
    throw Error(Errc::InvalidState, "this node is driven by the sync server");
  }
  {
    std::lock_guard lock(mu_);
    if (!active_) throw Error(Errc::InvalidState, "nothing is recording");
    if (!server_) {
      active_->request_stop();
      return;
    }
  }
  server_->stop();
}

void Controller::mark_on(std::int32_t code) {
  std::lock_guard lock(mu_);
  if (!active_) throw Error(Errc::InvalidState, "nothing is recording");
  active_->mark_on(code);
}

void Controller::mark_off() {
  std::lock_guard lock(mu_);
  if (!active_) throw Error(Errc::InvalidState, "nothing is recording");
  active_->mark_off();
}

json Controller::handle(const json& command) {
  std::string type;
  try {
    if (!command.is_object() || !command.contains("type") || !command["type"].is_string()) {
      throw Error(Errc::MalformedMessage, "command must be an object with a string 'type'");
    }
    type = command["type"].get<std::string>();
    if (type == "start_condition") {
      std::optional<std::string> cond;
      if (command.contains("condition") && !command["condition"].is_null()) {
        if (!command["condition"].is_string()) throw Error(Errc::MalformedMessage, "condition must be a string");
        cond = command["condition"].get<std::string>();
      }
      start_condition(cond);
    } else if (type == "stop") {
      stop();
    } else if (type == "mark_on") {
      if (!command.contains("code") || !command["code"].is_number_integer()) {
        throw Error(Errc::MalformedMessage, "mark_on needs an integer code");
      }
      const auto code = command["code"].get<std::int64_t>();
      if (code <= 0 || code > INT32_MAX) throw Error(Errc::RangeViolation, "event code must be positive", "code");
      mark_on(static_cast<std::int32_t>(code));
    } else if (type == "mark_off") {
      mark_off();
    } else if (type != "status") {
      throw Error(Errc::UnknownType, "unknown command '" + type + "'");
    }
    return status();
  } catch (const std::exception& e) {
    return msg::error(e.what(), type);
  }
}

json Controller::status_locked() const {
  json conditions = json::array();
  for (std::size_t i = 0; i < schedule_.size(); ++i) {
    conditions.push_back({{"name", schedule_[i].name},
                          {"duration_s", schedule_[i].duration_seconds ? json(*schedule_[i].duration_seconds) : json()},
                          {"done", static_cast<bool>(done_[i])}});
  }
  std::string phase = "idle";
  if (active_) phase = "recording";
  else if (std::find(done_.begin(), done_.end(), false) == done_.end()) phase = "finished";
  json j{{"type", "status"},
         {"role", config::to_string(opt_.acq.role)},
         {"phase", phase},
         {"participant_id", opt_.participant_id},
         {"timed", opt_.experiment.timed_acquisition},
         {"conditions", conditions},
         {"condition", active_ ? json(active_->setup().condition) : json()},
         {"session_id", active_ ? json(active_session_) : json()},
         {"elapsed_s", active_ ? active_->elapsed_s() : 0.0}};
  if (error_) j["error"] = *error_;
  return j;
}

json Controller::status() const {
  json j;
  {
    std::lock_guard lock(mu_);
    j = status_locked();
  }
  json peers = json::array();
  if (server_) {
    for (const auto& p : server_->peers()) {
      peers.push_back({{"node_id", p.node_id}, {"phase", sync::to_string(p.phase)}, {"connected", p.connected}});
    }
  }
  if (client_) {
    j["sync_phase"] = sync::to_string(client_->phase());
    j["sync_connected"] = client_->connected();
  }
  j["peers"] = peers;
  return j;
}

void Controller::publish_status() {
  if (opt_.hub) opt_.hub->publish(status());
}

std::vector<ConditionResult> Controller::results() const {
  std::lock_guard lock(mu_);
  return results_;
}

std::optional<std::string> Controller::last_error() const {
  std::lock_guard lock(mu_);
  return error_;
}

std::optional<Errc> Controller::last_error_code() const {
  std::lock_guard lock(mu_);
  return error_code_;
}

void Controller::note_error(const std::exception& e) {
  error_ = e.what();
  if (const auto* pe = dynamic_cast<const Error*>(&e)) error_code_ = pe->code();
  else error_code_ = Errc::InvalidState;
}

bool Controller::recording() const {
  std::lock_guard lock(mu_);
  return active_ != nullptr;
}

bool Controller::finished() const {
  std::lock_guard lock(mu_);
  return std::find(done_.begin(), done_.end(), false) == done_.end();
}

bool Controller::wait_until_idle(std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mu_);
  return cv_.wait_for(lock, timeout, [&] { return !active_; });
}

bool Controller::wait_until_recording(std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mu_);
  return cv_.wait_for(lock, timeout, [&] { return active_ != nullptr; });
}

bool Controller::wait_until_finished(std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mu_);
  return cv_.wait_for(lock, timeout, [&] {
    return !active_ && std::find(done_.begin(), done_.end(), false) == done_.end();
  });
}

std::uint16_t Controller::sync_port() const {
  if (!server_) throw Error(Errc::InvalidState, "not a sync server");
  return server_->port();
}

}  // namespace physiort::app
