#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "physiort/config.hpp"
#include "physiort/dsp.hpp"
#include "physiort/store.hpp"

namespace physiort::app {

// Fan-out of gateway messages. Each message is serialized once; sinks run
// under the hub lock and must not block.
class UiHub {
 public:
  using Message = std::shared_ptr<const std::string>;
  using Sink = std::function<void(const Message&)>;

  std::uint64_t subscribe(Sink sink);
  void unsubscribe(std::uint64_t id);
  void publish(const nlohmann::json& msg);
  std::size_t subscribers() const;
  std::uint64_t published() const;

 private:
  mutable std::mutex mu_;
  std::map<std::uint64_t, Sink> sinks_;
  std::uint64_t next_id_ = 1;
  std::uint64_t published_ = 0;
};

// Collects every message, for tests and headless logging.
class HubRecorder {
 public:
  explicit HubRecorder(UiHub& hub);
  ~HubRecorder();
  std::vector<nlohmann::json> messages() const;
  std::vector<nlohmann::json> of_type(const std::string& type) const;

 private:
  UiHub& hub_;
  std::uint64_t id_;
  mutable std::mutex mu_;
  std::vector<std::string> raw_;
};

// ---------------------------------------------------------------------------
// Gateway message builders. All times are session-relative seconds.

namespace msg {

nlohmann::json samples(double t0, double dt, const std::map<std::string, std::vector<double>>& channels);
nlohmann::json sqi(const std::vector<std::pair<double, std::int8_t>>& bins, const std::vector<double>& prob_bad);
nlohmann::json metric(double t, const std::string& channel, dsp::Metric metric, const std::optional<double>& value);
nlohmann::json biofeedback(double t, config::FeedbackMetric metric, double value, double norm);
nlohmann::json mark_ack(const std::string& action, std::int32_t code, std::uint64_t sample, double t);
nlohmann::json error(const std::string& message, const std::string& command = {});

}  // namespace msg

}  // namespace physiort::app
