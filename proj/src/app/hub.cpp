#include "physiort/app/hub.hpp"

namespace physiort::app {

using nlohmann::json;

std::uint64_t UiHub::subscribe(Sink sink) {
  std::lock_guard lock(mu_);
  const auto id = next_id_++;
  sinks_.emplace(id, std::move(sink));
  return id;
}

void UiHub::unsubscribe(std::uint64_t id) {
  std::lock_guard lock(mu_);
  sinks_.erase(id);
}

void UiHub::publish(const json& m) {
  auto text = std::make_shared<const std::string>(m.dump());
  std::lock_guard lock(mu_);
  ++published_;
  for (auto& [id, sink] : sinks_) sink(text);
}

std::size_t UiHub::subscribers() const {
  std::lock_guard lock(mu_);
  return sinks_.size();
}

std::uint64_t UiHub::published() const {
  std::lock_guard lock(mu_);
  return published_;
}

HubRecorder::HubRecorder(UiHub& hub) : hub_(hub) {
  id_ = hub_.subscribe([this](const UiHub::Message& m) {
    std::lock_guard lock(mu_);
    raw_.push_back(*m);
  });
}

HubRecorder::~HubRecorder() { hub_.unsubscribe(id_); }

std::vector<json> HubRecorder::messages() const {
  std::lock_guard lock(mu_);
  std::vector<json> out;
  out.reserve(raw_.size());
  for (const auto& r : raw_) out.push_back(json::parse(r));
  return out;
}

std::vector<json> HubRecorder::of_type(const std::string& type) const {
  std::vector<json> out;
  for (auto& m : messages()) {
    if (m.value("type", "") == type) out.push_back(std::move(m));
  }
  return out;
}

namespace msg {

json samples(double t0, double dt, const std::map<std::string, std::vector<double>>& channels) {
  json ch = json::object();
  for (const auto& [name, values] : channels) ch[name] = values;
  return {{"type", "samples"}, {"t0", t0}, {"dt", dt}, {"channels", ch}};
}

json sqi(const std::vector<std::pair<double, std::int8_t>>& bins, const std::vector<double>& prob_bad) {
  json arr = json::array();
  for (std::size_t i = 0; i < bins.size(); ++i) {
    arr.push_back({{"t", bins[i].first}, {"label", bins[i].second}, {"prob_bad", prob_bad.at(i)}});
  }
  return {{"type", "sqi"}, {"bin_s", 0.5}, {"bins", arr}};
}

json metric(double t, const std::string& channel, dsp::Metric m, const std::optional<double>& value) {
  return {{"type", "metric"},
          {"t", t},
          {"channel", channel},
          {"metric", dsp::to_string(m)},
          {"value", value ? json(*value) : json(nullptr)}};
}

json biofeedback(double t, config::FeedbackMetric m, double value, double norm) {
  return {{"type", "biofeedback"}, {"t", t}, {"metric", config::to_string(m)}, {"value", value}, {"norm", norm}};
}

json mark_ack(const std::string& action, std::int32_t code, std::uint64_t sample, double t) {
  return {{"type", "mark_ack"}, {"action", action}, {"code", code}, {"sample", sample}, {"t", t}};
}

json error(const std::string& message, const std::string& command) {
  json j{{"type", "error"}, {"message", message}};
  if (!command.empty()) j["command"] = command;
  return j;
}

}  // namespace msg

}  // namespace physiort::app
