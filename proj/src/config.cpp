#include "physiort/config.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "physiort/error.hpp"

namespace physiort::config {

using nlohmann::json;

namespace {

// Wraps one JSON object, records which keys were read and rejects the rest.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) {
      throw Error(Errc::SchemaViolation, "expected an object", path_);
    }
  }

  bool has(const std::string& key) const { return obj_.contains(key); }

  const json& require(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) {
      throw Error(Errc::SchemaViolation, "missing field '" + field(key) + "'", field(key));
    }
    return *it;
  }

  const json* optional(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() || it->is_null() ? nullptr : &*it;
  }

  std::string string(const std::string& key) {
    const json& v = require(key);
    if (!v.is_string()) throw type_error(key, "string");
    return v.get<std::string>();
  }

  double number(const std::string& key) { return as_number(require(key), key); }

  double as_number(const json& v, const std::string& key) const {
    if (!v.is_number()) throw type_error(key, "number");
    return v.get<double>();
  }

  long long integer(const std::string& key) { return as_integer(require(key), key); }

  long long as_integer(const json& v, const std::string& key) const {
    if (v.is_number_integer()) return v.get<long long>();
    if (v.is_number_float()) {
      const double d = v.get<double>();
      if (std::isfinite(d) && std::floor(d) == d) return static_cast<long long>(d);
    }
    throw type_error(key, "integer");
  }

  bool boolean(const std::string& key) {
    const json& v = require(key);
    if (!v.is_boolean()) throw type_error(key, "boolean");
    return v.get<bool>();
  }

  const json& array(const std::string& key) {
    const json& v = require(key);
    if (!v.is_array()) throw type_error(key, "array");
    return v;
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) {
        throw Error(Errc::SchemaViolation, "unknown field '" + field(it.key()) + "'", field(it.key()));
      }
    }
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  Error type_error(const std::string& key, const char* expected) const {
    return Error(Errc::SchemaViolation, "field '" + field(key) + "' must be a " + expected, field(key));
  }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

json parse_document(std::string_view document) {
  try {
    return json::parse(document.begin(), document.end());
  } catch (const json::parse_error& e) {
    throw Error(Errc::MalformedDocument, e.what());
  }
}

template <typename Enum, std::size_t N>
Enum parse_enum(const std::string& text, const std::array<Enum, N>& values, const std::string& field) {
  for (Enum v : values) {
    if (to_string(v) == text) return v;
  }
  throw Error(Errc::SchemaViolation, "field '" + field + "' has unsupported value '" + text + "'", field);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoFailure, "cannot open " + path, path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

constexpr std::array kAllKinds{SignalKind::PPG, SignalKind::EDA, SignalKind::RSP};
constexpr std::array kAllMetrics{FeedbackMetric::HR, FeedbackMetric::pNN50, FeedbackMetric::RESP_RATE,
                                 FeedbackMetric::EDA_LEVEL};
constexpr std::array kAllTransports{Transport::serial, Transport::simulator, Transport::replay};
constexpr std::array kAllRoles{Role::standalone, Role::server, Role::client};

BiofeedbackSpec parse_biofeedback(const json& v) {
  ObjectReader r(v, "biofeedback");
  BiofeedbackSpec spec;
  spec.metric = parse_enum(r.string("metric"), kAllMetrics, r.field("metric"));
  spec.window_seconds = r.number("window_seconds");
  spec.step_seconds = r.number("step_seconds");
  spec.range_lo = r.number("range_lo");
  spec.range_hi = r.number("range_hi");
  r.finish();
  if (!(spec.window_seconds > 0.0) || !(spec.step_seconds > 0.0)) {
    throw Error(Errc::InvariantViolation, "biofeedback window and step must be positive", "biofeedback");
  }
  if (spec.step_seconds > spec.window_seconds) {
    throw Error(Errc::InvariantViolation, "biofeedback step_seconds exceeds window_seconds",
                "biofeedback.step_seconds");
  }
  if (!(spec.range_lo < spec.range_hi)) {
    throw Error(Errc::InvariantViolation, "biofeedback range_lo must be below range_hi", "biofeedback.range_lo");
  }
  return spec;
}

void range_check(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw Error(Errc::RangeViolation, field + " " + what, field);
}

}  // namespace

std::string_view to_string(SignalKind kind) noexcept {
  switch (kind) {
    case SignalKind::PPG: return "PPG";
    case SignalKind::EDA: return "EDA";
    case SignalKind::RSP: return "RSP";
  }
  return "?";
}

std::string_view to_string(FeedbackMetric metric) noexcept {
  switch (metric) {
    case FeedbackMetric::HR: return "HR";
    case FeedbackMetric::pNN50: return "pNN50";
    case FeedbackMetric::RESP_RATE: return "RESP_RATE";
    case FeedbackMetric::EDA_LEVEL: return "EDA_LEVEL";
  }
  return "?";
}

std::string_view to_string(Transport transport) noexcept {
  switch (transport) {
    case Transport::serial: return "serial";
    case Transport::simulator: return "simulator";
    case Transport::replay: return "replay";
  }
  return "?";
}

std::string_view to_string(Role role) noexcept {
  switch (role) {
    case Role::standalone: return "standalone";
    case Role::server: return "server";
    case Role::client: return "client";
  }
  return "?";
}

SignalKind parse_signal_kind(std::string_view text) {
  return parse_enum(std::string(text), kAllKinds, "kind");
}

bool valid_identifier(std::string_view s) noexcept {
  if (s.empty() || s.size() > 64) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  });
}

const ChannelSpec* ExperimentConfig::find_channel(std::string_view name) const {
  for (const auto& ch : channels) {
    if (ch.name == name) return &ch;
  }
  return nullptr;
}

ExperimentConfig experiment_from_json(const json& doc) {
  ObjectReader r(doc, "");
  ExperimentConfig cfg;
  cfg.study_name = r.string("study_name");
  cfg.timed_acquisition = r.boolean("timed_acquisition");

  const json& conditions = r.array("conditions");
  if (conditions.empty()) {
    throw Error(Errc::SchemaViolation, "conditions must list at least one condition", "conditions");
  }
  for (std::size_t i = 0; i < conditions.size(); ++i) {
    ObjectReader c(conditions[i], "conditions[" + std::to_string(i) + "]");
    Condition cond;
    cond.name = c.string("name");
    if (const json* t = c.optional("max_time_seconds")) {
      cond.max_time_seconds = c.as_number(*t, "max_time_seconds");
    }
    c.finish();
    cfg.conditions.push_back(std::move(cond));
  }

  const json& channels = r.array("channels");
  for (std::size_t i = 0; i < channels.size(); ++i) {
    ObjectReader c(channels[i], "channels[" + std::to_string(i) + "]");
    ChannelSpec ch;
    ch.name = c.string("name");
    ch.kind = parse_enum(c.string("kind"), kAllKinds, c.field("kind"));
    ch.site = c.string("site");
    const long long idx = c.integer("adc_index");
    if (idx < 0) {
      throw Error(Errc::InvariantViolation, "adc_index must be non-negative", c.field("adc_index"));
    }
    ch.adc_index = static_cast<int>(idx);
    c.finish();
    cfg.channels.push_back(std::move(ch));
  }

  for (const auto& p : r.array("plot_channels")) {
    if (!p.is_string()) throw Error(Errc::SchemaViolation, "plot_channels entries must be strings", "plot_channels");
    cfg.plot_channels.push_back(p.get<std::string>());
  }
  cfg.data_dir = r.string("data_dir");
  if (const json* bf = r.optional("biofeedback")) cfg.biofeedback = parse_biofeedback(*bf);
  r.finish();

  // Invariants
  if (cfg.channels.empty()) throw Error(Errc::InvariantViolation, "at least one channel is required", "channels");
  std::set<std::string> names;
  std::set<int> indices;
  for (const auto& ch : cfg.channels) {
    if (!valid_identifier(ch.name)) {
      throw Error(Errc::InvariantViolation, "channel name '" + ch.name + "' is not an identifier", "channels");
    }
    if (!names.insert(ch.name).second) {
      throw Error(Errc::InvariantViolation, "duplicate channel name '" + ch.name + "'", "channels");
    }
    if (!indices.insert(ch.adc_index).second) {
      throw Error(Errc::InvariantViolation, "duplicate adc_index " + std::to_string(ch.adc_index), "channels");
    }
  }
  if (cfg.plot_channels.size() > kMaxPlotChannels) {
    throw Error(Errc::InvariantViolation, "at most 4 plot channels may be selected", "plot_channels");
  }
  for (const auto& p : cfg.plot_channels) {
    if (!cfg.find_channel(p)) {
      throw Error(Errc::InvariantViolation, "plot channel '" + p + "' is not declared", "plot_channels");
    }
  }
  std::set<std::string> cond_names;
  for (const auto& c : cfg.conditions) {
    if (!valid_identifier(c.name)) {
      throw Error(Errc::InvariantViolation, "condition name '" + c.name + "' is not an identifier", "conditions");
    }
    if (!cond_names.insert(c.name).second) {
      throw Error(Errc::InvariantViolation, "duplicate condition name '" + c.name + "'", "conditions");
    }
    if (cfg.timed_acquisition && !(c.max_time_seconds && *c.max_time_seconds > 0.0)) {
      throw Error(Errc::InvariantViolation, "timed condition '" + c.name + "' needs max_time_seconds > 0",
                  "conditions.max_time_seconds");
    }
  }
  return cfg;
}

ExperimentConfig load_experiment_config(std::string_view document) {
  return experiment_from_json(parse_document(document));
}

AcqConfig acq_from_json(const json& doc) {
  ObjectReader r(doc, "");
  AcqConfig cfg;
  cfg.sampling_rate = r.number("sampling_rate");
  const long long baud = r.integer("baudrate");
  const long long bits = r.integer("adc_bits");
  cfg.vref = r.number("vref");
  cfg.transport = parse_enum(r.string("transport"), kAllTransports, "transport");
  cfg.role = parse_enum(r.string("role"), kAllRoles, "role");
  if (const json* v = r.optional("server_address")) {
    if (!v->is_string()) throw Error(Errc::SchemaViolation, "server_address must be a string", "server_address");
    cfg.server_address = v->get<std::string>();
  }
  if (const json* v = r.optional("listen_port")) cfg.listen_port = static_cast<int>(r.as_integer(*v, "listen_port"));
  for (auto [key, slot] : {std::pair{"serial_port", &cfg.serial_port}, std::pair{"replay_path", &cfg.replay_path},
                           std::pair{"node_id", &cfg.node_id}}) {
    if (const json* v = r.optional(key)) {
      if (!v->is_string()) throw Error(Errc::SchemaViolation, std::string(key) + " must be a string", key);
      *slot = v->get<std::string>();
    }
  }
  if (const json* v = r.optional("simulator")) {
    ObjectReader s(*v, "simulator");
    if (s.has("hr_bpm")) cfg.simulator.hr_bpm = s.number("hr_bpm");
    if (s.has("ibi_jitter_ms")) cfg.simulator.ibi_jitter_ms = s.number("ibi_jitter_ms");
    if (s.has("snr_db")) cfg.simulator.snr_db = s.number("snr_db");
    if (s.has("seed")) cfg.simulator.seed = static_cast<std::uint64_t>(s.integer("seed"));
    if (s.has("paced")) cfg.simulator.paced = s.boolean("paced");
    s.finish();
  }
  r.finish();

  range_check(std::isfinite(cfg.sampling_rate) && cfg.sampling_rate >= kMinSamplingRate &&
                  cfg.sampling_rate <= kMaxSamplingRate,
              "sampling_rate", "must lie in [10, 10000] samples/s");
  range_check(baud >= kMinBaudrate && baud <= kMaxBaudrate, "baudrate", "must lie in [9600, 2000000]");
  cfg.baudrate = static_cast<int>(baud);
  range_check(bits == 10 || bits == 12, "adc_bits", "must be 10 or 12");
  cfg.adc_bits = static_cast<int>(bits);
  range_check(cfg.vref == 3.3 || cfg.vref == 5.0, "vref", "must be 3.3 or 5.0");
  if (cfg.role == Role::client) {
    range_check(cfg.server_address.has_value(), "server_address", "is required for role=client");
    split_host_port(*cfg.server_address);
  }
  if (cfg.role == Role::server) {
    range_check(cfg.listen_port.has_value(), "listen_port", "is required for role=server");
  }
  if (cfg.listen_port) {
    range_check(*cfg.listen_port >= 0 && *cfg.listen_port <= 65535, "listen_port", "must be a TCP port");
  }
  if (cfg.transport == Transport::serial) {
    range_check(cfg.serial_port.has_value(), "serial_port", "is required for transport=serial");
  }
  if (cfg.transport == Transport::replay) {
    range_check(cfg.replay_path.has_value(), "replay_path", "is required for transport=replay");
  }
  range_check(cfg.simulator.hr_bpm >= 30.0 && cfg.simulator.hr_bpm <= 220.0, "simulator.hr_bpm",
              "must lie in [30, 220]");
  range_check(cfg.simulator.ibi_jitter_ms >= 0.0, "simulator.ibi_jitter_ms", "must be non-negative");
  return cfg;
}

AcqConfig load_acq_config(std::string_view document) { return acq_from_json(parse_document(document)); }

json to_json(const ExperimentConfig& cfg) {
  json doc;
  doc["study_name"] = cfg.study_name;
  doc["timed_acquisition"] = cfg.timed_acquisition;
  doc["conditions"] = json::array();
  for (const auto& c : cfg.conditions) {
    json jc{{"name", c.name}};
    if (c.max_time_seconds) jc["max_time_seconds"] = *c.max_time_seconds;
    doc["conditions"].push_back(std::move(jc));
  }
  doc["channels"] = json::array();
  for (const auto& ch : cfg.channels) {
    doc["channels"].push_back(
        {{"name", ch.name}, {"kind", to_string(ch.kind)}, {"site", ch.site}, {"adc_index", ch.adc_index}});
  }
  doc["plot_channels"] = cfg.plot_channels;
  doc["data_dir"] = cfg.data_dir;
  if (cfg.biofeedback) {
    const auto& b = *cfg.biofeedback;
    doc["biofeedback"] = {{"metric", to_string(b.metric)},   {"window_seconds", b.window_seconds},
                          {"step_seconds", b.step_seconds}, {"range_lo", b.range_lo},
                          {"range_hi", b.range_hi}};
  }
  return doc;
}

json to_json(const AcqConfig& cfg) {
  json doc{{"sampling_rate", cfg.sampling_rate}, {"baudrate", cfg.baudrate},
           {"adc_bits", cfg.adc_bits},           {"vref", cfg.vref},
           {"transport", to_string(cfg.transport)}, {"role", to_string(cfg.role)}};
  if (cfg.server_address) doc["server_address"] = *cfg.server_address;
  if (cfg.listen_port) doc["listen_port"] = *cfg.listen_port;
  if (cfg.serial_port) doc["serial_port"] = *cfg.serial_port;
  if (cfg.replay_path) doc["replay_path"] = *cfg.replay_path;
  if (cfg.node_id) doc["node_id"] = *cfg.node_id;
  doc["simulator"] = {{"hr_bpm", cfg.simulator.hr_bpm},
                      {"ibi_jitter_ms", cfg.simulator.ibi_jitter_ms},
                      {"snr_db", cfg.simulator.snr_db},
                      {"seed", cfg.simulator.seed},
                      {"paced", cfg.simulator.paced}};
  return doc;
}

ExperimentConfig load_experiment_file(const std::string& path) { return load_experiment_config(read_file(path)); }

AcqConfig load_acq_file(const std::string& path) { return load_acq_config(read_file(path)); }

std::vector<ScheduledCondition> condition_schedule(const ExperimentConfig& cfg) {
  std::vector<ScheduledCondition> out;
  out.reserve(cfg.conditions.size());
  for (const auto& c : cfg.conditions) {
    out.push_back({c.name, cfg.timed_acquisition ? c.max_time_seconds : std::nullopt});
  }
  return out;
}

std::pair<std::string, int> split_host_port(std::string_view address) {
  const auto colon = address.rfind(':');
  if (colon == std::string_view::npos || colon == 0 || colon + 1 == address.size()) {
    throw Error(Errc::RangeViolation, "address must be host:port", "server_address");
  }
  int port = 0;
  for (char c : address.substr(colon + 1)) {
    if (c < '0' || c > '9' || port > 65535) {
      throw Error(Errc::RangeViolation, "invalid port in address", "server_address");
    }
    port = port * 10 + (c - '0');
  }
  if (port <= 0 || port > 65535) throw Error(Errc::RangeViolation, "invalid port in address", "server_address");
  return {std::string(address.substr(0, colon)), port};
}

}  // namespace physiort::config
