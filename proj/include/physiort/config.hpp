#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace physiort::config {

enum class SignalKind { PPG, EDA, RSP };
enum class FeedbackMetric { HR, pNN50, RESP_RATE, EDA_LEVEL };
enum class Transport { serial, simulator, replay };
enum class Role { standalone, server, client };

std::string_view to_string(SignalKind kind) noexcept;
std::string_view to_string(FeedbackMetric metric) noexcept;
std::string_view to_string(Transport transport) noexcept;
std::string_view to_string(Role role) noexcept;
SignalKind parse_signal_kind(std::string_view text);

// Names that end up in paths and CSV columns: 1-64 of [A-Za-z0-9_-].
bool valid_identifier(std::string_view s) noexcept;

struct Condition {
  std::string name;
  // Absent only when timed_acquisition is false.
  std::optional<double> max_time_seconds;
};

struct ChannelSpec {
  std::string name;
  SignalKind kind = SignalKind::PPG;
  std::string site;
  int adc_index = 0;
};

struct BiofeedbackSpec {
  FeedbackMetric metric = FeedbackMetric::HR;
  double window_seconds = 10.0;
  double step_seconds = 2.0;
  double range_lo = 0.0;
  double range_hi = 1.0;
};

struct ExperimentConfig {
  std::string study_name;
  std::vector<Condition> conditions;
  bool timed_acquisition = true;
  std::vector<ChannelSpec> channels;
  std::vector<std::string> plot_channels;
  std::string data_dir;
  std::optional<BiofeedbackSpec> biofeedback;

  const ChannelSpec* find_channel(std::string_view name) const;
};

// Parameters of the built-in signal simulator transport.
struct SimulatorSettings {
  double hr_bpm = 72.0;
  double ibi_jitter_ms = 30.0;
  double snr_db = 30.0;
  std::uint64_t seed = 1;
  bool paced = true;
};

struct AcqConfig {
  double sampling_rate = 64.0;
  int baudrate = 115200;
  int adc_bits = 10;
  double vref = 5.0;
  Transport transport = Transport::simulator;
  Role role = Role::standalone;
  std::optional<std::string> server_address;  // host:port
  std::optional<int> listen_port;
  std::optional<std::string> serial_port;
  std::optional<std::string> replay_path;
  std::optional<std::string> node_id;
  SimulatorSettings simulator;
};

constexpr double kMinSamplingRate = 10.0;
constexpr double kMaxSamplingRate = 10000.0;
constexpr int kMinBaudrate = 9600;
constexpr int kMaxBaudrate = 2000000;
constexpr std::size_t kMaxPlotChannels = 4;

ExperimentConfig load_experiment_config(std::string_view document);
AcqConfig load_acq_config(std::string_view document);

ExperimentConfig experiment_from_json(const nlohmann::json& doc);
AcqConfig acq_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const ExperimentConfig& cfg);
nlohmann::json to_json(const AcqConfig& cfg);

ExperimentConfig load_experiment_file(const std::string& path);
AcqConfig load_acq_file(const std::string& path);

struct ScheduledCondition {
  std::string name;
  std::optional<double> duration_seconds;  // nullopt = runs until stopped
};

std::vector<ScheduledCondition> condition_schedule(const ExperimentConfig& cfg);

// Splits "host:port"; throws RangeViolation on a malformed address.
std::pair<std::string, int> split_host_port(std::string_view address);

}  // namespace physiort::config
