#include <doctest.h>

#include <functional>
#include <random>

#include "physiort/config.hpp"
#include "physiort/error.hpp"

using namespace physiort;
using namespace physiort::config;
using nlohmann::json;

namespace {

json experiment_doc() {
  return json::parse(R"({
    "study_name": "validation",
    "conditions": [{"name": "baseline", "max_time_seconds": 180},
                   {"name": "math_easy", "max_time_seconds": 180}],
    "timed_acquisition": true,
    "channels": [{"name": "ppg_finger", "kind": "PPG", "site": "finger", "adc_index": 0},
                 {"name": "ppg_ear", "kind": "PPG", "site": "ear", "adc_index": 1}],
    "plot_channels": ["ppg_finger", "ppg_ear"],
    "data_dir": "data"
  })");
}

json acq_doc() {
  return json::parse(R"({"sampling_rate": 256, "baudrate": 115200, "adc_bits": 12, "vref": 3.3,
                         "transport": "simulator", "role": "standalone"})");
}

Errc error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::InvalidState;
}

}  // namespace

TEST_CASE("two timed conditions of three minutes load in order") {
  const auto cfg = load_experiment_config(experiment_doc().dump());
  REQUIRE(cfg.conditions.size() == 2);
  CHECK(cfg.conditions[0].name == "baseline");
  CHECK(*cfg.conditions[1].max_time_seconds == 180.0);
  CHECK(cfg.timed_acquisition);
  CHECK(cfg.channels[1].site == "ear");
}

TEST_CASE("five plot channels violate the four-channel limit") {
  auto doc = experiment_doc();
  doc["channels"] = json::array();
  for (int i = 0; i < 5; ++i) {
    doc["channels"].push_back({{"name", "c" + std::to_string(i)}, {"kind", "PPG"}, {"site", "finger"}, {"adc_index", i}});
  }
  doc["plot_channels"] = {"c0", "c1", "c2", "c3", "c4"};
  CHECK(error_of([&] { load_experiment_config(doc.dump()); }) == Errc::InvariantViolation);
  doc["plot_channels"] = {"c0", "c1", "c2", "c3"};
  CHECK_NOTHROW(load_experiment_config(doc.dump()));
}

TEST_CASE("empty conditions list is a schema violation") {
  auto doc = experiment_doc();
  doc["conditions"] = json::array();
  CHECK(error_of([&] { load_experiment_config(doc.dump()); }) == Errc::SchemaViolation);
}

TEST_CASE("malformed JSON and unknown fields") {
  CHECK(error_of([] { load_experiment_config("{\"study_name\": "); }) == Errc::MalformedDocument);
  auto doc = experiment_doc();
  doc["timed_acquistion"] = true;  // typo
  Errc code{};
  try {
    load_experiment_config(doc.dump());
  } catch (const Error& e) {
    code = e.code();
    CHECK(e.field() == "timed_acquistion");
  }
  CHECK(code == Errc::SchemaViolation);
}

TEST_CASE("acquisition config ranges") {
  const auto cfg = load_acq_config(json::parse(R"({"sampling_rate": 256, "baudrate": 115200, "adc_bits": 10,
      "vref": 5.0, "transport": "serial", "serial_port": "/dev/ttyACM0", "role": "standalone"})")
                                       .dump());
  CHECK(cfg.sampling_rate == 256.0);
  CHECK(cfg.baudrate == 115200);
  CHECK(cfg.role == Role::standalone);

  auto doc = acq_doc();
  doc["sampling_rate"] = 20000;
  CHECK(error_of([&] { load_acq_config(doc.dump()); }) == Errc::RangeViolation);

  doc = acq_doc();
  doc["role"] = "client";
  CHECK(error_of([&] { load_acq_config(doc.dump()); }) == Errc::RangeViolation);
  doc["server_address"] = "10.0.0.2:9798";
  CHECK(load_acq_config(doc.dump()).server_address == "10.0.0.2:9798");

  doc = acq_doc();
  doc["role"] = "server";
  CHECK(error_of([&] { load_acq_config(doc.dump()); }) == Errc::RangeViolation);
  doc["listen_port"] = 9798;
  CHECK_NOTHROW(load_acq_config(doc.dump()));

  for (const auto& [field, value] : std::vector<std::pair<std::string, json>>{
           {"baudrate", 9599}, {"baudrate", 2000001}, {"adc_bits", 8}, {"vref", 1.8}, {"sampling_rate", 9.5}}) {
    doc = acq_doc();
    doc[field] = value;
    CHECK_MESSAGE(error_of([&] { load_acq_config(doc.dump()); }) == Errc::RangeViolation, field);
  }
}

TEST_CASE("condition schedule") {
  auto cfg = load_experiment_config(experiment_doc().dump());
  auto sched = condition_schedule(cfg);
  REQUIRE(sched.size() == 2);
  CHECK(sched[0].name == "baseline");
  CHECK(*sched[0].duration_seconds == 180.0);
  CHECK(sched[1].name == "math_easy");

  auto doc = experiment_doc();
  doc["timed_acquisition"] = false;
  sched = condition_schedule(load_experiment_config(doc.dump()));
  CHECK_FALSE(sched[0].duration_seconds.has_value());
  CHECK_FALSE(sched[1].duration_seconds.has_value());

  doc["conditions"] = {{{"name", "only"}}};
  sched = condition_schedule(load_experiment_config(doc.dump()));
  REQUIRE(sched.size() == 1);
  CHECK(sched[0].name == "only");
}

TEST_CASE("load, serialize, load is a fixed point") {
  auto doc = experiment_doc();
  doc["biofeedback"] = {{"metric", "HR"}, {"window_seconds", 10}, {"step_seconds", 2}, {"range_lo", 50}, {"range_hi", 120}};
  const auto once = to_json(load_experiment_config(doc.dump()));
  const auto twice = to_json(load_experiment_config(once.dump()));
  CHECK(once == twice);

  auto acq = acq_doc();
  acq["role"] = "client";
  acq["server_address"] = "localhost:9798";
  const auto a1 = to_json(load_acq_config(acq.dump()));
  CHECK(a1 == to_json(load_acq_config(a1.dump())));
}

TEST_CASE("property: single-invariant mutations of random valid documents are rejected") {
  std::mt19937 rng(7);
  struct Mutation {
    const char* name;
    std::function<void(json&)> apply;
    Errc expected;
  };
  const std::vector<Mutation> mutations{
      {"duplicate condition", [](json& d) { d["conditions"].push_back(d["conditions"][0]); }, Errc::InvariantViolation},
      {"non-positive duration", [](json& d) { d["conditions"][0]["max_time_seconds"] = 0; }, Errc::InvariantViolation},
      {"missing duration", [](json& d) { d["conditions"][0].erase("max_time_seconds"); }, Errc::InvariantViolation},
      {"undeclared plot channel", [](json& d) { d["plot_channels"].push_back("nope"); }, Errc::InvariantViolation},
      {"duplicate adc index", [](json& d) { d["channels"].back()["adc_index"] = d["channels"][0]["adc_index"]; },
       Errc::InvariantViolation},
      {"path-like channel name", [](json& d) { d["channels"][0]["name"] = "../x"; }, Errc::InvariantViolation},
      {"condition name with space", [](json& d) { d["conditions"][0]["name"] = "rest 1"; }, Errc::InvariantViolation},
      {"bad kind", [](json& d) { d["channels"][0]["kind"] = "ECG"; }, Errc::SchemaViolation},
      {"unknown field", [](json& d) { d["extra"] = 1; }, Errc::SchemaViolation},
      {"missing data_dir", [](json& d) { d.erase("data_dir"); }, Errc::SchemaViolation},
      {"wrong type", [](json& d) { d["timed_acquisition"] = "yes"; }, Errc::SchemaViolation},
      {"biofeedback step > window",
       [](json& d) {
         d["biofeedback"] = {{"metric", "HR"}, {"window_seconds", 5}, {"step_seconds", 6}, {"range_lo", 0}, {"range_hi", 1}};
       },
       Errc::InvariantViolation},
      {"biofeedback empty range",
       [](json& d) {
         d["biofeedback"] = {{"metric", "pNN50"}, {"window_seconds", 5}, {"step_seconds", 1}, {"range_lo", 2}, {"range_hi", 2}};
       },
       Errc::InvariantViolation},
  };

  for (int trial = 0; trial < 200; ++trial) {
    json doc{{"study_name", "s"}, {"timed_acquisition", true}, {"data_dir", "d"}};
    const int n_cond = 1 + static_cast<int>(rng() % 4);
    const int n_chan = 2 + static_cast<int>(rng() % 4);
    doc["conditions"] = json::array();
    for (int c = 0; c < n_cond; ++c) {
      doc["conditions"].push_back({{"name", "cond" + std::to_string(c)}, {"max_time_seconds", 1 + rng() % 300}});
    }
    doc["channels"] = json::array();
    doc["plot_channels"] = json::array();
    for (int c = 0; c < n_chan; ++c) {
      const std::string name = "ch" + std::to_string(c);
      doc["channels"].push_back({{"name", name}, {"kind", c % 3 == 0 ? "PPG" : (c % 3 == 1 ? "EDA" : "RSP")},
                                 {"site", "finger"}, {"adc_index", c * 2}});
      if (doc["plot_channels"].size() < 3) doc["plot_channels"].push_back(name);
    }
    REQUIRE_NOTHROW(load_experiment_config(doc.dump()));
    const auto& m = mutations[rng() % mutations.size()];
    m.apply(doc);
    CHECK_MESSAGE(error_of([&] { load_experiment_config(doc.dump()); }) == m.expected, m.name);
  }
}

TEST_CASE("host:port parsing") {
  CHECK(split_host_port("127.0.0.1:9798") == std::pair<std::string, int>{"127.0.0.1", 9798});
  CHECK(error_of([] { split_host_port("localhost"); }) == Errc::RangeViolation);
  CHECK(error_of([] { split_host_port("h:99999"); }) == Errc::RangeViolation);
}
