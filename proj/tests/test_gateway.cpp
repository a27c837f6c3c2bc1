#include <doctest.h>

#include <sys/socket.h>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <fstream>
#include <set>
#include <thread>

#include "physiort/app/controller.hpp"
#include "physiort/app/gateway.hpp"
#include "physiort/app/hub.hpp"
#include "physiort/error.hpp"
#include "physiort/sqa.hpp"
#include "support/app_fixtures.hpp"
#include "support/json_schema.hpp"
#include "support/scratch_dir.hpp"

using namespace physiort;
using namespace physiort::app;
using namespace std::chrono_literals;
using physiort::test::eventually;
using nlohmann::json;

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

const test::SchemaValidator& schema() {
  static const test::SchemaValidator v(json::parse(std::ifstream(PHYSIORT_SCHEMA)));
  return v;
}

class WsClient {
 public:
  explicit WsClient(std::uint16_t port) {
    ws_.next_layer().connect(tcp::endpoint(asio::ip::make_address("127.0.0.1"), port));
    timeval tv{10, 0};
    ::setsockopt(ws_.next_layer().native_handle(), SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    ws_.handshake("127.0.0.1", "/");
  }
  json read() {
    beast::flat_buffer b;
    ws_.read(b);
    return json::parse(beast::buffers_to_string(b.data()));
  }
  void send(const json& j) {
    ws_.text(true);
    ws_.write(asio::buffer(j.dump()));
  }
  std::vector<json> read_until(const std::function<bool(const json&)>& last) {
    std::vector<json> out;
    while (true) {
      out.push_back(read());
      if (last(out.back())) return out;
    }
  }

 private:
  asio::io_context io_;
  websocket::stream<tcp::socket> ws_{io_};
};

bool finished_status(const json& m) { return m["type"] == "status" && m["phase"] == "finished"; }

void expect_valid(const json& m) {
  const auto errs = schema().validate(m);
  std::string all;
  for (const auto& e : errs) all += e + "\n";
  const std::string detail = m.dump() + "\n" + all;
  CHECK_MESSAGE(errs.empty(), detail);
}

ControllerOptions options(const std::filesystem::path& dir, double seconds, bool timed, bool paced, UiHub& hub) {
  ControllerOptions o;
  o.experiment = test::experiment(test::ppg_eda_channels(), {seconds}, timed);
  config::BiofeedbackSpec bf;
  bf.range_lo = 50;
  bf.range_hi = 110;
  o.experiment.biofeedback = bf;
  o.acq = test::simulator_acq(64, paced);
  o.participant_id = "P01";
  o.data_dir = dir;
  o.hub = &hub;
  return o;
}

}  // namespace

TEST_CASE("schema validator accepts well-formed messages and rejects broken ones") {
  expect_valid(msg::metric(1.0, "ppg", dsp::Metric::HR_BPM, 70.0));
  expect_valid(msg::metric(1.0, "ppg", dsp::Metric::PSQI, std::nullopt));
  expect_valid(msg::biofeedback(2.0, config::FeedbackMetric::HR, 80, 0.5));
  expect_valid(msg::mark_ack("mark_on", 3, 128, 2.0));
  expect_valid(msg::error("nope", "dance"));
  expect_valid(msg::sqi({{0.0, 1}, {0.5, 0}}, {0.1, 0.9}));
  expect_valid(msg::samples(0.0, 1.0 / 30.0, {{"a", {1.0, 2.0}}}));

  CHECK(!schema().validate(msg::biofeedback(2.0, config::FeedbackMetric::HR, 80, 1.5)).empty());
  CHECK(!schema().validate(msg::samples(0.0, 1.0 / 64.0, {{"a", {1.0}}})).empty());
  CHECK(!schema().validate(msg::samples(0.0, 0.1, {{"a", {}}, {"b", {}}, {"c", {}}, {"d", {}}, {"e", {}}})).empty());
  auto m = msg::metric(1.0, "ppg", dsp::Metric::HR_BPM, 70.0);
  m.erase("value");
  CHECK(!schema().validate(m).empty());
  CHECK(!schema().validate(json{{"type", "telemetry"}}).empty());
  auto extra = msg::error("x");
  extra["debug"] = 1;
  CHECK(!schema().validate(extra).empty());

  CHECK(schema().validate(json{{"type", "mark_on"}, {"code", 3}}, "command").empty());
  CHECK(schema().validate(json{{"type", "start_condition"}}, "command").empty());
  CHECK(schema().validate(json{{"type", "stop"}}, "command").empty());
  CHECK(!schema().validate(json{{"type", "mark_on"}}, "command").empty());
  CHECK(!schema().validate(json{{"type", "mark_on"}, {"code", 0}}, "command").empty());
}

TEST_CASE("every gateway message of a recorded session conforms to the schema") {
  ScratchDir dir("gw-schema");
  UiHub hub;
  const auto model = sqa::init_model(2);
  auto o = options(dir.path(), 20, true, false, hub);
  o.model = &model;
  Controller ctl(o);
  Gateway gw({0, "127.0.0.1", 4096}, hub, [&](const json& c) { return ctl.handle(c); }, [&] { return ctl.status(); });
  WsClient console(gw.port());
  const auto greeting = console.read();
  CHECK(greeting["type"] == "status");
  CHECK(greeting["phase"] == "idle");
  console.send({{"type", "start_condition"}});
  const auto seen = console.read_until(finished_status);

  std::set<std::string> types;
  for (const auto& m : seen) {
    expect_valid(m);
    types.insert(m["type"].get<std::string>());
  }
  CHECK(types == std::set<std::string>{"status", "samples", "sqi", "metric", "biofeedback"});
  CHECK(gw.dropped() == 0);
}

TEST_CASE("console commands over the socket: marks, stop, errors") {
  ScratchDir dir("gw-cmds");
  UiHub hub;
  Controller ctl(options(dir.path(), 0, false, true, hub));
  Gateway gw({0, "127.0.0.1", 4096}, hub, [&](const json& c) { return ctl.handle(c); }, [&] { return ctl.status(); });
  WsClient console(gw.port());
  WsClient observer(gw.port());
  expect_valid(console.read());
  expect_valid(observer.read());

  std::vector<json> log;
  auto until = [&](const std::function<bool(const json&)>& pred) {
    for (auto& m : console.read_until(pred)) log.push_back(std::move(m));
  };
  console.send({{"type", "mark_on"}, {"code", 3}});
  until([](const json& m) { return m["type"] == "error" && m["command"] == "mark_on"; });
  console.send({{"type", "start_condition"}});
  until([](const json& m) { return m["type"] == "status" && m["phase"] == "recording"; });
  console.send({{"type", "mark_on"}, {"code", 3}});
  until([](const json& m) { return m["type"] == "mark_ack" && m["action"] == "mark_on"; });
  console.send({{"type", "mark_off"}});
  until([](const json& m) { return m["type"] == "mark_ack" && m["action"] == "mark_off"; });
  console.send("not a command");
  until([](const json& m) { return m["type"] == "error"; });
  console.send({{"type", "stop"}});
  until(finished_status);
  for (const auto& m : log) expect_valid(m);

  // The observer sees the broadcasts, never the console's replies.
  const auto obs = observer.read_until(finished_status);
  int acks = 0;
  for (const auto& m : obs) {
    expect_valid(m);
    CHECK(m["type"] != "error");
    acks += m["type"] == "mark_ack" ? 1 : 0;
  }
  CHECK(acks == 2);
  REQUIRE(ctl.wait_until_idle(5s));
  CHECK(ctl.results().at(0).marks.size() <= 1);
}

TEST_CASE("two consoles receive the identical broadcast stream") {
  ScratchDir dir("gw-fanout");
  UiHub hub;
  Controller ctl(options(dir.path(), 8, true, false, hub));
  Gateway gw({0, "127.0.0.1", 4096}, hub, [&](const json& c) { return ctl.handle(c); }, [&] { return ctl.status(); });
  WsClient a(gw.port());
  WsClient b(gw.port());
  a.read();
  b.read();
  std::vector<json> got_a, got_b;
  std::thread ta([&] { got_a = a.read_until(finished_status); });
  std::thread tb([&] { got_b = b.read_until(finished_status); });
  ctl.start_condition();
  ta.join();
  tb.join();
  CHECK(got_a.size() > 20);
  CHECK(got_a == got_b);
}

TEST_CASE("a console that never reads does not stall publishers") {
  UiHub hub;
  Gateway gw({0, "127.0.0.1", 8}, hub, [](const json&) { return json(); }, [] { return json{{"type", "status"}}; });
  // Handshake, then silence.
  asio::io_context io;
  websocket::stream<tcp::socket> slow(io);
  slow.next_layer().connect(tcp::endpoint(asio::ip::make_address("127.0.0.1"), gw.port()));
  slow.handshake("127.0.0.1", "/");
  REQUIRE(eventually([&] { return hub.subscribers() == 1; }));

  const std::string payload(100000, 'x');
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < 2000; ++i) hub.publish({{"type", "samples"}, {"pad", payload}, {"i", i}});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(secs < 10.0);
  CHECK(eventually([&] { return gw.dropped() > 0; }));

  WsClient fresh(gw.port());
  CHECK(fresh.read()["type"] == "status");
}

TEST_CASE("gateway reports a busy port") {
  UiHub hub;
  Gateway first({0, "127.0.0.1", 16}, hub, [](const json&) { return json(); }, {});
  try {
    Gateway second({first.port(), "127.0.0.1", 16}, hub, [](const json&) { return json(); }, {});
    FAIL("expected PortInUse");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::PortInUse);
  }
}
