#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>

#include <json.hpp>

#include "physiort/app/hub.hpp"

namespace physiort::app {

struct GatewayOptions {
  std::uint16_t port = 8765;  // 0 picks a free port
  std::string bind_address = "127.0.0.1";
  std::size_t queue_limit = 512;  // per connection; the oldest message is dropped beyond it
};

using CommandHandler = std::function<nlohmann::json(const nlohmann::json&)>;
using Greeting = std::function<nlohmann::json()>;

// WebSocket endpoint for consoles. Every connection receives the greeting,
// then the hub broadcast stream; replies to its own commands go to it alone.
class Gateway {
 public:
  Gateway(GatewayOptions options, UiHub& hub, CommandHandler handler, Greeting greeting);  // PortInUse
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  std::uint16_t port() const noexcept;
  std::size_t connections() const;
  std::uint64_t dropped() const;  // broadcast messages discarded under backpressure
  void stop();

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

}  // namespace physiort::app
