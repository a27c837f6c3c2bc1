#include "physiort/app/gateway.hpp"

#include <atomic>
#include <deque>
#include <mutex>
#include <set>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "physiort/error.hpp"

namespace physiort::app {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using nlohmann::json;

namespace {

class Session : public std::enable_shared_from_this<Session> {
 public:
  Session(tcp::socket socket, std::size_t limit, std::atomic<std::uint64_t>& dropped)
      : ws_(std::move(socket)), limit_(limit), dropped_(dropped) {}

  websocket::stream<tcp::socket>& ws() { return ws_; }

  // Callable from any thread. Replies are never dropped.
  void enqueue(UiHub::Message m, bool droppable) {
    bool kick = false;
    {
      std::lock_guard lock(mu_);
      if (closed_) return;
      if (droppable) {
        while (queue_.size() >= limit_) {
          const auto it = std::find_if(queue_.begin(), queue_.end(), [](const auto& e) { return e.second; });
          if (it == queue_.end()) break;
          queue_.erase(it);
          dropped_.fetch_add(1);
        }
      }
      queue_.emplace_back(std::move(m), droppable);
      if (!writing_) {
        writing_ = true;
        kick = true;
      }
    }
    if (kick) asio::post(ws_.get_executor(), [self = shared_from_this()] { self->write_next(); });
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    queue_.clear();
  }

 private:
  void write_next() {
    UiHub::Message m;
    {
      std::lock_guard lock(mu_);
      if (queue_.empty() || closed_) {
        writing_ = false;
        return;
      }
      m = std::move(queue_.front().first);
      queue_.pop_front();
    }
    ws_.text(true);
    ws_.async_write(asio::buffer(*m), [self = shared_from_this(), m](beast::error_code ec, std::size_t) {
      if (ec) {
        self->close();
        return;
      }
      self->write_next();
    });
  }

  websocket::stream<tcp::socket> ws_;
  std::size_t limit_;
  std::atomic<std::uint64_t>& dropped_;
  std::mutex mu_;
  std::deque<std::pair<UiHub::Message, bool>> queue_;
  bool writing_ = false;
  bool closed_ = false;
};

}  // namespace

struct Gateway::Impl : std::enable_shared_from_this<Impl> {
  GatewayOptions opt;
  UiHub& hub;
  CommandHandler handler;
  Greeting greeting;
  asio::io_context io;
  tcp::acceptor acceptor{io};
  std::thread thread;
  mutable std::mutex mu;
  std::set<std::shared_ptr<Session>> sessions;
  std::atomic<std::uint64_t> dropped{0};
  std::uint16_t bound_port = 0;

  Impl(GatewayOptions o, UiHub& h, CommandHandler c, Greeting g)
      : opt(std::move(o)), hub(h), handler(std::move(c)), greeting(std::move(g)) {}

  void accept() {
    acceptor.async_accept([self = shared_from_this()](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      auto s = std::make_shared<Session>(std::move(socket), self->opt.queue_limit, self->dropped);
      s->ws().set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
      s->ws().async_accept([self, s](beast::error_code aec) {
        if (aec) return;
        self->attach(s);
      });
      self->accept();
    });
  }

  void attach(const std::shared_ptr<Session>& s) {
    {
      std::lock_guard lock(mu);
      sessions.insert(s);
    }
    if (greeting) s->enqueue(std::make_shared<const std::string>(greeting().dump()), false);
    const auto id = hub.subscribe([weak = std::weak_ptr<Session>(s)](const UiHub::Message& m) {
      if (auto p = weak.lock()) p->enqueue(m, true);
    });
    read(s, std::make_shared<beast::flat_buffer>(), id);
  }

  void read(const std::shared_ptr<Session>& s, std::shared_ptr<beast::flat_buffer> buf, std::uint64_t sub) {
    s->ws().async_read(*buf, [self = shared_from_this(), s, buf, sub](beast::error_code ec, std::size_t) {
      if (ec) {
        self->hub.unsubscribe(sub);
        s->close();
        std::lock_guard lock(self->mu);
        self->sessions.erase(s);
        return;
      }
      const std::string text = beast::buffers_to_string(buf->data());
      buf->consume(buf->size());
      json reply;
      try {
        reply = self->handler(json::parse(text));
      } catch (const json::exception&) {
        reply = msg::error("command is not valid JSON");
      } catch (const std::exception& e) {
        reply = msg::error(e.what());
      }
      if (!reply.is_null()) s->enqueue(std::make_shared<const std::string>(reply.dump()), false);
      self->read(s, buf, sub);
    });
  }
};

Gateway::Gateway(GatewayOptions options, UiHub& hub, CommandHandler handler, Greeting greeting)
    : impl_(std::make_shared<Impl>(std::move(options), hub, std::move(handler), std::move(greeting))) {
  auto& im = *impl_;
  beast::error_code ec;
  const tcp::endpoint ep(asio::ip::make_address(im.opt.bind_address, ec), im.opt.port);
  if (ec) throw Error(Errc::RangeViolation, "bad bind address " + im.opt.bind_address);
  im.acceptor.open(ep.protocol(), ec);
  if (!ec) im.acceptor.set_option(asio::socket_base::reuse_address(true), ec);
  if (!ec) im.acceptor.bind(ep, ec);
  if (!ec) im.acceptor.listen(asio::socket_base::max_listen_connections, ec);
  if (ec) throw Error(Errc::PortInUse, "cannot listen on port " + std::to_string(im.opt.port) + ": " + ec.message());
  im.bound_port = im.acceptor.local_endpoint().port();
  im.accept();
  im.thread = std::thread([p = impl_] { p->io.run(); });
}

Gateway::~Gateway() { stop(); }

std::uint16_t Gateway::port() const noexcept { return impl_->bound_port; }

std::size_t Gateway::connections() const {
  std::lock_guard lock(impl_->mu);
  return impl_->sessions.size();
}

std::uint64_t Gateway::dropped() const { return impl_->dropped.load(); }

void Gateway::stop() {
  auto im = impl_;
  if (!im->thread.joinable()) return;
  asio::post(im->io, [im] {
    beast::error_code ignored;
    im->acceptor.close(ignored);
    std::set<std::shared_ptr<Session>> sessions;
    {
      std::lock_guard lock(im->mu);
      sessions.swap(im->sessions);
    }
    for (const auto& s : sessions) {
      s->close();
      beast::get_lowest_layer(s->ws()).close(ignored);
    }
  });
  im->thread.join();
}

}  // namespace physiort::app
