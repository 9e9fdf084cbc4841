#pragma once

// WebSocket transport for ServiceRunner (Boost.Beast). Each connection
// stamps its own strictly increasing seq and keeps a bounded outbound queue
// from which display frames are dropped first.

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "admsim/service.hpp"

namespace admsim {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

struct Endpoint {
  std::string host = "127.0.0.1";
  unsigned short port = 8765;
};

/// "host:port", ":port" or "host".
inline Endpoint parse_endpoint(const std::string& s, Endpoint fallback = {}) {
  Endpoint e = fallback;
  const auto colon = s.rfind(':');
  if (colon == std::string::npos) {
    if (!s.empty()) e.host = s;
    return e;
  }
  if (colon > 0) e.host = s.substr(0, colon);
  const std::string port = s.substr(colon + 1);
  unsigned long v = 0;
  const auto r = std::from_chars(port.data(), port.data() + port.size(), v);
  if (r.ec != std::errc() || r.ptr != port.data() + port.size() || v > 65535) {
    fail(ErrorCode::ConfigError, "bad port in bind address '" + s + "'");
  }
  e.port = static_cast<unsigned short>(v);
  return e;
}

namespace detail {

class WsConnection : public std::enable_shared_from_this<WsConnection> {
 public:
  WsConnection(tcp::socket socket, ServiceRunner& runner, std::size_t queue_capacity)
      : ws_(std::move(socket)), runner_(runner), capacity_(queue_capacity) {}

  void start() {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(beast::bind_front_handler(&WsConnection::on_accept, shared_from_this()));
  }

  /// Called from the simulation thread.
  void deliver(const Outgoing& m) {
    net::post(ws_.get_executor(), [self = shared_from_this(), m] { self->enqueue(m); });
  }

  void close() {
    net::post(ws_.get_executor(), [self = shared_from_this()] {
      if (self->ws_.is_open()) {
        beast::error_code ec;
        self->ws_.next_layer().socket().shutdown(tcp::socket::shutdown_both, ec);
      }
    });
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    std::weak_ptr<WsConnection> weak = shared_from_this();
    id_ = runner_.subscribe([weak](const Outgoing& m) {
      if (auto self = weak.lock()) self->deliver(m);
    });
    do_read();
  }

  void do_read() {
    ws_.async_read(buffer_, beast::bind_front_handler(&WsConnection::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      if (id_ >= 0) runner_.unsubscribe(id_);
      id_ = -1;
      return;
    }
    const std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    json cmd;
    try {
      cmd = json::parse(text);
    } catch (const json::parse_error& e) {
      enqueue({stream_message("error", 0.0,
                              {{"command_seq", nullptr}, {"code", "ParseError"}, {"message", std::string("ParseError: ") + e.what()}}),
               id_, false});
      do_read();
      return;
    }
    if (!runner_.submit(id_, cmd)) {
      const json seq = cmd.is_object() && cmd.contains("seq") ? cmd["seq"] : json(nullptr);
      enqueue({stream_message("error", 0.0, {{"command_seq", seq}, {"code", "Busy"}, {"message", "Busy: command queue full"}}), id_,
               false});
    }
    do_read();
  }

  void enqueue(const Outgoing& m) {
    if (m.droppable && queue_.size() >= capacity_) {
      ++dropped_;
      return;
    }
    json msg = m.message;
    msg["seq"] = ++seq_;
    if (m.droppable) msg["payload"]["frames_dropped"] = dropped_;
    queue_.push_back(msg.dump());
    if (!writing_) do_write();
  }

  void do_write() {
    writing_ = true;
    ws_.text(true);
    ws_.async_write(net::buffer(queue_.front()), beast::bind_front_handler(&WsConnection::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    writing_ = false;
    if (ec) {
      queue_.clear();
      return;
    }
    queue_.pop_front();
    if (!queue_.empty()) do_write();
  }

  websocket::stream<beast::tcp_stream> ws_;
  ServiceRunner& runner_;
  std::size_t capacity_;
  beast::flat_buffer buffer_;
  std::deque<std::string> queue_;
  bool writing_ = false;
  std::uint64_t seq_ = 0;
  std::uint64_t dropped_ = 0;
  int id_ = -1;
};

}  // namespace detail

/// Accept loop plus one I/O thread. Port 0 binds an ephemeral port.
class WsServer {
 public:
  WsServer(ServiceRunner& runner, const Endpoint& endpoint, std::size_t queue_capacity = 1024)
      : runner_(runner), acceptor_(ioc_), capacity_(queue_capacity) {
    beast::error_code ec;
    const auto address = net::ip::make_address(endpoint.host, ec);
    if (ec) fail(ErrorCode::ConfigError, "bad bind address '" + endpoint.host + "'");
    const tcp::endpoint ep(address, endpoint.port);
    acceptor_.open(ep.protocol(), ec);
    if (!ec) acceptor_.set_option(net::socket_base::reuse_address(true), ec);
    if (!ec) acceptor_.bind(ep, ec);
    if (!ec) acceptor_.listen(net::socket_base::max_listen_connections, ec);
    if (ec) fail(ErrorCode::ConfigError, "cannot listen on " + endpoint.host + ":" + std::to_string(endpoint.port) + ": " + ec.message());
  }

  ~WsServer() { stop(); }

  [[nodiscard]] unsigned short port() const { return acceptor_.local_endpoint().port(); }

  void start() {
    do_accept();
    thread_ = std::thread([this] { ioc_.run(); });
  }

  void stop() {
    if (!thread_.joinable()) return;
    net::post(ioc_, [this] {
      beast::error_code ec;
      acceptor_.close(ec);
      for (auto& w : connections_) {
        if (auto c = w.lock()) c->close();
      }
    });
    ioc_.stop();
    thread_.join();
  }

 private:
  void do_accept() {
    acceptor_.async_accept(net::make_strand(ioc_), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      auto conn = std::make_shared<detail::WsConnection>(std::move(socket), runner_, capacity_);
      connections_.push_back(conn);
      conn->start();
      do_accept();
    });
  }

  ServiceRunner& runner_;
  net::io_context ioc_;
  tcp::acceptor acceptor_;
  std::size_t capacity_;
  std::vector<std::weak_ptr<detail::WsConnection>> connections_;
  std::thread thread_;
};

}  // namespace admsim
