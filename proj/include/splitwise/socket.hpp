#pragma once

#include <chrono>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "splitwise/latency.hpp"
#include "splitwise/protocol.hpp"

namespace splitwise {

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  /// "host:port"; throws invalid-argument on a malformed string.
  static Endpoint parse(const std::string& text);
  std::string to_string() const { return host + ":" + std::to_string(port); }
};

/// Owning TCP socket (blocking, TCP_NODELAY).
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& other) noexcept : fd_(other.release()) {}
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close(); }

  static Socket connect(const Endpoint& endpoint);

  bool valid() const { return fd_ >= 0; }
  int fd() const { return fd_; }
  void send_all(std::span<const std::uint8_t> bytes);
  /// Fills `out` completely; throws transport error on EOF or failure.
  void recv_exact(std::span<std::uint8_t> out);
  void shutdown();
  void close();
  int release() {
    int fd = fd_;
    fd_ = -1;
    return fd;
  }

 private:
  int fd_ = -1;
};

class Listener {
 public:
  Listener() = default;
  /// Port 0 binds an ephemeral port.
  explicit Listener(const Endpoint& endpoint);
  Listener(Listener&&) noexcept = default;
  Listener& operator=(Listener&&) noexcept = default;

  std::uint16_t port() const { return port_; }
  /// Blocks; returns an invalid socket once the listener is shut down.
  Socket accept();
  void shutdown();

 private:
  Socket socket_;
  std::uint16_t port_ = 0;
};

/// Software link emulation: a send of B bytes is held back for
/// 8*B/bandwidth (+ overhead) before it is written, so the peer sees the
/// frame complete no earlier than a real link would deliver it.
class LinkShaper {
 public:
  LinkShaper() = default;
  explicit LinkShaper(LinkModel link) : link_(link), enabled_(true) { link_.validate(); }

  void send(Socket& socket, std::span<const std::uint8_t> bytes) const;
  bool enabled() const { return enabled_; }

 private:
  LinkModel link_;
  bool enabled_ = false;
};

/// Frame-level I/O over a socket.
class FrameChannel {
 public:
  explicit FrameChannel(Socket& socket, LinkShaper shaper = {}) : socket_(socket), shaper_(shaper) {}

  void send(const wire::Message& message);
  /// Reads exactly one frame. Malformed frames throw Error(kProtocol /
  /// kUnsupportedVersion / kFraming) carrying the decoder detail.
  wire::Message receive();

 private:
  Socket& socket_;
  LinkShaper shaper_;
};

}  // namespace splitwise
