#include "splitwise/socket.hpp"

#include <cerrno>
#include <cmath>
#include <cstring>
#include <thread>

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include "splitwise/error.hpp"

namespace splitwise {

Endpoint Endpoint::parse(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon + 1 == text.size()) {
    fail(ErrorCode::kInvalidArgument, "endpoint '" + text + "' is not host:port");
  }
  Endpoint e;
  e.host = colon == 0 ? "0.0.0.0" : text.substr(0, colon);
  try {
    std::size_t used = 0;
    const auto port = std::stoul(text.substr(colon + 1), &used);
    if (used != text.size() - colon - 1 || port > 65535) throw std::out_of_range("port");
    e.port = static_cast<std::uint16_t>(port);
  } catch (const std::exception&) {
    fail(ErrorCode::kInvalidArgument, "endpoint '" + text + "' has a bad port");
  }
  return e;
}

namespace {

sockaddr_in resolve(const Endpoint& endpoint) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(endpoint.port);
  if (inet_pton(AF_INET, endpoint.host.c_str(), &addr.sin_addr) == 1) return addr;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(endpoint.host.c_str(), nullptr, &hints, &res) != 0 || !res) {
    fail(ErrorCode::kTransport, "cannot resolve host " + endpoint.host);
  }
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  freeaddrinfo(res);
  return addr;
}

[[noreturn]] void transport_failure(const std::string& what) {
  fail(ErrorCode::kTransport, what + ": " + std::strerror(errno));
}

}  // namespace

Socket& Socket::operator=(Socket&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = other.release();
  }
  return *this;
}

Socket Socket::connect(const Endpoint& endpoint) {
  const auto addr = resolve(endpoint);
  Socket s(::socket(AF_INET, SOCK_STREAM, 0));
  if (!s.valid()) transport_failure("socket");
  if (::connect(s.fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
    transport_failure("connect to " + endpoint.to_string());
  }
  int one = 1;
  setsockopt(s.fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return s;
}

void Socket::send_all(std::span<const std::uint8_t> bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const auto n = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      transport_failure("send");
    }
    sent += static_cast<std::size_t>(n);
  }
}

void Socket::recv_exact(std::span<std::uint8_t> out) {
  std::size_t got = 0;
  while (got < out.size()) {
    const auto n = ::recv(fd_, out.data() + got, out.size() - got, 0);
    if (n == 0) fail(ErrorCode::kTransport, "connection closed by peer");
    if (n < 0) {
      if (errno == EINTR) continue;
      transport_failure("recv");
    }
    got += static_cast<std::size_t>(n);
  }
}

void Socket::shutdown() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

void Socket::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

Listener::Listener(const Endpoint& endpoint) : socket_(::socket(AF_INET, SOCK_STREAM, 0)) {
  if (!socket_.valid()) transport_failure("socket");
  int one = 1;
  setsockopt(socket_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  auto addr = resolve(endpoint);
  if (::bind(socket_.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
    transport_failure("bind " + endpoint.to_string());
  }
  if (::listen(socket_.fd(), 64) != 0) transport_failure("listen");
  socklen_t len = sizeof(addr);
  getsockname(socket_.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

Socket Listener::accept() {
  while (true) {
    const int fd = ::accept(socket_.fd(), nullptr, nullptr);
    if (fd >= 0) {
      int one = 1;
      setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      return Socket(fd);
    }
    if (errno == EINTR || errno == ECONNABORTED) continue;
    return Socket();
  }
}

void Listener::shutdown() { socket_.shutdown(); }

void LinkShaper::send(Socket& socket, std::span<const std::uint8_t> bytes) const {
  if (enabled_) {
    // The peer must not see the last byte before the wire time has elapsed,
    // so the delay comes first.
    const double ms = transmission_ms(bytes.size(), link_);
    if (std::isfinite(ms) && ms > 0.0) {
      // Timer wakeups land late by up to a few hundred microseconds, which
      // is most of the wire time of a small frame: sleep short, spin the rest.
      using Clock = std::chrono::steady_clock;
      const auto deadline = Clock::now() + std::chrono::duration_cast<Clock::duration>(
                                               std::chrono::duration<double, std::milli>(ms));
      constexpr auto kSpin = std::chrono::microseconds(500);
      if (deadline - Clock::now() > kSpin) std::this_thread::sleep_until(deadline - kSpin);
      while (Clock::now() < deadline) std::this_thread::yield();
    }
  }
  socket.send_all(bytes);
}

void FrameChannel::send(const wire::Message& message) { shaper_.send(socket_, wire::encode_frame(message)); }

wire::Message FrameChannel::receive() {
  std::vector<std::uint8_t> buf(wire::kHeaderSize);
  socket_.recv_exact(buf);
  auto result = wire::decode_frame(buf);
  if (result.status == wire::DecodeStatus::kNeedMoreBytes) {
    const auto length = *wire::peek_payload_length(buf);
    buf.resize(wire::kHeaderSize + length);
    socket_.recv_exact(std::span<std::uint8_t>(buf).subspan(wire::kHeaderSize));
    result = wire::decode_frame(buf);
  }
  switch (result.status) {
    case wire::DecodeStatus::kOk: return std::move(*result.message);
    case wire::DecodeStatus::kUnsupportedVersion: fail(ErrorCode::kUnsupportedVersion, result.detail);
    case wire::DecodeStatus::kFramingError: fail(ErrorCode::kFraming, result.detail);
    default: fail(ErrorCode::kProtocol, result.detail.empty() ? "malformed frame" : result.detail);
  }
}

}  // namespace splitwise
