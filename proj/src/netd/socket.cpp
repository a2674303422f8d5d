#include "patchflow/netd/socket.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <thread>
#include <vector>

namespace patchflow::netd {
namespace {

std::string errno_text(const std::string& what) { return what + ": " + std::strerror(errno); }

sockaddr_in resolve(const std::string& host, std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) return addr;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || !res)
    throw SocketError("cannot resolve host " + host);
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  freeaddrinfo(res);
  return addr;
}

void set_option(int fd, int level, int name, int value) {
  ::setsockopt(fd, level, name, &value, sizeof value);
}

}  // namespace

Socket& Socket::operator=(Socket&& o) noexcept {
  if (this != &o) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = o.release();
  }
  return *this;
}

Socket::~Socket() {
  if (fd_ >= 0) ::close(fd_);
}

int Socket::release() {
  const int fd = fd_;
  fd_ = -1;
  return fd;
}

void Socket::shutdown() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

Listener::Listener(const std::string& host, std::uint16_t port) {
  socket_ = Socket(::socket(AF_INET, SOCK_STREAM, 0));
  if (!socket_.valid()) throw SocketError(errno_text("socket"));
  set_option(socket_.fd(), SOL_SOCKET, SO_REUSEADDR, 1);
  sockaddr_in addr = resolve(host, port);
  if (::bind(socket_.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
    throw SocketError(errno_text("bind " + host + ":" + std::to_string(port)));
  if (::listen(socket_.fd(), 64) != 0) throw SocketError(errno_text("listen"));
  socklen_t len = sizeof addr;
  ::getsockname(socket_.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

std::optional<Socket> Listener::accept() {
  while (true) {
    const int fd = ::accept(socket_.fd(), nullptr, nullptr);
    if (fd >= 0) {
      set_option(fd, IPPROTO_TCP, TCP_NODELAY, 1);
      set_option(fd, SOL_SOCKET, SO_KEEPALIVE, 1);
      return Socket(fd);
    }
    if (errno == EINTR || errno == ECONNABORTED) continue;
    return std::nullopt;
  }
}

void Listener::close() { socket_.shutdown(); }

Socket connect_tcp(const std::string& host, std::uint16_t port) {
  Socket s(::socket(AF_INET, SOCK_STREAM, 0));
  if (!s.valid()) throw SocketError(errno_text("socket"));
  sockaddr_in addr = resolve(host, port);
  if (::connect(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
    throw SocketError(errno_text("connect " + host + ":" + std::to_string(port)));
  set_option(s.fd(), IPPROTO_TCP, TCP_NODELAY, 1);
  set_option(s.fd(), SOL_SOCKET, SO_KEEPALIVE, 1);
  return s;
}

std::optional<Socket> connect_with_retry(const std::string& host, std::uint16_t port,
                                         std::chrono::milliseconds deadline) {
  const auto until = std::chrono::steady_clock::now() + deadline;
  while (true) {
    try {
      return connect_tcp(host, port);
    } catch (const SocketError&) {
      if (std::chrono::steady_clock::now() >= until) return std::nullopt;
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
  }
}

Connection::Connection(Socket socket, std::chrono::milliseconds read_timeout) : socket_(std::move(socket)) {
  if (read_timeout.count() > 0) {
    timeval tv{};
    tv.tv_sec = static_cast<time_t>(read_timeout.count() / 1000);
    tv.tv_usec = static_cast<suseconds_t>((read_timeout.count() % 1000) * 1000);
    ::setsockopt(socket_.fd(), SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
  }
}

void Connection::send(const Message& m) {
  const std::vector<std::uint8_t> bytes = encode(m);
  std::lock_guard lock(send_mutex_);
  std::size_t done = 0;
  while (done < bytes.size()) {
    const ssize_t n = ::send(socket_.fd(), bytes.data() + done, bytes.size() - done, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw SocketError(errno_text("send"));
    }
    done += static_cast<std::size_t>(n);
  }
  bytes_sent_ += bytes.size();
  ++messages_sent_;
}

bool Connection::read_exact(std::uint8_t* out, std::size_t n, bool eof_ok) {
  std::size_t done = 0;
  while (done < n) {
    const ssize_t r = ::recv(socket_.fd(), out + done, n - done, 0);
    if (r == 0) {
      if (eof_ok && done == 0) return false;
      throw WireError(WireError::Kind::Truncated, "connection closed mid-frame");
    }
    if (r < 0) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK) throw SocketError("read timed out");
      throw SocketError(errno_text("recv"));
    }
    done += static_cast<std::size_t>(r);
    bytes_received_ += static_cast<std::uint64_t>(r);
  }
  return true;
}

std::optional<Message> Connection::receive() {
  std::vector<std::uint8_t> frame(kLengthFieldBytes);
  if (!read_exact(frame.data(), kLengthFieldBytes, true)) return std::nullopt;
  // Rejected before any allocation for the body.
  const std::uint32_t length = check_length(std::span<const std::uint8_t, kLengthFieldBytes>(frame.data(), 4));
  frame.resize(kLengthFieldBytes + length);
  read_exact(frame.data() + kLengthFieldBytes, length, false);
  return decode(frame);
}

void Connection::close() { socket_.shutdown(); }

}  // namespace patchflow::netd
