#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>

#include "patchflow/netd/wire.hpp"

namespace patchflow::netd {

class SocketError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Owning file descriptor.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(o.release()) {}
  Socket& operator=(Socket&& o) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket();

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  int release();
  // Unblocks any thread reading or accepting on this socket.
  void shutdown();

 private:
  int fd_ = -1;
};

class Listener {
 public:
  // Port 0 picks an ephemeral port; port() reports the bound one.
  Listener(const std::string& host, std::uint16_t port);

  // Blocks; nullopt once the listener is closed.
  std::optional<Socket> accept();
  void close();
  std::uint16_t port() const { return port_; }

 private:
  Socket socket_;
  std::uint16_t port_ = 0;
};

Socket connect_tcp(const std::string& host, std::uint16_t port);
// Retries until connected or the deadline passes (peers may start later).
std::optional<Socket> connect_with_retry(const std::string& host, std::uint16_t port,
                                         std::chrono::milliseconds deadline);

// A framed, metered message stream. send() may be called from several
// threads; receive() from one reader thread only.
class Connection {
 public:
  explicit Connection(Socket socket, std::chrono::milliseconds read_timeout = std::chrono::milliseconds{0});

  void send(const Message& m);
  // nullopt on orderly close. Throws WireError on protocol violations and
  // SocketError on I/O failure or read timeout.
  std::optional<Message> receive();
  void close();

  std::uint64_t bytes_sent() const { return bytes_sent_.load(); }
  std::uint64_t bytes_received() const { return bytes_received_.load(); }
  std::uint64_t messages_sent() const { return messages_sent_.load(); }

 private:
  bool read_exact(std::uint8_t* out, std::size_t n, bool eof_ok);

  Socket socket_;
  std::mutex send_mutex_;
  std::atomic<std::uint64_t> bytes_sent_{0};
  std::atomic<std::uint64_t> bytes_received_{0};
  std::atomic<std::uint64_t> messages_sent_{0};
};

}  // namespace patchflow::netd
