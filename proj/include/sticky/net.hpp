#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace sticky {

// Owning TCP socket (IPv4). Move-only.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket();
  Socket(Socket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
  Socket& operator=(Socket&& o) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  void close();
  // Wakes any thread blocked on this socket.
  void shutdown();

  // Receive timeout for subsequent reads; 0 disables it.
  void set_read_timeout_ms(int ms);

  // Throws Error on failure.
  void send_all(std::string_view data);
  // False on orderly EOF before the first byte. Throws Error on failure,
  // timeout or a short read.
  bool recv_exact(char* buf, std::size_t n);

 private:
  int fd_ = -1;
};

// Throws Error when the peer is unreachable within timeout_ms.
Socket connect_to(const std::string& host, std::uint16_t port, int timeout_ms);

class Listener {
 public:
  // Port 0 picks an ephemeral port. Throws PortInUseError or Error.
  Listener(const std::string& host, std::uint16_t port);

  std::uint16_t port() const { return port_; }
  // Waits at most timeout_ms; nullopt when nothing arrived or after close().
  std::optional<Socket> accept_for(int timeout_ms);
  void close() { sock_.close(); }

 private:
  Socket sock_;
  std::uint16_t port_ = 0;
};

// Frames are a 4-byte big-endian payload length followed by the payload.
inline constexpr std::uint32_t kMaxFrameBytes = 1u << 20;

void write_frame(Socket& s, std::string_view payload);
// nullopt on orderly EOF. Throws ProtocolError for oversized frames.
std::optional<std::string> read_frame(Socket& s);

}  // namespace sticky
