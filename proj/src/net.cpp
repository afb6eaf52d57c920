#include "sticky/net.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "sticky/errors.hpp"

namespace sticky {

namespace {

std::string sys_error(const std::string& what) { return what + ": " + std::strerror(errno); }

sockaddr_in resolve(const std::string& host, std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  const std::string h = host == "localhost" ? "127.0.0.1" : host;
  if (inet_pton(AF_INET, h.c_str(), &addr.sin_addr) == 1) return addr;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  addrinfo* res = nullptr;
  if (getaddrinfo(h.c_str(), nullptr, &hints, &res) != 0 || res == nullptr)
    throw Error("cannot resolve host '" + host + "'");
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  freeaddrinfo(res);
  return addr;
}

}  // namespace

Socket::~Socket() { close(); }

Socket& Socket::operator=(Socket&& o) noexcept {
  if (this != &o) {
    close();
    fd_ = o.fd_;
    o.fd_ = -1;
  }
  return *this;
}

void Socket::close() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

void Socket::shutdown() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

void Socket::set_read_timeout_ms(int ms) {
  timeval tv{ms / 1000, (ms % 1000) * 1000};
  setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
}

void Socket::send_all(std::string_view data) {
  while (!data.empty()) {
    const ssize_t n = ::send(fd_, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(sys_error("send"));
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

bool Socket::recv_exact(char* buf, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const ssize_t r = ::recv(fd_, buf + got, n - got, 0);
    if (r == 0) {
      if (got == 0) return false;
      throw Error("recv: connection closed mid-frame");
    }
    if (r < 0) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK) throw Error("recv: timed out");
      throw Error(sys_error("recv"));
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

Socket connect_to(const std::string& host, std::uint16_t port, int timeout_ms) {
  const sockaddr_in addr = resolve(host, port);
  Socket s(::socket(AF_INET, SOCK_STREAM, 0));
  if (!s.valid()) throw Error(sys_error("socket"));
  const int flags = fcntl(s.fd(), F_GETFL, 0);
  fcntl(s.fd(), F_SETFL, flags | O_NONBLOCK);
  const std::string where = host + ":" + std::to_string(port);
  if (::connect(s.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof addr) < 0) {
    if (errno != EINPROGRESS) throw Error(sys_error("connect " + where));
    pollfd pfd{s.fd(), POLLOUT, 0};
    const int ready = ::poll(&pfd, 1, timeout_ms);
    if (ready <= 0) throw Error("connect " + where + ": timed out");
    int err = 0;
    socklen_t len = sizeof err;
    getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
    if (err != 0) {
      errno = err;
      throw Error(sys_error("connect " + where));
    }
  }
  fcntl(s.fd(), F_SETFL, flags);
  const int one = 1;
  setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return s;
}

Listener::Listener(const std::string& host, std::uint16_t port) {
  const sockaddr_in addr = resolve(host, port);
  sock_ = Socket(::socket(AF_INET, SOCK_STREAM, 0));
  if (!sock_.valid()) throw Error(sys_error("socket"));
  const int one = 1;
  setsockopt(sock_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  const std::string where = host + ":" + std::to_string(port);
  if (::bind(sock_.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof addr) < 0) {
    if (errno == EADDRINUSE) throw PortInUseError("address " + where + " is already in use");
    throw Error(sys_error("bind " + where));
  }
  if (::listen(sock_.fd(), 64) < 0) throw Error(sys_error("listen " + where));
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  getsockname(sock_.fd(), reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
}

std::optional<Socket> Listener::accept_for(int timeout_ms) {
  if (!sock_.valid()) return std::nullopt;
  pollfd pfd{sock_.fd(), POLLIN, 0};
  if (::poll(&pfd, 1, timeout_ms) <= 0 || !(pfd.revents & POLLIN)) return std::nullopt;
  const int fd = ::accept(sock_.fd(), nullptr, nullptr);
  if (fd < 0) return std::nullopt;
  const int one = 1;
  setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return Socket(fd);
}

void write_frame(Socket& s, std::string_view payload) {
  if (payload.size() > kMaxFrameBytes) throw ProtocolError("frame exceeds 1 MiB");
  const std::uint32_t n = htonl(static_cast<std::uint32_t>(payload.size()));
  std::string buf(reinterpret_cast<const char*>(&n), 4);
  buf.append(payload);
  s.send_all(buf);
}

std::optional<std::string> read_frame(Socket& s) {
  char header[4];
  if (!s.recv_exact(header, 4)) return std::nullopt;
  std::uint32_t n = 0;
  std::memcpy(&n, header, 4);
  n = ntohl(n);
  if (n > kMaxFrameBytes) throw ProtocolError("frame of " + std::to_string(n) + " bytes exceeds 1 MiB");
  std::string payload(n, '\0');
  if (n > 0 && !s.recv_exact(payload.data(), n)) throw Error("recv: connection closed mid-frame");
  return payload;
}

}  // namespace sticky
