#include "ferkd/server.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>

#include "ferkd/bytes.hpp"
#include "ferkd/error.hpp"

namespace ferkd {

namespace {

Error sys_error(const std::string& what) { return Error(ErrorKind::io, what + ": " + std::strerror(errno)); }

bool send_all(int fd, std::span<const std::uint8_t> bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t n = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

}  // namespace

Endpoint Endpoint::parse(const std::string& text) {
  Endpoint ep;
  std::string_view port_part = text;
  if (const auto colon = text.rfind(':'); colon != std::string::npos) {
    ep.host = text.substr(0, colon);
    port_part = std::string_view(text).substr(colon + 1);
  }
  unsigned port = 0;
  auto [ptr, ec] = std::from_chars(port_part.data(), port_part.data() + port_part.size(), port);
  if (ec != std::errc() || ptr != port_part.data() + port_part.size() || port > 65535 || ep.host.empty())
    throw Error(ErrorKind::parameter, "bad endpoint '" + text + "', expected host:port");
  ep.port = static_cast<std::uint16_t>(port);
  return ep;
}

BatchServer::BatchServer(LabelStore store, OrderPolicy policy, Endpoint endpoint)
    : index_(std::make_shared<const ServeIndex>(std::move(store), policy)), endpoint_(std::move(endpoint)) {}

BatchServer::~BatchServer() { stop(); }

void BatchServer::start() {
  if (running_) return;
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw sys_error("socket");
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(endpoint_.port);
  if (::inet_pton(AF_INET, endpoint_.host == "localhost" ? "127.0.0.1" : endpoint_.host.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw Error(ErrorKind::parameter, "cannot bind to host '" + endpoint_.host + "'");
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 || ::listen(listen_fd_, 64) < 0) {
    auto err = sys_error("bind/listen on " + endpoint_.host + ":" + std::to_string(endpoint_.port));
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw err;
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void BatchServer::stop() {
  if (!running_.exchange(false)) return;
  if (acceptor_.joinable()) acceptor_.join();
  ::close(listen_fd_);
  listen_fd_ = -1;
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(mu_);
    for (int fd : open_fds_) ::shutdown(fd, SHUT_RDWR);
    workers.swap(workers_);
  }
  for (auto& t : workers) t.join();
}

void BatchServer::accept_loop() {
  while (running_) {
    pollfd pfd{listen_fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, 50);
    if (ready <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    std::lock_guard lock(mu_);
    if (!running_) {
      ::close(fd);
      break;
    }
    open_fds_.insert(fd);
    workers_.emplace_back([this, fd] { serve_connection(fd); });
  }
}

void BatchServer::serve_connection(int fd) {
  ServeSession session(index_);
  FrameDecoder decoder;
  std::vector<std::uint8_t> buf(64 * 1024);
  bool open = true;
  while (open && !session.closed()) {
    const ssize_t n = ::recv(fd, buf.data(), buf.size(), 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    decoder.feed(std::span(buf.data(), static_cast<std::size_t>(n)));
    try {
      while (auto frame = decoder.next()) {
        for (const auto& reply : session.handle(*frame))
          if (!send_all(fd, encode_frame(reply))) open = false;
        if (session.closed() || !open) break;
      }
    } catch (const Error& e) {
      // The stream cannot be resynchronized after a bogus length prefix.
      const auto err = make_frame(Opcode::err, encode_err(ErrReply{static_cast<std::uint16_t>(WireError::oversized), e.what()}));
      send_all(fd, encode_frame(err));
      open = false;
    }
  }
  {
    std::lock_guard lock(mu_);
    open_fds_.erase(fd);
  }
  ::close(fd);
}

BatchClient::BatchClient(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  if (::getaddrinfo(host.c_str(), service.c_str(), &hints, &res) != 0 || res == nullptr)
    throw Error(ErrorKind::io, "cannot resolve '" + host + "'");
  fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  const int rc = fd_ < 0 ? -1 : ::connect(fd_, res->ai_addr, res->ai_addrlen);
  ::freeaddrinfo(res);
  if (rc < 0) {
    auto err = sys_error("connect to " + host + ":" + service);
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
    throw err;
  }
}

BatchClient::~BatchClient() {
  if (fd_ >= 0) ::close(fd_);
}

void BatchClient::send_raw(std::span<const std::uint8_t> bytes) {
  if (!send_all(fd_, bytes)) throw sys_error("send");
}

void BatchClient::send(const Frame& frame) { send_raw(encode_frame(frame)); }

Frame BatchClient::receive() {
  std::vector<std::uint8_t> buf(64 * 1024);
  for (;;) {
    if (auto f = decoder_.next()) return std::move(*f);
    const ssize_t n = ::recv(fd_, buf.data(), buf.size(), 0);
    if (n < 0 && errno == EINTR) continue;
    if (n == 0) throw Error(ErrorKind::io, "connection closed by server");
    if (n < 0) throw sys_error("recv");
    decoder_.feed(std::span(buf.data(), static_cast<std::size_t>(n)));
  }
}

Frame BatchClient::expect(Opcode op) {
  Frame f = receive();
  if (f.opcode == static_cast<std::uint8_t>(Opcode::err)) {
    const auto err = decode_err(f.payload);
    throw Error(ErrorKind::protocol, "server error " + std::to_string(err.code) + ": " + err.message);
  }
  if (f.opcode != static_cast<std::uint8_t>(op))
    throw Error(ErrorKind::protocol, "unexpected opcode " + std::to_string(f.opcode));
  return f;
}

HelloReply BatchClient::hello() {
  ByteWriter out;
  out.u16(protocol_version);
  send(make_frame(Opcode::hello, out.take()));
  hello_ = decode_hello_reply(expect(Opcode::hello).payload);
  return *hello_;
}

BatchReply BatchClient::get_batch(std::uint32_t n, std::uint64_t epoch_seed) {
  if (!hello_) hello();
  send(make_frame(Opcode::get_batch, encode_get_batch({n, epoch_seed})));
  return decode_batch(expect(Opcode::batch).payload, *hello_);
}

StatsReply BatchClient::stats() {
  send(make_frame(Opcode::stats));
  return decode_stats(expect(Opcode::stats).payload);
}

void BatchClient::bye() {
  send(make_frame(Opcode::bye));
  expect(Opcode::bye);
}

}  // namespace ferkd
