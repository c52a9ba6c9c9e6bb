#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "ferkd/wire.hpp"

namespace ferkd {

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;  // 0 picks a free port

  static Endpoint parse(const std::string& text);  // "host:port" or "port"
};

// TCP front end for ServeSession: one thread per connection, each with its
// own cursor; the store is shared read-only.
class BatchServer {
 public:
  BatchServer(LabelStore store, OrderPolicy policy, Endpoint endpoint = {});
  ~BatchServer();
  BatchServer(const BatchServer&) = delete;
  BatchServer& operator=(const BatchServer&) = delete;

  void start();
  void stop();
  std::uint16_t port() const noexcept { return port_; }
  bool running() const noexcept { return running_.load(); }

 private:
  void accept_loop();
  void serve_connection(int fd);

  std::shared_ptr<const ServeIndex> index_;
  Endpoint endpoint_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::thread acceptor_;
  std::mutex mu_;
  std::set<int> open_fds_;
  std::vector<std::thread> workers_;
};

// Blocking client for the batch protocol.
class BatchClient {
 public:
  BatchClient(const std::string& host, std::uint16_t port);
  ~BatchClient();
  BatchClient(const BatchClient&) = delete;
  BatchClient& operator=(const BatchClient&) = delete;

  HelloReply hello();
  // Throws ErrorKind::protocol carrying the server message on an ERR reply.
  BatchReply get_batch(std::uint32_t n, std::uint64_t epoch_seed);
  StatsReply stats();
  void bye();

  void send(const Frame& frame);
  void send_raw(std::span<const std::uint8_t> bytes);
  Frame receive();

 private:
  Frame expect(Opcode op);

  int fd_ = -1;
  FrameDecoder decoder_;
  std::optional<HelloReply> hello_;
};

}  // namespace ferkd
