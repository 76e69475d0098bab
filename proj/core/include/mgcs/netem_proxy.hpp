#pragma once

#include <atomic>
#include <chrono>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "mgcs/netem.hpp"
#include "mgcs/tcp.hpp"

namespace mgcs {

struct ProxyRecord {
  int direction = 0;  // 0 client->server, 1 server->client
  std::size_t msg_index = 0;
  std::size_t bytes = 0;
  std::uint64_t arrival_us = 0;
  std::uint64_t release_us = 0;
  std::uint64_t delay_us = 0;
};

// TCP store-and-forward proxy that delays each application message by a draw
// from the traffic-class model. Messages are delimited by MBAP headers; when
// the byte stream stops looking like Modbus the remainder of the connection
// is forwarded chunk-wise with per-chunk delays instead.
class DelayProxy {
 public:
  struct Options {
    int listen_port = 0;  // 0 picks an ephemeral port
    std::string upstream_host = "127.0.0.1";
    int upstream_port = 1502;
    TrafficClassModel model;
  };

  explicit DelayProxy(Options opt);
  ~DelayProxy();

  int port() const { return listener_.port(); }
  void stop();

  std::vector<ProxyRecord> records() const;
  void write_records_csv(const std::string& path) const;

 private:
  void accept_loop();
  void serve(TcpStream client);
  // One direction of one connection; keeps FIFO order within the direction.
  void pump(TcpStream& from, TcpStream& to, int direction,
            std::atomic<bool>& conn_done);
  double now_ms() const;

  Options opt_;
  TcpListener listener_;
  std::atomic<bool> stop_{false};
  std::thread accept_thread_;
  std::mutex conn_mutex_;
  std::vector<std::thread> conn_threads_;

  std::chrono::steady_clock::time_point epoch_;
  mutable std::mutex sampler_mutex_;
  DelaySampler up_sampler_;    // client -> server
  DelaySampler down_sampler_;  // server -> client
  mutable std::mutex rec_mutex_;
  std::vector<ProxyRecord> records_;
  std::size_t msg_counter_[2] = {0, 0};
};

}  // namespace mgcs
