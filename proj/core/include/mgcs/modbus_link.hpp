#pragma once

#include <atomic>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "mgcs/modbus.hpp"
#include "mgcs/tcp.hpp"

namespace mgcs {

// Modbus-TCP slave endpoint. Each connection is served on its own thread;
// every request is answered from one coherent snapshot via the slave model.
class ModbusTcpServer {
 public:
  // port 0 picks an ephemeral port (see port()).
  ModbusTcpServer(ModbusSlaveModel model, int port,
                  const std::string& host = "127.0.0.1");
  ~ModbusTcpServer();

  int port() const { return listener_.port(); }
  void stop();

 private:
  void accept_loop();
  void serve_connection(TcpStream stream);

  ModbusSlaveModel model_;
  TcpListener listener_;
  std::atomic<bool> stop_{false};
  std::thread accept_thread_;
  std::mutex conn_mutex_;
  std::vector<std::thread> conn_threads_;
};

// Polling master: one persistent connection, strict request-response.
class ModbusTcpMaster {
 public:
  struct Options {
    std::string host = "127.0.0.1";
    int port = 1502;
    int timeout_ms = 250;
    int retries = 1;
  };

  explicit ModbusTcpMaster(Options opt) : opt_(std::move(opt)) {}
  ~ModbusTcpMaster();

  // Reconnects on demand; throws TcpError when the endpoint is unreachable.
  void ensure_connected();
  bool connected() const { return stream_.valid(); }
  void disconnect();

  // nullopt on timeout (after retries). A response bearing a stale
  // transaction id is discarded, never surfaced.
  std::optional<std::vector<std::uint16_t>> read_holding(int unit, int start,
                                                         int count);
  bool write_registers(int unit, int start,
                       std::span<const std::uint16_t> values);

  struct PolledUnit {
    int unit = 0;
    std::vector<std::uint16_t> regs;
    double t_send_s = 0.0;
    double t_recv_s = 0.0;
    bool stale = false;
  };
  using PollCallback = std::function<void(const PolledUnit&)>;

  // Periodic 0x03 sweep over `units`; results (or stale markers) delivered
  // through the callback on the polling thread.
  void start_polling(std::vector<int> units, double period_ms, int reg_count,
                     PollCallback cb);
  void stop_polling();

  int reconnect_events() const { return reconnect_events_; }

 private:
  std::optional<ModbusFrame> transact(const ModbusFrame& request);

  Options opt_;
  TcpStream stream_;
  FrameReader reader_;
  std::uint16_t next_txn_ = 1;
  std::atomic<bool> poll_stop_{false};
  std::thread poll_thread_;
  std::atomic<int> reconnect_events_{0};
};

}  // namespace mgcs
