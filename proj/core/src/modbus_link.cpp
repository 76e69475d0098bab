#include "mgcs/modbus_link.hpp"

#include <chrono>

namespace mgcs {

namespace {

double steady_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

ModbusTcpServer::ModbusTcpServer(ModbusSlaveModel model, int port,
                                 const std::string& host)
    : model_(std::move(model)), listener_(port, host) {
  accept_thread_ = std::thread([this] { accept_loop(); });
}

ModbusTcpServer::~ModbusTcpServer() { stop(); }

void ModbusTcpServer::stop() {
  if (stop_.exchange(true)) return;
  listener_.close();
  if (accept_thread_.joinable()) accept_thread_.join();
  std::lock_guard lk(conn_mutex_);
  for (auto& t : conn_threads_)
    if (t.joinable()) t.join();
  conn_threads_.clear();
}

void ModbusTcpServer::accept_loop() {
  while (!stop_) {
    auto stream = listener_.accept(100);
    if (!stream) continue;
    std::lock_guard lk(conn_mutex_);
    conn_threads_.emplace_back(
        [this, s = std::move(*stream)]() mutable { serve_connection(std::move(s)); });
  }
}

void ModbusTcpServer::serve_connection(TcpStream stream) {
  FrameReader reader;
  std::array<std::uint8_t, 4096> buf;
  while (!stop_) {
    std::optional<std::size_t> n;
    try {
      n = stream.read_some(buf, 100);
    } catch (const TcpError&) {
      return;
    }
    if (!n) continue;      // timeout, poll stop flag
    if (*n == 0) return;   // peer closed
    reader.feed(std::span(buf.data(), *n));
    try {
      while (auto frame = reader.next()) {
        auto resp = model_.handle(*frame);
        stream.write_all(encode_frame(resp));
      }
    } catch (const ModbusError&) {
      // framing is broken; drop the connection
      return;
    } catch (const TcpError&) {
      return;
    }
  }
}

// ---------------------------------------------------------------------------

ModbusTcpMaster::~ModbusTcpMaster() { stop_polling(); }

void ModbusTcpMaster::ensure_connected() {
  if (stream_.valid()) return;
  stream_ = TcpStream::connect(opt_.host, opt_.port, opt_.timeout_ms);
  reader_ = FrameReader{};
}

void ModbusTcpMaster::disconnect() { stream_.close(); }

std::optional<ModbusFrame> ModbusTcpMaster::transact(const ModbusFrame& request) {
  for (int attempt = 0; attempt <= opt_.retries; ++attempt) {
    ModbusFrame req = request;
    req.transaction_id = next_txn_++;
    try {
      ensure_connected();
      stream_.write_all(encode_frame(req));
      const auto deadline =
          std::chrono::steady_clock::now() + std::chrono::milliseconds(opt_.timeout_ms);
      std::array<std::uint8_t, 4096> buf;
      while (std::chrono::steady_clock::now() < deadline) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
                              deadline - std::chrono::steady_clock::now())
                              .count();
        auto n = stream_.read_some(buf, static_cast<int>(std::max<long>(1, left)));
        if (!n) break;  // timeout
        if (*n == 0) {  // server closed
          disconnect();
          break;
        }
        reader_.feed(std::span(buf.data(), *n));
        while (auto frame = reader_.next()) {
          if (frame->transaction_id == req.transaction_id) return frame;
          // stale response to an earlier transaction: discard
        }
      }
    } catch (const TcpError&) {
      disconnect();
      reconnect_events_++;
    } catch (const ModbusError&) {
      disconnect();
      reconnect_events_++;
    }
  }
  return std::nullopt;
}

std::optional<std::vector<std::uint16_t>> ModbusTcpMaster::read_holding(
    int unit, int start, int count) {
  ModbusFrame req;
  req.unit_id = static_cast<std::uint8_t>(unit);
  req.function = kFnReadHolding;
  req.payload = read_holding_payload(static_cast<std::uint16_t>(start),
                                     static_cast<std::uint16_t>(count));
  auto resp = transact(req);
  if (!resp || is_exception(*resp)) return std::nullopt;
  try {
    return parse_read_response(*resp);
  } catch (const ModbusError&) {
    return std::nullopt;
  }
}

bool ModbusTcpMaster::write_registers(int unit, int start,
                                      std::span<const std::uint16_t> values) {
  ModbusFrame req;
  req.unit_id = static_cast<std::uint8_t>(unit);
  req.function = kFnWriteMultiple;
  req.payload = write_multiple_payload(static_cast<std::uint16_t>(start), values);
  auto resp = transact(req);
  return resp && !is_exception(*resp);
}

void ModbusTcpMaster::start_polling(std::vector<int> units, double period_ms,
                                    int reg_count, PollCallback cb) {
  poll_stop_ = false;
  poll_thread_ = std::thread([this, units = std::move(units), period_ms,
                              reg_count, cb = std::move(cb)] {
    auto next_cycle = std::chrono::steady_clock::now();
    while (!poll_stop_) {
      for (int unit : units) {
        if (poll_stop_) return;
        PolledUnit pu;
        pu.unit = unit;
        pu.t_send_s = steady_seconds();
        auto regs = read_holding(unit, 0, reg_count);
        pu.t_recv_s = steady_seconds();
        if (regs) {
          pu.regs = std::move(*regs);
        } else {
          pu.stale = true;
        }
        cb(pu);
      }
      next_cycle += std::chrono::milliseconds(static_cast<int>(period_ms));
      const auto now = std::chrono::steady_clock::now();
      if (next_cycle > now) {
        std::this_thread::sleep_until(next_cycle);
      } else {
        next_cycle = now;  // overrun; start the next sweep immediately
      }
    }
  });
}

void ModbusTcpMaster::stop_polling() {
  poll_stop_ = true;
  if (poll_thread_.joinable()) poll_thread_.join();
}

}  // namespace mgcs
