#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mgcs {

struct TcpError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thin RAII wrapper over a connected stream socket (loopback use).
class TcpStream {
 public:
  TcpStream() = default;
  explicit TcpStream(int fd);
  TcpStream(TcpStream&& o) noexcept;
  TcpStream& operator=(TcpStream&& o) noexcept;
  ~TcpStream();
  TcpStream(const TcpStream&) = delete;
  TcpStream& operator=(const TcpStream&) = delete;

  static TcpStream connect(const std::string& host, int port,
                           int timeout_ms = 2000);

  bool valid() const { return fd_ >= 0; }
  void close();
  // Writes the full buffer; throws on error.
  void write_all(std::span<const std::uint8_t> data);
  // Reads up to buf.size() bytes; 0 on orderly shutdown, nullopt on timeout.
  std::optional<std::size_t> read_some(std::span<std::uint8_t> buf,
                                       int timeout_ms);

 private:
  int fd_ = -1;
};

class TcpListener {
 public:
  TcpListener() = default;
  explicit TcpListener(int port, const std::string& host = "127.0.0.1");
  TcpListener(TcpListener&& o) noexcept;
  TcpListener& operator=(TcpListener&& o) noexcept;
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  int port() const { return port_; }
  bool valid() const { return fd_ >= 0; }
  // nullopt on timeout or after close() from another thread.
  std::optional<TcpStream> accept(int timeout_ms);
  void close();

 private:
  int fd_ = -1;
  int port_ = 0;
};

}  // namespace mgcs
