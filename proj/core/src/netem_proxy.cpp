#include "mgcs/netem_proxy.hpp"

#include <array>
#include <cstdio>
#include <deque>

namespace mgcs {

namespace {

// Length of the next complete MBAP frame in `buf`, or 0 if more bytes are
// needed, or -1 if the bytes cannot be a Modbus ADU.
long mbap_frame_length(const std::deque<std::uint8_t>& buf) {
  if (buf.size() < 6) return 0;
  const int proto = (buf[2] << 8) | buf[3];
  const int length = (buf[4] << 8) | buf[5];
  if (proto != 0 || length < 2 || length > 254) return -1;
  if (buf.size() < 6u + length) return 0;
  return 6 + length;
}

}  // namespace

DelayProxy::DelayProxy(Options opt)
    : opt_(std::move(opt)),
      listener_(opt_.listen_port),
      epoch_(std::chrono::steady_clock::now()),
      up_sampler_(opt_.model, true),
      down_sampler_([&] {
        TrafficClassModel m = opt_.model;
        m.seed = opt_.model.seed + 0x9e3779b9;  // decorrelate directions
        return m;
      }(), true) {
  accept_thread_ = std::thread([this] { accept_loop(); });
}

DelayProxy::~DelayProxy() { stop(); }

void DelayProxy::stop() {
  if (stop_.exchange(true)) return;
  listener_.close();
  if (accept_thread_.joinable()) accept_thread_.join();
  std::lock_guard lk(conn_mutex_);
  for (auto& t : conn_threads_)
    if (t.joinable()) t.join();
  conn_threads_.clear();
}

double DelayProxy::now_ms() const {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - epoch_)
      .count();
}

void DelayProxy::accept_loop() {
  while (!stop_) {
    auto client = listener_.accept(100);
    if (!client) continue;
    std::lock_guard lk(conn_mutex_);
    conn_threads_.emplace_back(
        [this, c = std::move(*client)]() mutable { serve(std::move(c)); });
  }
}

void DelayProxy::serve(TcpStream client) {
  TcpStream upstream;
  try {
    upstream = TcpStream::connect(opt_.upstream_host, opt_.upstream_port, 2000);
  } catch (const TcpError&) {
    return;
  }
  std::atomic<bool> conn_done{false};
  std::thread down([this, &client, &upstream, &conn_done] {
    pump(upstream, client, 1, conn_done);
  });
  pump(client, upstream, 0, conn_done);
  conn_done = true;
  client.close();
  upstream.close();
  down.join();
}

void DelayProxy::pump(TcpStream& from, TcpStream& to, int direction,
                      std::atomic<bool>& conn_done) {
  std::deque<std::uint8_t> pending;
  std::array<std::uint8_t, 4096> buf;
  bool framing_ok = true;
  DelaySampler& sampler = direction == 0 ? up_sampler_ : down_sampler_;

  auto forward = [&](std::vector<std::uint8_t> msg) {
    const double arrival = now_ms();
    double delay;
    {
      std::lock_guard lk(sampler_mutex_);
      delay = sampler.sample_at(static_cast<int>(msg.size()), arrival);
    }
    const double release = arrival + delay;
    const double wait = release - now_ms();
    if (wait > 0)
      std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(wait));
    try {
      to.write_all(msg);
    } catch (const TcpError&) {
      conn_done = true;
      return;
    }
    ProxyRecord rec;
    rec.direction = direction;
    rec.bytes = msg.size();
    rec.arrival_us = static_cast<std::uint64_t>(arrival * 1000.0);
    rec.release_us = static_cast<std::uint64_t>(release * 1000.0);
    rec.delay_us = static_cast<std::uint64_t>(delay * 1000.0);
    std::lock_guard lk(rec_mutex_);
    rec.msg_index = msg_counter_[direction]++;
    records_.push_back(rec);
  };

  while (!stop_ && !conn_done) {
    std::optional<std::size_t> n;
    try {
      n = from.read_some(buf, 100);
    } catch (const TcpError&) {
      break;
    }
    if (!n) continue;
    if (*n == 0) break;
    pending.insert(pending.end(), buf.begin(), buf.begin() + *n);
    while (!pending.empty()) {
      long take;
      if (framing_ok) {
        take = mbap_frame_length(pending);
        if (take == -1) {
          framing_ok = false;  // degraded mode: per-chunk delays
          continue;
        }
        if (take == 0) break;
      } else {
        take = static_cast<long>(pending.size());
      }
      std::vector<std::uint8_t> msg(pending.begin(), pending.begin() + take);
      pending.erase(pending.begin(), pending.begin() + take);
      forward(std::move(msg));
      if (conn_done) return;
    }
  }
  conn_done = true;
}

std::vector<ProxyRecord> DelayProxy::records() const {
  std::lock_guard lk(rec_mutex_);
  return records_;
}

void DelayProxy::write_records_csv(const std::string& path) const {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw NetemError("cannot open " + path);
  std::fputs("direction,msg_index,bytes,arrival_us,release_us,delay_us\n", f);
  for (const auto& r : records()) {
    std::fprintf(f, "%d,%zu,%zu,%llu,%llu,%llu\n", r.direction, r.msg_index,
                 r.bytes, static_cast<unsigned long long>(r.arrival_us),
                 static_cast<unsigned long long>(r.release_us),
                 static_cast<unsigned long long>(r.delay_us));
  }
  std::fclose(f);
}

}  // namespace mgcs
