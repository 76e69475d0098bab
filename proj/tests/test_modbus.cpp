#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <mutex>
#include <random>
#include <thread>

#include "mgcs/modbus.hpp"
#include "mgcs/modbus_link.hpp"
#include "mgcs/scenario.hpp"
#include "mgcs/tcp.hpp"

using namespace mgcs;

namespace {

ModbusFrame read_request(std::uint16_t txn, std::uint8_t unit,
                         std::uint16_t start, std::uint16_t count) {
  ModbusFrame f;
  f.transaction_id = txn;
  f.unit_id = unit;
  f.function = kFnReadHolding;
  f.payload = read_holding_payload(start, count);
  return f;
}

// One coherent snapshot for the four-bus grid, values chosen to be readable
// in register units.
MeasurementSnapshot sample_snapshot() {
  MeasurementSnapshot snap;
  snap.t_s = 12.0;
  snap.v_dc = 400.0;
  snap.v_bus = {399.5, 398.2, 400.1, 397.0};
  snap.p_load = {150.0, 500.0, 300.0, 800.0};
  snap.p_pv = {1200.0, 250.0};
  snap.p_bess = {400.0, -800.0, 0.0, 400.0};
  snap.soc = {0.5, 0.62, 0.15, 0.95};
  snap.e_wh = {500.0, 1240.0, 150.0, 1900.0};
  snap.p_pcc = -123.0;
  snap.saturated = {false, false, false, false};
  snap.step_count = 70000;  // wraps the 16-bit counter
  return snap;
}

ModbusSlaveModel sample_model(std::vector<std::tuple<int, int, int>>* writes) {
  const auto spec = default_scenario().spec;
  return ModbusSlaveModel(
      spec, [] { return sample_snapshot(); },
      [writes](int unit, int reg, std::uint16_t value) {
        if (writes) writes->emplace_back(unit, reg, value);
      });
}

}  // namespace

TEST_CASE("worked request frame encodes to the documented byte string") {
  const auto bytes = encode_frame(read_request(7, 3, 0, 6));
  const std::vector<std::uint8_t> expect = {0x00, 0x07, 0x00, 0x00, 0x00, 0x06,
                                            0x03, 0x03, 0x00, 0x00, 0x00, 0x06};
  CHECK(bytes == expect);
  CHECK(decode_frame(bytes) == read_request(7, 3, 0, 6));
}

TEST_CASE("random frames survive the encode/decode round trip") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> len(0, 100);
  std::uniform_int_distribution<int> byte(0, 255);
  for (int i = 0; i < 500; ++i) {
    ModbusFrame f;
    f.transaction_id = static_cast<std::uint16_t>(rng());
    f.unit_id = static_cast<std::uint8_t>(byte(rng));
    f.function = static_cast<std::uint8_t>(byte(rng));
    const int n = len(rng);
    for (int j = 0; j < n; ++j)
      f.payload.push_back(static_cast<std::uint8_t>(byte(rng)));
    CHECK(decode_frame(encode_frame(f)) == f);
  }
}

TEST_CASE("decode rejects malformed frames") {
  auto bytes = encode_frame(read_request(1, 2, 0, 6));
  CHECK_THROWS_AS(decode_frame(std::span(bytes.data(), 5)), ModbusError);
  bytes[2] = 0x01;  // protocol id
  CHECK_THROWS_AS(decode_frame(bytes), ModbusError);
  bytes[2] = 0x00;
  bytes[5] = 0x09;  // length disagrees with the buffer
  CHECK_THROWS_AS(decode_frame(bytes), ModbusError);
}

TEST_CASE("frame reader reassembles frames fed one byte at a time") {
  const auto a = encode_frame(read_request(1, 2, 0, 6));
  const auto b = encode_frame(read_request(2, 5, 10, 1));
  std::vector<std::uint8_t> stream = a;
  stream.insert(stream.end(), b.begin(), b.end());

  FrameReader reader;
  std::vector<ModbusFrame> got;
  for (auto byte : stream) {
    reader.feed(std::span(&byte, 1));
    while (auto f = reader.next()) got.push_back(*f);
  }
  REQUIRE(got.size() == 2);
  CHECK(got[0] == read_request(1, 2, 0, 6));
  CHECK(got[1] == read_request(2, 5, 10, 1));

  // garbage protocol id surfaces as an error, not a silent resync
  FrameReader bad;
  std::vector<std::uint8_t> junk = {0, 1, 0xde, 0xad, 0, 6, 1, 3};
  bad.feed(junk);
  CHECK_THROWS_AS(bad.next(), ModbusError);
}

TEST_CASE("register fixed-point codec and saturation") {
  bool sat = false;
  CHECK(reg_encode(400.05, RegKind::Voltage01, &sat) == 4001);
  CHECK(!sat);
  CHECK(reg_decode(4001, RegKind::Voltage01) == doctest::Approx(400.1));
  CHECK(reg_encode(0.5, RegKind::Soc001) == 5000);
  CHECK(reg_decode(5000, RegKind::Soc001) == 0.5);
  CHECK(reg_decode(reg_encode(-800.0, RegKind::WattsS), RegKind::WattsS) ==
        -800.0);
  CHECK(reg_decode(reg_encode(-1.0, RegKind::Command), RegKind::Command) == -1.0);
  reg_encode(-5.0, RegKind::WattsU, &sat);
  CHECK(sat);
  sat = false;
  CHECK(reg_encode(1.5, RegKind::Soc001, &sat) == 10000);
  CHECK(sat);
  sat = false;
  CHECK(reg_encode(70000.0, RegKind::WattsU, &sat) == 65535);
  CHECK(sat);
}

TEST_CASE("slave answers reads from one snapshot") {
  auto model = sample_model(nullptr);
  const auto resp = model.handle(read_request(9, 3, 0, 12));
  CHECK(!is_exception(resp));
  CHECK(resp.transaction_id == 9);
  const auto regs = parse_read_response(resp);
  REQUIRE(regs.size() == 12);
  CHECK(regs[0] == reg_encode(398.2, RegKind::Voltage01));
  CHECK(regs[1] == 0);  // no pv at bus 3
  CHECK(regs[2] == 500);
  CHECK(reg_decode(regs[3], RegKind::WattsS) == -800.0);
  CHECK(regs[4] == 6200);
  CHECK(regs[5] == 1240);
  CHECK(regs[8] == regs[9]);            // atomic counter pair
  CHECK(regs[8] == (70000 & 0xffff));
  CHECK(regs[11] == 1);                 // breaker closed
  // PCC unit exposes bus voltage and exchange power
  const auto pcc = parse_read_response(model.handle(read_request(1, 1, 0, 4)));
  CHECK(pcc[0] == 4000);
  CHECK(reg_decode(pcc[3], RegKind::WattsS) == -123.0);
}

TEST_CASE("slave exception paths") {
  auto model = sample_model(nullptr);
  auto bad_fn = read_request(1, 3, 0, 1);
  bad_fn.function = 0x05;
  CHECK(model.handle(bad_fn).payload == std::vector<std::uint8_t>{kExcIllegalFunction});
  CHECK(model.handle(read_request(1, 9, 0, 1)).payload ==
        std::vector<std::uint8_t>{kExcIllegalAddress});
  CHECK(model.handle(read_request(1, 3, 10, 6)).payload ==
        std::vector<std::uint8_t>{kExcIllegalAddress});
  CHECK(model.handle(read_request(1, 3, 0, 0)).payload ==
        std::vector<std::uint8_t>{kExcIllegalAddress});
  auto short_read = read_request(1, 3, 0, 1);
  short_read.payload.pop_back();
  CHECK(model.handle(short_read).payload ==
        std::vector<std::uint8_t>{kExcIllegalValue});
}

TEST_CASE("writes land only in the command window") {
  std::vector<std::tuple<int, int, int>> writes;
  auto model = sample_model(&writes);
  ModbusFrame req;
  req.transaction_id = 3;
  req.unit_id = 4;
  req.function = kFnWriteMultiple;
  const std::uint16_t vals[2] = {reg_encode(-1.0, RegKind::Command), 1};
  req.payload = write_multiple_payload(10, vals);
  const auto resp = model.handle(req);
  CHECK(!is_exception(resp));
  CHECK(resp.payload == read_holding_payload(10, 2));  // echoed start/count
  REQUIRE(writes.size() == 2);
  CHECK(writes[0] == std::tuple<int, int, int>{4, 10, 0xffff});
  CHECK(writes[1] == std::tuple<int, int, int>{4, 11, 1});

  // measurement registers are read-only
  const std::uint16_t one[1] = {7};
  req.payload = write_multiple_payload(5, one);
  CHECK(model.handle(req).payload == std::vector<std::uint8_t>{kExcIllegalAddress});
  // inconsistent byte count
  req.payload = write_multiple_payload(10, one);
  req.payload[4] = 4;
  CHECK(model.handle(req).payload == std::vector<std::uint8_t>{kExcIllegalValue});
}

TEST_CASE("master and server speak over loopback") {
  auto model = sample_model(nullptr);
  ModbusTcpServer server(std::move(model), 0);
  ModbusTcpMaster master({"127.0.0.1", server.port(), 250, 1});

  for (int i = 0; i < 50; ++i) {
    auto regs = master.read_holding(2 + i % 4, 0, 12);
    REQUIRE(regs.has_value());
    CHECK(regs->size() == 12);
    CHECK((*regs)[8] == (*regs)[9]);
  }
  const std::uint16_t cmd[1] = {1};
  CHECK(master.write_registers(3, kRegCommand, cmd));
  // an exception response is a clean failure, not a hang
  CHECK(!master.write_registers(3, 5, cmd));
  CHECK(master.read_holding(2, 0, 12).has_value());

  // polling sweep delivers one result per unit per cycle
  std::mutex mu;
  std::vector<ModbusTcpMaster::PolledUnit> seen;
  master.start_polling({1, 2, 3, 4, 5}, 20.0, 12, [&](const auto& pu) {
    std::lock_guard lk(mu);
    seen.push_back(pu);
  });
  std::this_thread::sleep_for(std::chrono::milliseconds(120));
  master.stop_polling();
  {
    std::lock_guard lk(mu);
    REQUIRE(seen.size() >= 10);
    for (std::size_t i = 0; i < 10; ++i) {
      CHECK(seen[i].unit == static_cast<int>(1 + i % 5));
      CHECK(!seen[i].stale);
      CHECK(seen[i].t_recv_s >= seen[i].t_send_s);
    }
  }
  server.stop();
}

TEST_CASE("silent peer times out to nullopt") {
  TcpListener mute(0);
  std::thread sink([&] {
    auto s = mute.accept(2000);
    if (s) {
      std::uint8_t buf[256];
      while (s->read_some(buf, 1000).value_or(0) > 0) {
      }
    }
  });
  ModbusTcpMaster master({"127.0.0.1", mute.port(), 100, 1});
  CHECK(!master.read_holding(2, 0, 12).has_value());
  mute.close();
  sink.join();
}
