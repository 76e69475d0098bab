#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "mgcs/plant.hpp"

namespace mgcs {

struct ModbusError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint8_t kFnReadHolding = 0x03;
inline constexpr std::uint8_t kFnWriteMultiple = 0x10;
inline constexpr std::uint8_t kExcIllegalFunction = 0x01;
inline constexpr std::uint8_t kExcIllegalAddress = 0x02;
inline constexpr std::uint8_t kExcIllegalValue = 0x03;

struct ModbusFrame {
  std::uint16_t transaction_id = 0;
  std::uint16_t protocol_id = 0;
  std::uint8_t unit_id = 0;
  std::uint8_t function = 0;
  std::vector<std::uint8_t> payload;

  bool operator==(const ModbusFrame&) const = default;
};

std::vector<std::uint8_t> encode_frame(const ModbusFrame& f);
ModbusFrame decode_frame(std::span<const std::uint8_t> bytes);  // throws

// Incremental MBAP framing over a byte stream.
class FrameReader {
 public:
  void feed(std::span<const std::uint8_t> bytes);
  std::optional<ModbusFrame> next();  // throws ModbusError on bad framing

 private:
  std::vector<std::uint8_t> buf_;
};

// Request/response payload helpers.
std::vector<std::uint8_t> read_holding_payload(std::uint16_t start,
                                               std::uint16_t count);
std::vector<std::uint8_t> write_multiple_payload(
    std::uint16_t start, std::span<const std::uint16_t> values);
ModbusFrame make_exception(const ModbusFrame& req, std::uint8_t code);
bool is_exception(const ModbusFrame& resp);
// Registers from a 0x03 response payload.
std::vector<std::uint16_t> parse_read_response(const ModbusFrame& resp);

// ---------------------------------------------------------------------------
// Register map. Unit ids 2..5 are the prosumer buses, unit 1 the PCC.
//   reg 0 v_bus (0.1 V), 1 p_pv (W), 2 p_load (W), 3 p_bess (signed W),
//   4 soc (0.01 %), 5 e_stored (Wh), 8/9 step counter (diagnostic, duplicated),
//   10 command d (signed), 11 breaker. Writes allowed to 10-11 only.

inline constexpr int kUnitPcc = 1;
inline constexpr int kRegCount = 12;
inline constexpr int kRegCommand = 10;
inline constexpr int kRegBreaker = 11;

enum class RegKind {
  Voltage01,  // unsigned, 0.1 V
  WattsU,     // unsigned watts
  WattsS,     // signed watts, two's complement
  Soc001,     // unsigned, 0.01 % units
  WhU,        // unsigned watt-hours
  Command,    // signed -1/0/+1
  Flag,       // 0/1
  Raw,
};

// Fixed-point encode; out-of-range saturates and sets *saturated.
std::uint16_t reg_encode(double value, RegKind kind, bool* saturated = nullptr);
double reg_decode(std::uint16_t raw, RegKind kind);

// Registers of every unit for one measurement snapshot.
std::map<int, std::array<std::uint16_t, kRegCount>> build_register_image(
    const MeasurementSnapshot& snap, const MicrogridSpec& spec);

// Transport-independent slave: one request ADU in, one response ADU out.
// Every read is answered from a single snapshot (atomic by construction).
class ModbusSlaveModel {
 public:
  using SnapshotFn = std::function<MeasurementSnapshot()>;
  using WriteFn = std::function<void(int unit, int reg, std::uint16_t value)>;

  ModbusSlaveModel(const MicrogridSpec& spec, SnapshotFn snap, WriteFn write)
      : spec_(spec), snap_(std::move(snap)), write_(std::move(write)) {}

  ModbusFrame handle(const ModbusFrame& request);
  std::vector<std::uint8_t> handle_bytes(std::span<const std::uint8_t> adu);

 private:
  MicrogridSpec spec_;
  SnapshotFn snap_;
  WriteFn write_;
};

}  // namespace mgcs
