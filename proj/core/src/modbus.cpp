#include "mgcs/modbus.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace mgcs {

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
}

std::uint16_t get_u16(std::span<const std::uint8_t> b, std::size_t off) {
  return static_cast<std::uint16_t>((b[off] << 8) | b[off + 1]);
}

}  // namespace

std::vector<std::uint8_t> encode_frame(const ModbusFrame& f) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + f.payload.size());
  put_u16(out, f.transaction_id);
  put_u16(out, f.protocol_id);
  put_u16(out, static_cast<std::uint16_t>(2 + f.payload.size()));
  out.push_back(f.unit_id);
  out.push_back(f.function);
  out.insert(out.end(), f.payload.begin(), f.payload.end());
  return out;
}

ModbusFrame decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw ModbusError("short frame");
  ModbusFrame f;
  f.transaction_id = get_u16(bytes, 0);
  f.protocol_id = get_u16(bytes, 2);
  if (f.protocol_id != 0) throw ModbusError("protocol id must be 0");
  const std::uint16_t length = get_u16(bytes, 4);
  if (length < 2 || bytes.size() != 6u + length)
    throw ModbusError("frame length mismatch");
  f.unit_id = bytes[6];
  f.function = bytes[7];
  f.payload.assign(bytes.begin() + 8, bytes.end());
  return f;
}

void FrameReader::feed(std::span<const std::uint8_t> bytes) {
  buf_.insert(buf_.end(), bytes.begin(), bytes.end());
}

std::optional<ModbusFrame> FrameReader::next() {
  if (buf_.size() < 6) return std::nullopt;
  const std::uint16_t proto = get_u16(buf_, 2);
  if (proto != 0) throw ModbusError("protocol id must be 0");
  const std::uint16_t length = get_u16(buf_, 4);
  if (length < 2 || length > 254) throw ModbusError("bad MBAP length");
  if (buf_.size() < 6u + length) return std::nullopt;
  auto frame = decode_frame(std::span(buf_.data(), 6u + length));
  buf_.erase(buf_.begin(), buf_.begin() + 6 + length);
  return frame;
}

std::vector<std::uint8_t> read_holding_payload(std::uint16_t start,
                                               std::uint16_t count) {
  std::vector<std::uint8_t> p;
  put_u16(p, start);
  put_u16(p, count);
  return p;
}

std::vector<std::uint8_t> write_multiple_payload(
    std::uint16_t start, std::span<const std::uint16_t> values) {
  std::vector<std::uint8_t> p;
  put_u16(p, start);
  put_u16(p, static_cast<std::uint16_t>(values.size()));
  p.push_back(static_cast<std::uint8_t>(2 * values.size()));
  for (auto v : values) put_u16(p, v);
  return p;
}

ModbusFrame make_exception(const ModbusFrame& req, std::uint8_t code) {
  ModbusFrame resp;
  resp.transaction_id = req.transaction_id;
  resp.unit_id = req.unit_id;
  resp.function = req.function | 0x80;
  resp.payload = {code};
  return resp;
}

bool is_exception(const ModbusFrame& resp) { return resp.function & 0x80; }

std::vector<std::uint16_t> parse_read_response(const ModbusFrame& resp) {
  if (is_exception(resp)) throw ModbusError("exception response");
  if (resp.payload.empty() || resp.payload.size() != 1u + resp.payload[0] ||
      resp.payload[0] % 2 != 0)
    throw ModbusError("bad read response payload");
  std::vector<std::uint16_t> regs;
  for (std::size_t i = 1; i + 1 < resp.payload.size(); i += 2)
    regs.push_back(get_u16(resp.payload, i));
  return regs;
}

std::uint16_t reg_encode(double value, RegKind kind, bool* saturated) {
  auto clamp_report = [&](double v, double lo, double hi) {
    if (v < lo || v > hi) {
      if (saturated) *saturated = true;
      return std::clamp(v, lo, hi);
    }
    return v;
  };
  switch (kind) {
    case RegKind::Voltage01:
      return static_cast<std::uint16_t>(
          std::lround(clamp_report(value * 10.0, 0, 65535)));
    case RegKind::WattsU:
    case RegKind::WhU:
      return static_cast<std::uint16_t>(
          std::lround(clamp_report(value, 0, 65535)));
    case RegKind::WattsS:
    case RegKind::Command: {
      const double c = clamp_report(value, -32768, 32767);
      return static_cast<std::uint16_t>(
          static_cast<std::int16_t>(std::lround(c)));
    }
    case RegKind::Soc001:
      return static_cast<std::uint16_t>(
          std::lround(clamp_report(value * 10000.0, 0, 10000)));
    case RegKind::Flag:
      return value != 0 ? 1 : 0;
    case RegKind::Raw:
      return static_cast<std::uint16_t>(
          std::lround(clamp_report(value, 0, 65535)));
  }
  return 0;
}

double reg_decode(std::uint16_t raw, RegKind kind) {
  switch (kind) {
    case RegKind::Voltage01: return raw / 10.0;
    case RegKind::WattsU:
    case RegKind::WhU:
    case RegKind::Raw: return raw;
    case RegKind::WattsS:
    case RegKind::Command: return static_cast<std::int16_t>(raw);
    case RegKind::Soc001: return raw / 10000.0;
    case RegKind::Flag: return raw ? 1.0 : 0.0;
  }
  return 0.0;
}

std::map<int, std::array<std::uint16_t, kRegCount>> build_register_image(
    const MeasurementSnapshot& snap, const MicrogridSpec& spec) {
  std::map<int, std::array<std::uint16_t, kRegCount>> image;
  const std::uint16_t counter =
      static_cast<std::uint16_t>(snap.step_count & 0xffff);

  auto& pcc = image[kUnitPcc];
  pcc.fill(0);
  pcc[0] = reg_encode(snap.v_dc, RegKind::Voltage01);
  pcc[3] = reg_encode(snap.p_pcc, RegKind::WattsS);
  pcc[8] = pcc[9] = counter;

  std::size_t pv_idx = 0, bess_idx = 0;
  for (std::size_t i = 0; i < spec.buses.size(); ++i) {
    const auto& bus = spec.buses[i];
    auto& regs = image[bus.bus_id];
    regs.fill(0);
    regs[0] = reg_encode(snap.v_bus.at(i), RegKind::Voltage01);
    regs[2] = reg_encode(snap.p_load.at(i), RegKind::WattsU);
    if (bus.pv_rating_w > 0)
      regs[1] = reg_encode(snap.p_pv.at(pv_idx++), RegKind::WattsU);
    if (bus.bess) {
      regs[3] = reg_encode(snap.p_bess.at(bess_idx), RegKind::WattsS);
      regs[4] = reg_encode(snap.soc.at(bess_idx), RegKind::Soc001);
      regs[5] = reg_encode(snap.e_wh.at(bess_idx), RegKind::WhU);
      ++bess_idx;
    }
    regs[8] = regs[9] = counter;
    regs[11] = 1;
  }
  return image;
}

ModbusFrame ModbusSlaveModel::handle(const ModbusFrame& request) {
  if (request.function != kFnReadHolding &&
      request.function != kFnWriteMultiple)
    return make_exception(request, kExcIllegalFunction);

  const auto snap = snap_();
  auto image = build_register_image(snap, spec_);
  auto unit_it = image.find(request.unit_id);
  if (unit_it == image.end())
    return make_exception(request, kExcIllegalAddress);

  if (request.function == kFnReadHolding) {
    if (request.payload.size() != 4)
      return make_exception(request, kExcIllegalValue);
    const std::uint16_t start = get_u16(request.payload, 0);
    const std::uint16_t count = get_u16(request.payload, 2);
    if (count == 0 || count > 125 || start + count > kRegCount)
      return make_exception(request, kExcIllegalAddress);
    ModbusFrame resp;
    resp.transaction_id = request.transaction_id;
    resp.unit_id = request.unit_id;
    resp.function = kFnReadHolding;
    resp.payload.push_back(static_cast<std::uint8_t>(2 * count));
    for (int r = start; r < start + count; ++r)
      put_u16(resp.payload, unit_it->second[r]);
    return resp;
  }

  // write multiple
  if (request.payload.size() < 5)
    return make_exception(request, kExcIllegalValue);
  const std::uint16_t start = get_u16(request.payload, 0);
  const std::uint16_t count = get_u16(request.payload, 2);
  const std::uint8_t byte_count = request.payload[4];
  if (byte_count != 2 * count || request.payload.size() != 5u + byte_count)
    return make_exception(request, kExcIllegalValue);
  if (count == 0 || start < kRegCommand || start + count > kRegCount)
    return make_exception(request, kExcIllegalAddress);
  for (int i = 0; i < count; ++i) {
    const std::uint16_t value = get_u16(request.payload, 5 + 2 * i);
    write_(request.unit_id, start + i, value);
  }
  ModbusFrame resp;
  resp.transaction_id = request.transaction_id;
  resp.unit_id = request.unit_id;
  resp.function = kFnWriteMultiple;
  resp.payload = read_holding_payload(start, count);  // echo start/count
  return resp;
}

std::vector<std::uint8_t> ModbusSlaveModel::handle_bytes(
    std::span<const std::uint8_t> adu) {
  return encode_frame(handle(decode_frame(adu)));
}

}  // namespace mgcs
