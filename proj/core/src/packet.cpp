#include "pchase/packet.hpp"

#include <algorithm>

#include "pchase/detail/endian.hpp"

namespace pchase {

std::string_view msg_type_name(MsgType t) {
  switch (t) {
    case MsgType::Request: return "REQUEST";
    case MsgType::Done: return "RESPONSE_DONE";
    case MsgType::IterLimit: return "RESPONSE_ITER_LIMIT";
    case MsgType::Fault: return "RESPONSE_FAULT";
    case MsgType::InvalidAddr: return "RESPONSE_INVALID_ADDR";
  }
  return "?";
}

std::size_t serialized_size(const TraversalPacket& p) {
  return kPacketHeaderBytes + p.code.size() + p.scratch.size();
}

Bytes serialize(const TraversalPacket& p) {
  if (p.code.size() > 0xFFFF || p.scratch.size() > 0xFFFF)
    throw PacketError(PacketError::Kind::Oversize, "code or scratch_pad exceeds 65535 bytes");
  Bytes out(serialized_size(p));
  std::span<std::uint8_t> s(out);
  std::copy(std::begin(kPacketMagic), std::end(kPacketMagic), out.begin());
  out[4] = kPacketVersion;
  out[5] = static_cast<std::uint8_t>(p.msg_type);
  detail::put_le<std::uint16_t>(s.subspan(6, 2), p.flags);
  detail::put_le<std::uint64_t>(s.subspan(8, 8), p.request_id);
  detail::put_le<std::uint64_t>(s.subspan(16, 8), p.cur_ptr);
  detail::put_le<std::uint16_t>(s.subspan(24, 2), p.iter_used);
  detail::put_le<std::uint16_t>(s.subspan(26, 2), static_cast<std::uint16_t>(p.code.size()));
  detail::put_le<std::uint16_t>(s.subspan(28, 2), static_cast<std::uint16_t>(p.scratch.size()));
  // bytes 30..31 reserved, zero
  std::copy(p.code.begin(), p.code.end(), out.begin() + kPacketHeaderBytes);
  std::copy(p.scratch.begin(), p.scratch.end(),
            out.begin() + static_cast<std::ptrdiff_t>(kPacketHeaderBytes + p.code.size()));
  return out;
}

TraversalPacket deserialize(std::span<const std::uint8_t> b) {
  if (b.size() < kPacketHeaderBytes)
    throw PacketError(PacketError::Kind::Truncated,
                      "packet of " + std::to_string(b.size()) + " bytes is shorter than the header");
  if (!std::equal(std::begin(kPacketMagic), std::end(kPacketMagic), b.begin()))
    throw PacketError(PacketError::Kind::BadMagic, "bad packet magic");
  if (b[4] != kPacketVersion)
    throw PacketError(PacketError::Kind::BadVersion, "unsupported packet version " + std::to_string(b[4]));
  if (b[5] > static_cast<std::uint8_t>(MsgType::InvalidAddr))
    throw PacketError(PacketError::Kind::BadType, "unknown msg_type " + std::to_string(b[5]));
  if (detail::get_le<std::uint16_t>(b.subspan(30, 2)) != 0)
    throw PacketError(PacketError::Kind::Reserved, "reserved header bytes are not zero");

  const std::size_t code_len = detail::get_le<std::uint16_t>(b.subspan(26, 2));
  const std::size_t scratch_len = detail::get_le<std::uint16_t>(b.subspan(28, 2));
  if (kPacketHeaderBytes + code_len + scratch_len != b.size())
    throw PacketError(PacketError::Kind::LengthMismatch,
                      "header lengths (code " + std::to_string(code_len) + ", scratch " +
                          std::to_string(scratch_len) + ") do not match packet size " +
                          std::to_string(b.size()));

  TraversalPacket p;
  p.msg_type = static_cast<MsgType>(b[5]);
  p.flags = detail::get_le<std::uint16_t>(b.subspan(6, 2));
  p.request_id = detail::get_le<std::uint64_t>(b.subspan(8, 8));
  p.cur_ptr = detail::get_le<std::uint64_t>(b.subspan(16, 8));
  p.iter_used = detail::get_le<std::uint16_t>(b.subspan(24, 2));
  auto code = b.subspan(kPacketHeaderBytes, code_len);
  auto scratch = b.subspan(kPacketHeaderBytes + code_len, scratch_len);
  p.code.assign(code.begin(), code.end());
  p.scratch.assign(scratch.begin(), scratch.end());
  return p;
}

}  // namespace pchase
