#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

#include "pchase/fault.hpp"
#include "pchase/isa.hpp"
#include "pchase/memory.hpp"

namespace pchase {

enum class MsgType : std::uint8_t {
  Request = 0,
  Done = 1,
  IterLimit = 2,
  Fault = 3,
  InvalidAddr = 4,
};

std::string_view msg_type_name(MsgType t);

/// Wire format shared by requests and all responses.
///   magic "CHSE" | version u8 | msg_type u8 | flags u16 | request_id u64 | cur_ptr u64
///   | iter_used u16 | code_len u16 | scratch_len u16 | reserved u16 | code | scratch
struct TraversalPacket {
  MsgType msg_type = MsgType::Request;
  std::uint16_t flags = 0;  // FaultKind for Fault responses
  std::uint64_t request_id = 0;
  VirtualAddress cur_ptr = 0;
  std::uint16_t iter_used = 0;
  Bytes code;
  Bytes scratch;

  FaultKind fault() const { return static_cast<FaultKind>(flags); }
  bool operator==(const TraversalPacket&) const = default;
};

inline constexpr std::size_t kPacketHeaderBytes = 32;
inline constexpr std::uint8_t kPacketVersion = 1;
inline constexpr std::uint8_t kPacketMagic[4] = {'C', 'H', 'S', 'E'};

class PacketError : public std::runtime_error {
 public:
  enum class Kind { Truncated, BadMagic, BadVersion, BadType, LengthMismatch, Oversize, Reserved };
  PacketError(Kind k, const std::string& msg) : std::runtime_error(msg), kind_(k) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

Bytes serialize(const TraversalPacket& p);
TraversalPacket deserialize(std::span<const std::uint8_t> bytes);
std::size_t serialized_size(const TraversalPacket& p);

// Request ids: 16-bit CPU node id in the high bits, 48-bit per-CPU counter below.
inline constexpr std::uint64_t kRequestCounterMask = (std::uint64_t{1} << 48) - 1;
inline constexpr std::uint64_t make_request_id(std::uint16_t cpu, std::uint64_t counter) {
  return (static_cast<std::uint64_t>(cpu) << 48) | (counter & kRequestCounterMask);
}
inline constexpr std::uint16_t request_cpu(std::uint64_t id) { return static_cast<std::uint16_t>(id >> 48); }
inline constexpr std::uint64_t request_counter(std::uint64_t id) { return id & kRequestCounterMask; }

}  // namespace pchase
