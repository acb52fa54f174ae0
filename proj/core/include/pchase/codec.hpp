#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

#include "pchase/isa.hpp"

namespace pchase {

/// Fixed 16-byte little-endian instruction encoding:
///   opcode u8 | flags u8 | a_kind u8 | b_kind u8 | a_off u16 | b_off u16 | imm u64
/// flags: bits 0-1 width code (0 -> 8, 1 -> 1, 2 -> 2, 3 -> 4), bit 2 signed.
inline constexpr std::size_t kInstructionBytes = 16;

class DecodeError : public std::runtime_error {
 public:
  enum class Kind { Truncated, UnknownOpcode, BadOperandKind, BadFlags, NonCanonical };
  DecodeError(Kind k, const std::string& msg) : std::runtime_error(msg), kind_(k) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

Bytes encode(const Program& program);
void encode_instruction(const Instruction& in, std::span<std::uint8_t, kInstructionBytes> out);

Program decode(std::span<const std::uint8_t> bytes);

}  // namespace pchase
