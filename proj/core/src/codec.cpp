#include "pchase/codec.hpp"

#include "pchase/detail/endian.hpp"

namespace pchase {
namespace {

std::uint8_t width_code(std::uint8_t w) {
  switch (w) {
    case 1: return 1;
    case 2: return 2;
    case 4: return 3;
    default: return 0;
  }
}

constexpr std::uint8_t kWidthFromCode[4] = {8, 1, 2, 4};
constexpr std::uint8_t kSignedBit = 0x04;

std::uint64_t imm_field(const Instruction& in) {
  if (in.a.kind == OperandKind::Imm) return in.a.value;
  if (in.b.kind == OperandKind::Imm) return in.b.value;
  return in.imm;
}

Operand decode_operand(std::uint8_t kind, std::uint16_t off, std::uint64_t imm, std::size_t at) {
  if (kind > static_cast<std::uint8_t>(OperandKind::Imm))
    throw DecodeError(DecodeError::Kind::BadOperandKind,
                      "operand kind " + std::to_string(kind) + " out of range at instruction " +
                          std::to_string(at));
  const auto k = static_cast<OperandKind>(kind);
  if (k != OperandKind::Sp && k != OperandKind::Data && off != 0)
    throw DecodeError(DecodeError::Kind::NonCanonical,
                      "offset set on operand without offset at instruction " + std::to_string(at));
  switch (k) {
    case OperandKind::Sp: return Operand::sp(off);
    case OperandKind::Data: return Operand::data(off);
    case OperandKind::Imm: return Operand::imm(imm);
    case OperandKind::CurPtr: return Operand::cur_ptr();
    case OperandKind::None: break;
  }
  return Operand::none();
}

}  // namespace

void encode_instruction(const Instruction& in, std::span<std::uint8_t, kInstructionBytes> out) {
  out[0] = static_cast<std::uint8_t>(in.op);
  out[1] = static_cast<std::uint8_t>(width_code(in.width) | (in.is_signed ? kSignedBit : 0));
  out[2] = static_cast<std::uint8_t>(in.a.kind);
  out[3] = static_cast<std::uint8_t>(in.b.kind);
  detail::put_le<std::uint16_t>(out.subspan<4, 2>(), in.a.offset);
  detail::put_le<std::uint16_t>(out.subspan<6, 2>(), in.b.offset);
  detail::put_le<std::uint64_t>(out.subspan<8, 8>(), imm_field(in));
}

Bytes encode(const Program& program) {
  Bytes out(program.size() * kInstructionBytes);
  for (std::size_t i = 0; i < program.size(); ++i)
    encode_instruction(program.code[i],
                       std::span<std::uint8_t, kInstructionBytes>(out.data() + i * kInstructionBytes,
                                                                  kInstructionBytes));
  return out;
}

Program decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % kInstructionBytes != 0)
    throw DecodeError(DecodeError::Kind::Truncated,
                      "code length " + std::to_string(bytes.size()) + " is not a multiple of 16");
  Program p;
  p.code.reserve(bytes.size() / kInstructionBytes);
  for (std::size_t at = 0; at * kInstructionBytes < bytes.size(); ++at) {
    auto rec = bytes.subspan(at * kInstructionBytes, kInstructionBytes);
    auto op = opcode_from_byte(rec[0]);
    if (!op)
      throw DecodeError(DecodeError::Kind::UnknownOpcode,
                        "unknown opcode byte " + std::to_string(rec[0]) + " at instruction " +
                            std::to_string(at));
    const std::uint8_t flags = rec[1];
    if (flags & ~std::uint8_t{0x07})
      throw DecodeError(DecodeError::Kind::BadFlags, "reserved flag bits set at instruction " +
                                                         std::to_string(at));
    const auto a_off = detail::get_le<std::uint16_t>(rec.subspan(4, 2));
    const auto b_off = detail::get_le<std::uint16_t>(rec.subspan(6, 2));
    const auto imm = detail::get_le<std::uint64_t>(rec.subspan(8, 8));

    Instruction in;
    in.op = *op;
    in.width = kWidthFromCode[flags & 0x03];
    in.is_signed = (flags & kSignedBit) != 0;
    in.a = decode_operand(rec[2], a_off, imm, at);
    in.b = decode_operand(rec[3], b_off, imm, at);
    const bool has_imm_operand = in.a.kind == OperandKind::Imm || in.b.kind == OperandKind::Imm;
    in.imm = has_imm_operand ? 0 : imm;
    p.code.push_back(in);
  }
  return p;
}

}  // namespace pchase
