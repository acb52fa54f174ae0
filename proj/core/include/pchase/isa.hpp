#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pchase {

using Bytes = std::vector<std::uint8_t>;

/// Traversal instruction set. Numbering is part of the binary format.
enum class Opcode : std::uint8_t {
  Load = 0x01,
  Store = 0x02,
  Add = 0x03,
  Sub = 0x04,
  Mul = 0x05,
  Div = 0x06,
  And = 0x07,
  Or = 0x08,
  Not = 0x09,
  Move = 0x0A,
  Compare = 0x0B,
  JumpEq = 0x0C,
  JumpNeq = 0x0D,
  JumpLt = 0x0E,
  JumpGt = 0x0F,
  JumpLe = 0x10,
  NextIter = 0x11,
  JumpGe = 0x12,
  Return = 0x13,
};

enum class OperandKind : std::uint8_t { None = 0, CurPtr = 1, Sp = 2, Data = 3, Imm = 4 };

inline constexpr std::size_t kMaxProgramLength = 256;
inline constexpr std::size_t kMaxLoadWindow = 256;
inline constexpr std::size_t kDefaultScratchBytes = 4096;
inline constexpr std::uint64_t kKeyNotFound = 0xFFFFFFFFFFFFFFFFULL;

struct Operand {
  OperandKind kind = OperandKind::None;
  std::uint16_t offset = 0;  // Sp / Data
  std::uint64_t value = 0;   // Imm

  static constexpr Operand none() { return {}; }
  static constexpr Operand cur_ptr() { return {OperandKind::CurPtr, 0, 0}; }
  static constexpr Operand sp(std::uint16_t off) { return {OperandKind::Sp, off, 0}; }
  static constexpr Operand data(std::uint16_t off) { return {OperandKind::Data, off, 0}; }
  static constexpr Operand imm(std::uint64_t v) { return {OperandKind::Imm, 0, v}; }

  bool operator==(const Operand&) const = default;
};

struct Instruction {
  Opcode op = Opcode::Return;
  std::uint8_t width = 8;  // MOVE / STORE access width in bytes
  bool is_signed = false;  // COMPARE only
  Operand a;
  Operand b;
  std::uint64_t imm = 0;  // jump target index, or LOAD window length

  bool operator==(const Instruction&) const = default;
};

enum class ProgramForm { Source, Deployable };

struct Program {
  std::vector<Instruction> code;

  ProgramForm form() const {
    return (!code.empty() && code.front().op == Opcode::Load) ? ProgramForm::Deployable
                                                              : ProgramForm::Source;
  }
  std::size_t size() const { return code.size(); }
  bool empty() const { return code.empty(); }
  /// First instruction of the per-iteration body (after the LOAD, if any).
  std::size_t body_entry() const { return form() == ProgramForm::Deployable ? 1 : 0; }

  bool operator==(const Program&) const = default;
};

std::string_view mnemonic(Opcode op);
std::optional<Opcode> opcode_from_byte(std::uint8_t b);

bool is_jump(Opcode op);
bool is_terminal(Opcode op);
bool is_alu(Opcode op);

/// Byte width an operand is accessed with by this instruction.
std::size_t access_width(const Instruction& ins);

// Instruction builders used by generators and tests.
namespace ins {
Instruction load(std::uint16_t start, std::uint64_t length);
Instruction store(Operand dst_data, Operand src, std::uint8_t width = 8);
Instruction alu(Opcode op, Operand dst, Operand src);
Instruction op_not(Operand dst);
Instruction move(Operand dst, Operand src, std::uint8_t width = 8);
Instruction compare(Operand a, Operand b, bool is_signed = false);
Instruction jump(Opcode cond, std::uint64_t target);
Instruction next_iter();
Instruction ret();
}  // namespace ins

// ---------------------------------------------------------------------------
// Validation

struct Violation {
  static constexpr std::size_t kProgramLevel = static_cast<std::size_t>(-1);
  std::size_t index = kProgramLevel;
  std::string rule;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  std::string to_string() const;
};

struct ValidateOptions {
  std::size_t scratch_bytes = kDefaultScratchBytes;
};

ValidationReport validate(const Program& program, const ValidateOptions& opts = {});

/// Longest acyclic path (instruction count, terminal included) from the body
/// entry to any NEXT_ITER/RETURN. Only meaningful for programs that validate.
std::size_t longest_path(const Program& program);

}  // namespace pchase
