#include "pchase/isa.hpp"

#include <algorithm>
#include <sstream>

namespace pchase {

std::string_view mnemonic(Opcode op) {
  switch (op) {
    case Opcode::Load: return "LOAD";
    case Opcode::Store: return "STORE";
    case Opcode::Add: return "ADD";
    case Opcode::Sub: return "SUB";
    case Opcode::Mul: return "MUL";
    case Opcode::Div: return "DIV";
    case Opcode::And: return "AND";
    case Opcode::Or: return "OR";
    case Opcode::Not: return "NOT";
    case Opcode::Move: return "MOVE";
    case Opcode::Compare: return "COMPARE";
    case Opcode::JumpEq: return "JUMP_EQ";
    case Opcode::JumpNeq: return "JUMP_NEQ";
    case Opcode::JumpLt: return "JUMP_LT";
    case Opcode::JumpGt: return "JUMP_GT";
    case Opcode::JumpLe: return "JUMP_LE";
    case Opcode::NextIter: return "NEXT_ITER";
    case Opcode::JumpGe: return "JUMP_GE";
    case Opcode::Return: return "RETURN";
  }
  return "?";
}

std::optional<Opcode> opcode_from_byte(std::uint8_t b) {
  if (b >= 0x01 && b <= 0x13) return static_cast<Opcode>(b);
  return std::nullopt;
}

bool is_jump(Opcode op) {
  switch (op) {
    case Opcode::JumpEq:
    case Opcode::JumpNeq:
    case Opcode::JumpLt:
    case Opcode::JumpGt:
    case Opcode::JumpLe:
    case Opcode::JumpGe:
      return true;
    default:
      return false;
  }
}

bool is_terminal(Opcode op) { return op == Opcode::NextIter || op == Opcode::Return; }

bool is_alu(Opcode op) {
  switch (op) {
    case Opcode::Add:
    case Opcode::Sub:
    case Opcode::Mul:
    case Opcode::Div:
    case Opcode::And:
    case Opcode::Or:
      return true;
    default:
      return false;
  }
}

std::size_t access_width(const Instruction& ins) {
  if (ins.op == Opcode::Move || ins.op == Opcode::Store) return ins.width;
  return 8;
}

namespace ins {
Instruction load(std::uint16_t start, std::uint64_t length) {
  return Instruction{Opcode::Load, 8, false, Operand::data(start), Operand::none(), length};
}
Instruction store(Operand dst_data, Operand src, std::uint8_t width) {
  return Instruction{Opcode::Store, width, false, dst_data, src, 0};
}
Instruction alu(Opcode op, Operand dst, Operand src) {
  return Instruction{op, 8, false, dst, src, 0};
}
Instruction op_not(Operand dst) {
  return Instruction{Opcode::Not, 8, false, dst, Operand::none(), 0};
}
Instruction move(Operand dst, Operand src, std::uint8_t width) {
  return Instruction{Opcode::Move, width, false, dst, src, 0};
}
Instruction compare(Operand a, Operand b, bool is_signed) {
  return Instruction{Opcode::Compare, 8, is_signed, a, b, 0};
}
Instruction jump(Opcode cond, std::uint64_t target) {
  return Instruction{cond, 8, false, Operand::none(), Operand::none(), target};
}
Instruction next_iter() { return Instruction{Opcode::NextIter, 8, false, {}, {}, 0}; }
Instruction ret() { return Instruction{Opcode::Return, 8, false, {}, {}, 0}; }
}  // namespace ins

std::string ValidationReport::to_string() const {
  std::ostringstream os;
  for (const auto& v : violations) {
    if (v.index == Violation::kProgramLevel)
      os << "program: " << v.rule << '\n';
    else
      os << "index " << v.index << ": " << v.rule << '\n';
  }
  return os.str();
}

namespace {

bool readable(OperandKind k) {
  return k == OperandKind::CurPtr || k == OperandKind::Sp || k == OperandKind::Data ||
         k == OperandKind::Imm;
}

bool writable(OperandKind k) { return k == OperandKind::CurPtr || k == OperandKind::Sp; }

bool valid_width(std::uint8_t w) { return w == 1 || w == 2 || w == 4 || w == 8; }

class Checker {
 public:
  Checker(const Program& p, const ValidateOptions& o, ValidationReport& r)
      : prog_(p), opts_(o), report_(r) {}

  void fail(std::size_t i, std::string rule) { report_.violations.push_back({i, std::move(rule)}); }

  void operand_bounds(std::size_t i, const Instruction& in, const Operand& o) {
    const std::size_t w = access_width(in);
    if (o.kind == OperandKind::Sp && o.offset + w > opts_.scratch_bytes)
      fail(i, "scratch_pad operand out of bounds");
    if (o.kind == OperandKind::Data && prog_.form() == ProgramForm::Deployable &&
        o.offset + w > kMaxLoadWindow)
      fail(i, "data operand out of bounds");
  }

  void instruction(std::size_t i) {
    const Instruction& in = prog_.code[i];
    const auto& a = in.a;
    const auto& b = in.b;

    if (in.op != Opcode::Move && in.op != Opcode::Store && in.width != 8)
      fail(i, "width flag only allowed on MOVE/STORE");
    if (!valid_width(in.width)) fail(i, "width must be 1, 2, 4 or 8");
    if (in.is_signed && in.op != Opcode::Compare) fail(i, "signed flag only allowed on COMPARE");
    if (a.kind == OperandKind::Imm && b.kind == OperandKind::Imm)
      fail(i, "at most one immediate operand");
    if (!is_jump(in.op) && in.op != Opcode::Load && in.imm != 0)
      fail(i, "unexpected imm field");

    switch (in.op) {
      case Opcode::Load:
        if (i != 0) fail(i, "LOAD only allowed at index 0");
        if (a.kind != OperandKind::Data || b.kind != OperandKind::None)
          fail(i, "LOAD takes a window start and length");
        if (in.imm == 0 || in.imm > kMaxLoadWindow) fail(i, "LOAD window length must be in (0, 256]");
        if (a.offset + in.imm > kMaxLoadWindow) fail(i, "LOAD window exceeds 256 bytes");
        return;
      case Opcode::Store:
        if (a.kind != OperandKind::Data) fail(i, "STORE destination must be data[]");
        if (!readable(b.kind)) fail(i, "STORE source must be readable");
        break;
      case Opcode::Add:
      case Opcode::Sub:
      case Opcode::Mul:
      case Opcode::Div:
      case Opcode::And:
      case Opcode::Or:
      case Opcode::Move:
        if (!writable(a.kind)) fail(i, "destination must be cur_ptr or scratch_pad");
        if (!readable(b.kind)) fail(i, "source must be readable");
        break;
      case Opcode::Not:
        if (!writable(a.kind)) fail(i, "destination must be cur_ptr or scratch_pad");
        if (b.kind != OperandKind::None) fail(i, "NOT takes one operand");
        break;
      case Opcode::Compare:
        if (!readable(a.kind) || !readable(b.kind)) fail(i, "COMPARE operands must be readable");
        break;
      case Opcode::JumpEq:
      case Opcode::JumpNeq:
      case Opcode::JumpLt:
      case Opcode::JumpGt:
      case Opcode::JumpLe:
      case Opcode::JumpGe:
        if (a.kind != OperandKind::None || b.kind != OperandKind::None)
          fail(i, "jump takes only a target");
        if (in.imm <= i) fail(i, "backward jump at index " + std::to_string(i));
        else if (in.imm >= prog_.size()) fail(i, "jump target past end of program");
        return;
      case Opcode::NextIter:
      case Opcode::Return:
        if (a.kind != OperandKind::None || b.kind != OperandKind::None)
          fail(i, "terminal takes no operands");
        return;
    }
    operand_bounds(i, in, a);
    operand_bounds(i, in, b);
  }

  void paths() {
    const std::size_t n = prog_.size();
    const std::size_t entry = prog_.body_entry();
    if (entry >= n) {
      fail(Violation::kProgramLevel, "no terminal instruction");
      return;
    }
    std::vector<bool> reach(n, false);
    reach[entry] = true;
    for (std::size_t i = entry; i < n; ++i) {
      if (!reach[i]) continue;
      const Instruction& in = prog_.code[i];
      if (is_terminal(in.op)) continue;
      if (is_jump(in.op) && in.imm > i && in.imm < n) reach[in.imm] = true;
      if (i + 1 < n)
        reach[i + 1] = true;
      else
        fail(i, "path falls off end of program without NEXT_ITER/RETURN");
    }
  }

 private:
  const Program& prog_;
  const ValidateOptions& opts_;
  ValidationReport& report_;
};

}  // namespace

ValidationReport validate(const Program& program, const ValidateOptions& opts) {
  ValidationReport report;
  Checker c(program, opts, report);
  if (program.empty()) {
    c.fail(Violation::kProgramLevel, "no terminal instruction");
    return report;
  }
  if (program.size() > kMaxProgramLength)
    c.fail(Violation::kProgramLevel, "program longer than 256 instructions");
  for (std::size_t i = 0; i < program.size(); ++i) c.instruction(i);
  c.paths();
  return report;
}

std::size_t longest_path(const Program& program) {
  const std::size_t n = program.size();
  const std::size_t entry = program.body_entry();
  if (entry >= n) return 0;
  // Jumps only go forward, so a reverse sweep is a topological order.
  std::vector<std::size_t> len(n + 1, 0);
  for (std::size_t k = n; k-- > entry;) {
    const Instruction& in = program.code[k];
    if (is_terminal(in.op)) {
      len[k] = 1;
      continue;
    }
    std::size_t best = len[k + 1];
    if (is_jump(in.op) && in.imm > k && in.imm < n) best = std::max(best, len[in.imm]);
    len[k] = best + 1;
  }
  return len[entry];
}

}  // namespace pchase
