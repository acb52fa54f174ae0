#include "pchase/logic.hpp"

#include <algorithm>

#include "pchase/detail/endian.hpp"

namespace pchase {

void Workspace::reset(VirtualAddress ptr, std::span<const std::uint8_t> init, std::size_t scratch_bytes) {
  cur_ptr = ptr;
  scratch.assign(std::max(scratch_bytes, init.size()), 0);
  std::copy(init.begin(), init.end(), scratch.begin());
  data.fill(0);
  data_base = 0;
  window_start = 0;
  window_len = 0;
  cond = Cond::Eq;
  store_buffer.clear();
}

void fill_window(Workspace& ws, VirtualAddress base, std::uint16_t start,
                 std::span<const std::uint8_t> window) {
  ws.data.fill(0);
  std::copy(window.begin(), window.end(), ws.data.begin() + start);
  ws.data_base = base;
  ws.window_start = start;
  ws.window_len = static_cast<std::uint16_t>(window.size());
}

namespace {

struct Trap {
  FaultKind kind;
};

std::uint64_t low_mask(std::size_t w) { return w >= 8 ? ~std::uint64_t{0} : (std::uint64_t{1} << (8 * w)) - 1; }

// Executes one iteration body. The port supplies DATA reads; everything else
// is register state in the workspace.
template <class Port>
LogicOutcome execute_body(Workspace& ws, const Program& p, Port& port) {
  LogicOutcome out;

  auto read = [&](const Operand& o, std::size_t w) -> std::uint64_t {
    switch (o.kind) {
      case OperandKind::CurPtr: return ws.cur_ptr & low_mask(w);
      case OperandKind::Sp:
        if (o.offset + w > ws.scratch.size()) throw Trap{FaultKind::OperandBounds};
        return detail::load_word(ws.scratch.data() + o.offset, w);
      case OperandKind::Data: return port.read(o.offset, w);
      case OperandKind::Imm: return o.value & low_mask(w);
      case OperandKind::None: break;
    }
    throw Trap{FaultKind::InvalidProgram};
  };

  auto write = [&](const Operand& o, std::uint64_t v, std::size_t w) {
    switch (o.kind) {
      case OperandKind::CurPtr:
        ws.cur_ptr = (ws.cur_ptr & ~low_mask(w)) | (v & low_mask(w));
        return;
      case OperandKind::Sp:
        if (o.offset + w > ws.scratch.size()) throw Trap{FaultKind::OperandBounds};
        detail::store_word(ws.scratch.data() + o.offset, v, w);
        return;
      default: break;
    }
    throw Trap{FaultKind::InvalidProgram};
  };

  try {
    std::size_t pc = p.body_entry();
    const std::size_t n = p.size();
    for (;;) {
      if (pc >= n) throw Trap{FaultKind::InvalidProgram};
      const Instruction& in = p.code[pc];
      ++out.executed;
      switch (in.op) {
        case Opcode::Add:
        case Opcode::Sub:
        case Opcode::Mul:
        case Opcode::Div:
        case Opcode::And:
        case Opcode::Or: {
          const std::uint64_t x = read(in.a, 8);
          const std::uint64_t y = read(in.b, 8);
          std::uint64_t r = 0;
          switch (in.op) {
            case Opcode::Add: r = x + y; break;
            case Opcode::Sub: r = x - y; break;
            case Opcode::Mul: r = x * y; break;
            case Opcode::Div:
              if (y == 0) throw Trap{FaultKind::DivByZero};
              r = x / y;
              break;
            case Opcode::And: r = x & y; break;
            default: r = x | y; break;
          }
          write(in.a, r, 8);
          ++pc;
          break;
        }
        case Opcode::Not:
          write(in.a, ~read(in.a, 8), 8);
          ++pc;
          break;
        case Opcode::Move:
          write(in.a, read(in.b, in.width), in.width);
          ++pc;
          break;
        case Opcode::Store: {
          if (in.a.kind != OperandKind::Data) throw Trap{FaultKind::InvalidProgram};
          const std::uint64_t v = read(in.b, in.width);
          ws.store_buffer.push_back({port.base() + in.a.offset, in.width, v});
          ++pc;
          break;
        }
        case Opcode::Compare: {
          const std::uint64_t x = read(in.a, 8);
          const std::uint64_t y = read(in.b, 8);
          if (in.is_signed) {
            const auto sx = static_cast<std::int64_t>(x);
            const auto sy = static_cast<std::int64_t>(y);
            ws.cond = sx < sy ? Cond::Lt : (sx == sy ? Cond::Eq : Cond::Gt);
          } else {
            ws.cond = x < y ? Cond::Lt : (x == y ? Cond::Eq : Cond::Gt);
          }
          ++pc;
          break;
        }
        case Opcode::JumpEq:
        case Opcode::JumpNeq:
        case Opcode::JumpLt:
        case Opcode::JumpGt:
        case Opcode::JumpLe:
        case Opcode::JumpGe: {
          bool take = false;
          switch (in.op) {
            case Opcode::JumpEq: take = ws.cond == Cond::Eq; break;
            case Opcode::JumpNeq: take = ws.cond != Cond::Eq; break;
            case Opcode::JumpLt: take = ws.cond == Cond::Lt; break;
            case Opcode::JumpGt: take = ws.cond == Cond::Gt; break;
            case Opcode::JumpLe: take = ws.cond != Cond::Gt; break;
            default: take = ws.cond != Cond::Lt; break;
          }
          if (take && in.imm <= pc) throw Trap{FaultKind::InvalidProgram};
          pc = take ? static_cast<std::size_t>(in.imm) : pc + 1;
          break;
        }
        case Opcode::NextIter:
          out.kind = LogicOutcome::Kind::NextIter;
          return out;
        case Opcode::Return:
          out.kind = LogicOutcome::Kind::Return;
          return out;
        case Opcode::Load:
          throw Trap{FaultKind::InvalidProgram};
      }
    }
  } catch (const Trap& t) {
    out.kind = LogicOutcome::Kind::Fault;
    out.fault = t.kind;
    return out;
  }
}

struct WindowPort {
  Workspace& ws;
  VirtualAddress base() const { return ws.data_base; }
  std::uint64_t read(std::uint16_t off, std::size_t w) const {
    if (off < ws.window_start || off + w > std::size_t{ws.window_start} + ws.window_len)
      throw Trap{FaultKind::OperandBounds};
    return detail::load_word(ws.data.data() + off, w);
  }
};

struct MemoryPort {
  MemoryPool& mem;
  VirtualAddress iter_base;
  bool invalid_addr = false;
  VirtualAddress base() const { return iter_base; }
  std::uint64_t read(std::uint16_t off, std::size_t w) {
    const VirtualAddress a = iter_base + off;
    auto t = mem.translate(a, w, Access::Read);
    if (t.status == Translation::Status::Miss) {
      invalid_addr = true;
      throw Trap{FaultKind::None};
    }
    if (t.status == Translation::Status::Fault)
      throw Trap{t.reason == Translation::FaultReason::Straddle ? FaultKind::Straddle : FaultKind::Permission};
    std::uint8_t buf[8];
    mem.node(*mem.owner(a)).read_into(t.offset, std::span<std::uint8_t>(buf, w));
    return detail::load_word(buf, w);
  }
};

FaultKind fault_of(const Translation& t) {
  return t.reason == Translation::FaultReason::Straddle ? FaultKind::Straddle : FaultKind::Permission;
}

}  // namespace

LogicOutcome logic_step(Workspace& ws, const Program& program) {
  WindowPort port{ws};
  return execute_body(ws, program, port);
}

std::string_view run_status_name(RunStatus s) {
  switch (s) {
    case RunStatus::Running: return "running";
    case RunStatus::Done: return "done";
    case RunStatus::IterLimit: return "iter-limit";
    case RunStatus::Fault: return "fault";
    case RunStatus::InvalidAddr: return "invalid-addr";
  }
  return "?";
}

ReferenceMachine::ReferenceMachine(const Program& program, MemoryPool& mem, VirtualAddress cur_ptr,
                                   std::span<const std::uint8_t> scratch, std::uint32_t max_iter,
                                   std::uint32_t iter_used, std::size_t scratch_bytes)
    : program_(program),
      mem_(mem),
      reported_bytes_(scratch.size()),
      max_iter_(max_iter),
      counter_(iter_used) {
  ws_.reset(cur_ptr, scratch, scratch_bytes);
}

RunStatus ReferenceMachine::finish(RunStatus s, FaultKind f) {
  status_ = s;
  fault_ = f;
  return s;
}

bool ReferenceMachine::flush(std::optional<NodeId> node) {
  for (const auto& st : ws_.store_buffer) {
    if (!node || mem_.owner(st.addr) != node) {
      finish(RunStatus::Fault, FaultKind::StoreUnmapped);
      return false;
    }
    auto t = mem_.node(*node).translate(st.addr, st.width, Access::Write);
    if (t.status == Translation::Status::Miss) {
      finish(RunStatus::Fault, FaultKind::StoreUnmapped);
      return false;
    }
    if (t.status == Translation::Status::Fault) {
      finish(RunStatus::Fault, fault_of(t));
      return false;
    }
    std::uint8_t buf[8];
    detail::store_word(buf, st.value, st.width);
    mem_.node(*node).write(t.offset, std::span<const std::uint8_t>(buf, st.width));
  }
  ws_.store_buffer.clear();
  return true;
}

RunStatus ReferenceMachine::step(Step* info) {
  if (status_ != RunStatus::Running) return status_;
  Step local;
  Step& st = info ? *info : local;
  st = Step{};

  LogicOutcome out;
  if (program_.form() == ProgramForm::Deployable) {
    if (!ws_.store_buffer.empty()) {
      st.flushed = true;
      if (!flush(iter_node_)) return status_;
    }
    const Instruction& load = program_.code.front();
    const VirtualAddress base = ws_.cur_ptr;
    const VirtualAddress addr = base + load.a.offset;
    auto node = mem_.owner(addr);
    if (!node) return finish(RunStatus::InvalidAddr);
    auto t = mem_.node(*node).translate(addr, load.imm, Access::Read);
    if (t.status == Translation::Status::Miss) return finish(RunStatus::InvalidAddr);
    if (t.status == Translation::Status::Fault) return finish(RunStatus::Fault, fault_of(t));
    std::uint8_t buf[kMaxLoadWindow];
    std::span<std::uint8_t> window(buf, load.imm);
    mem_.node(*node).read_into(t.offset, window);
    fill_window(ws_, base, load.a.offset, window);
    iter_node_ = node;
    out = logic_step(ws_, program_);
  } else {
    // every iteration visits the node at cur_ptr, even if its path reads no field
    iter_node_ = mem_.owner(ws_.cur_ptr);
    if (!iter_node_) return finish(RunStatus::InvalidAddr);
    MemoryPort port{mem_, ws_.cur_ptr};
    out = execute_body(ws_, program_, port);
    if (port.invalid_addr) {
      instructions_ += out.executed;
      st.instructions = out.executed;
      return finish(RunStatus::InvalidAddr);
    }
  }

  instructions_ += out.executed;
  st.instructions = out.executed;
  ++iterations_;

  switch (out.kind) {
    case LogicOutcome::Kind::Fault:
      return finish(RunStatus::Fault, out.fault);
    case LogicOutcome::Kind::Return:
      if (!ws_.store_buffer.empty()) {
        st.final_flush = true;
        if (!flush(iter_node_)) return status_;
      }
      return finish(RunStatus::Done);
    case LogicOutcome::Kind::NextIter:
      ++counter_;
      if (program_.form() == ProgramForm::Source && !ws_.store_buffer.empty()) {
        // SOURCE programs have no LOAD slot; stores land at the iteration end.
        st.flushed = true;
        if (!flush(iter_node_)) return status_;
      }
      if (max_iter_ != 0 && counter_ >= max_iter_) {
        if (!ws_.store_buffer.empty()) {
          st.final_flush = true;
          if (!flush(iter_node_)) return status_;
        }
        return finish(RunStatus::IterLimit);
      }
      return status_;
  }
  return status_;
}

RunStatus ReferenceMachine::run() {
  while (step() == RunStatus::Running) {
  }
  return status_;
}

ReferenceResult ReferenceMachine::result() const {
  ReferenceResult r;
  r.status = status_;
  r.fault = fault_;
  r.cur_ptr = ws_.cur_ptr;
  r.scratch.assign(ws_.scratch.begin(), ws_.scratch.begin() + static_cast<std::ptrdiff_t>(reported_bytes_));
  r.iterations = iterations_;
  r.instructions = instructions_;
  return r;
}

ReferenceResult reference_run(const Program& program, MemoryPool& mem, VirtualAddress cur_ptr,
                              std::span<const std::uint8_t> scratch, std::uint32_t max_iter,
                              std::size_t scratch_bytes) {
  ReferenceMachine m(program, mem, cur_ptr, scratch, max_iter, 0, scratch_bytes);
  m.run();
  return m.result();
}

}  // namespace pchase
