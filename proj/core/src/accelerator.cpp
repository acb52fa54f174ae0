#include "pchase/accelerator.hpp"

#include <stdexcept>

#include "pchase/codec.hpp"

namespace pchase {

void CoreConfig::check() const {
  if (eta == 0) throw std::invalid_argument("eta must be positive");
  if (workspaces_per_logic == 0) throw std::invalid_argument("workspaces_per_logic must be positive");
  if (max_iter == 0 || max_iter > 0xFFFF) throw std::invalid_argument("max_iter must be in [1, 65535]");
  if (t_d <= 0) throw std::invalid_argument("t_d must be positive");
  if (t_i_ns < 0) throw std::invalid_argument("t_i must be non-negative");
  if (t_sched < 0) throw std::invalid_argument("t_sched must be non-negative");
  if (scratch_bytes == 0 || scratch_bytes > 0xFFFF)
    throw std::invalid_argument("scratch_pad size must be in [1, 65535]");
}

struct Accelerator::Program_ {
  Program program;
  bool ok = false;
};

namespace {

enum class MemOp { Load, FinalFlush };

struct Slot {
  Workspace ws;
  bool busy = false;
  std::size_t logic = 0;
  std::uint64_t request_id = 0;
  std::shared_ptr<const Bytes> code;
  std::uint32_t counter = 0;
  std::size_t reply_bytes = 0;
  MemOp op = MemOp::Load;
  MsgType after_flush = MsgType::Done;
};

struct LogicPipe {
  std::deque<std::size_t> queue;
  bool busy = false;
  BusyMeter meter;
};

FaultKind translation_fault(const Translation& t) {
  return t.reason == Translation::FaultReason::Straddle ? FaultKind::Straddle : FaultKind::Permission;
}

}  // namespace

struct Accelerator::Core {
  Accelerator& acc;
  int index;
  std::vector<Slot> slots;
  std::deque<std::size_t> mem_queue;
  bool mem_busy = false;
  BusyMeter mem_meter;
  std::vector<LogicPipe> logic;
  std::deque<TraversalPacket> admission;
  std::size_t busy_count = 0;

  std::vector<std::shared_ptr<const Program_>> programs;  // per slot

  Core(Accelerator& a, int i) : acc(a), index(i) {
    const auto& c = a.cfg_.core;
    slots.resize(static_cast<std::size_t>(c.eta) * c.workspaces_per_logic);
    programs.resize(slots.size());
    for (std::size_t s = 0; s < slots.size(); ++s) slots[s].logic = s % c.eta;
    logic.resize(c.eta);
  }

  SimKernel& kernel() { return acc.kernel_; }
  const CoreConfig& cfg() const { return acc.cfg_.core; }

  void admit(TraversalPacket&& pkt) {
    for (std::size_t s = 0; s < slots.size(); ++s) {
      if (!slots[s].busy) {
        bind(s, std::move(pkt));
        return;
      }
    }
    ++acc.stats_.queued;
    acc.trace(index, "sched", "queue", pkt.request_id, pkt.iter_used);
    admission.push_back(std::move(pkt));
  }

  void bind(std::size_t s, TraversalPacket&& pkt) {
    Slot& slot = slots[s];
    slot.busy = true;
    ++busy_count;
    ++acc.stats_.admitted;
    slot.request_id = pkt.request_id;
    slot.counter = pkt.iter_used;
    slot.reply_bytes = pkt.scratch.size();
    slot.ws.reset(pkt.cur_ptr, pkt.scratch, cfg().scratch_bytes);
    programs[s] = acc.program_for(pkt.code);
    slot.code = std::make_shared<const Bytes>(std::move(pkt.code));
    acc.trace(index, "sched", "admit", slot.request_id, slot.counter);
    kernel().schedule_after(cfg().t_sched, [this, s] { enqueue_mem(s, MemOp::Load); });
  }

  void enqueue_mem(std::size_t s, MemOp op) {
    slots[s].op = op;
    mem_queue.push_back(s);
    pump_mem();
  }

  void pump_mem() {
    if (mem_busy || mem_queue.empty()) return;
    const std::size_t s = mem_queue.front();
    mem_queue.pop_front();
    mem_busy = true;
    mem_meter.begin(kernel().now());
    ++acc.stats_.mem_slots;
    acc.trace(index, "mem", slots[s].op == MemOp::Load ? "load" : "flush", slots[s].request_id,
              slots[s].counter);
    kernel().schedule_after(cfg().t_d, [this, s] { mem_complete(s); });
  }

  // Returns false (after responding) if a buffered store cannot be written here.
  bool flush_stores(std::size_t s) {
    Slot& slot = slots[s];
    for (const auto& st : slot.ws.store_buffer) {
      auto t = acc.store_.translate(st.addr, st.width, Access::Write);
      if (t.status != Translation::Status::Hit) {
        respond(s, MsgType::Fault,
                t.status == Translation::Status::Miss ? FaultKind::StoreUnmapped : translation_fault(t));
        return false;
      }
      std::uint8_t buf[8];
      for (unsigned i = 0; i < st.width; ++i) buf[i] = static_cast<std::uint8_t>(st.value >> (8 * i));
      acc.store_.write(t.offset, std::span<const std::uint8_t>(buf, st.width));
    }
    slot.ws.store_buffer.clear();
    return true;
  }

  void mem_complete(std::size_t s) {
    mem_meter.end(kernel().now());
    mem_busy = false;
    Slot& slot = slots[s];

    if (flush_stores(s)) {
      if (slot.op == MemOp::FinalFlush) {
        respond(s, slot.after_flush);
      } else {
        const Instruction& load = programs[s]->program.code.front();
        const VirtualAddress base = slot.ws.cur_ptr;
        const VirtualAddress addr = base + load.a.offset;
        auto t = acc.store_.translate(addr, load.imm, Access::Read);
        if (t.status == Translation::Status::Miss) {
          if (partition_owner(addr) == acc.id_) {
            respond(s, MsgType::InvalidAddr);
          } else {
            acc.trace(index, "mem", "miss", slot.request_id, slot.counter);
            ++acc.stats_.forwarded;
            respond(s, MsgType::Request);
          }
        } else if (t.status == Translation::Status::Fault) {
          respond(s, MsgType::Fault, translation_fault(t));
        } else {
          std::uint8_t buf[kMaxLoadWindow];
          std::span<std::uint8_t> window(buf, load.imm);
          acc.store_.read_into(t.offset, window);
          fill_window(slot.ws, base, load.a.offset, window);
          enqueue_logic(s);
        }
      }
    }
    pump_mem();
  }

  void enqueue_logic(std::size_t s) {
    const std::size_t p = slots[s].logic;
    logic[p].queue.push_back(s);
    pump_logic(p);
  }

  void pump_logic(std::size_t p) {
    LogicPipe& pipe = logic[p];
    if (pipe.busy || pipe.queue.empty()) return;
    const std::size_t s = pipe.queue.front();
    pipe.queue.pop_front();
    LogicOutcome out = logic_step(slots[s].ws, programs[s]->program);
    pipe.busy = true;
    pipe.meter.begin(kernel().now());
    ++acc.stats_.logic_slots;
    acc.trace(index, "logic", "exec", slots[s].request_id, slots[s].counter);
    kernel().schedule_after(cfg().logic_time(out.executed), [this, p, s, out] { logic_complete(p, s, out); });
  }

  void logic_complete(std::size_t p, std::size_t s, LogicOutcome out) {
    LogicPipe& pipe = logic[p];
    pipe.meter.end(kernel().now());
    pipe.busy = false;
    Slot& slot = slots[s];

    switch (out.kind) {
      case LogicOutcome::Kind::Fault:
        respond(s, MsgType::Fault, out.fault);
        break;
      case LogicOutcome::Kind::Return:
        ++acc.stats_.iterations;
        finish(s, MsgType::Done);
        break;
      case LogicOutcome::Kind::NextIter:
        ++acc.stats_.iterations;
        ++slot.counter;
        if (slot.counter >= cfg().max_iter)
          finish(s, MsgType::IterLimit);
        else
          enqueue_mem(s, MemOp::Load);
        break;
    }
    pump_logic(p);
  }

  // Terminal outcome: pending stores take one more memory slot before the reply.
  void finish(std::size_t s, MsgType type) {
    if (slots[s].ws.store_buffer.empty()) {
      respond(s, type);
      return;
    }
    slots[s].after_flush = type;
    enqueue_mem(s, MemOp::FinalFlush);
  }

  void respond(std::size_t s, MsgType type, FaultKind fault = FaultKind::None) {
    Slot& slot = slots[s];
    TraversalPacket out;
    out.msg_type = type;
    out.flags = static_cast<std::uint16_t>(fault);
    out.request_id = slot.request_id;
    out.cur_ptr = slot.ws.cur_ptr;
    out.iter_used = static_cast<std::uint16_t>(slot.counter);
    out.code = *slot.code;
    out.scratch.assign(slot.ws.scratch.begin(),
                       slot.ws.scratch.begin() + static_cast<std::ptrdiff_t>(slot.reply_bytes));

    switch (type) {
      case MsgType::Done: ++acc.stats_.done; break;
      case MsgType::IterLimit: ++acc.stats_.iter_limit; break;
      case MsgType::Fault: ++acc.stats_.faults; break;
      case MsgType::InvalidAddr: ++acc.stats_.invalid; break;
      case MsgType::Request: break;
    }

    acc.active_.erase(slot.request_id);
    slot.busy = false;
    slot.code.reset();
    programs[s].reset();
    --busy_count;
    acc.emit_later(index, std::move(out));

    if (!admission.empty()) {
      TraversalPacket next = std::move(admission.front());
      admission.pop_front();
      bind(s, std::move(next));
    }
  }
};

Accelerator::Accelerator(NodeId id, SimKernel& kernel, MemoryNodeStore& store, const AcceleratorConfig& cfg,
                         Emit emit, Tracer* tracer)
    : id_(id), kernel_(kernel), store_(store), cfg_(cfg), emit_(std::move(emit)), tracer_(tracer) {
  cfg_.core.check();
  if (cfg_.cores == 0) throw std::invalid_argument("accelerator needs at least one core");
  for (std::uint32_t c = 0; c < cfg_.cores; ++c) cores_.push_back(std::make_unique<Core>(*this, static_cast<int>(c)));
}

Accelerator::~Accelerator() = default;

void Accelerator::trace(int core, std::string_view unit, std::string_view ev, std::uint64_t id,
                        std::uint64_t iter) {
  if (tracer_ && tracer_->enabled()) tracer_->event(kernel_.now(), id_, core, unit, ev, id, iter);
}

void Accelerator::emit_later(int core, TraversalPacket&& pkt) {
  trace(core, "sched", msg_type_name(pkt.msg_type), pkt.request_id, pkt.iter_used);
  auto shared = std::make_shared<TraversalPacket>(std::move(pkt));
  kernel_.schedule_after(cfg_.core.t_sched, [this, shared] { emit_(std::move(*shared)); });
}

std::shared_ptr<const Accelerator::Program_> Accelerator::program_for(const Bytes& code) {
  auto it = programs_.find(code);
  if (it != programs_.end()) return it->second;
  auto p = std::make_shared<Program_>();
  try {
    p->program = decode(code);
    ValidateOptions opts;
    opts.scratch_bytes = cfg_.core.scratch_bytes;
    p->ok = p->program.form() == ProgramForm::Deployable && validate(p->program, opts).ok();
  } catch (const DecodeError&) {
    p->ok = false;
  }
  programs_.emplace(code, p);
  return p;
}

void Accelerator::receive(TraversalPacket pkt) {
  if (pkt.msg_type != MsgType::Request) {
    trace(-1, "sched", "drop-non-request", pkt.request_id, pkt.iter_used);
    return;
  }
  if (active_.count(pkt.request_id)) {
    ++stats_.deduped;
    trace(-1, "sched", "dedup", pkt.request_id, pkt.iter_used);
    return;
  }

  FaultKind reject = FaultKind::None;
  if (!program_for(pkt.code)->ok)
    reject = FaultKind::InvalidProgram;
  else if (pkt.scratch.size() > cfg_.core.scratch_bytes)
    reject = FaultKind::ScratchTooLarge;
  if (reject != FaultKind::None) {
    ++stats_.faults;
    pkt.msg_type = MsgType::Fault;
    pkt.flags = static_cast<std::uint16_t>(reject);
    emit_later(-1, std::move(pkt));
    return;
  }

  active_.insert(pkt.request_id);
  std::size_t best = 0;
  std::size_t best_load = SIZE_MAX;
  for (std::size_t c = 0; c < cores_.size(); ++c) {
    const std::size_t load = cores_[c]->busy_count + cores_[c]->admission.size();
    if (load < best_load) {
      best = c;
      best_load = load;
    }
  }
  cores_[best]->admit(std::move(pkt));
}

std::size_t Accelerator::core_count() const { return cores_.size(); }
std::size_t Accelerator::busy_workspaces(std::size_t core) const { return cores_.at(core)->busy_count; }
std::size_t Accelerator::queued(std::size_t core) const { return cores_.at(core)->admission.size(); }

SimTime Accelerator::mem_busy_until(std::size_t core, SimTime t) const {
  return cores_.at(core)->mem_meter.busy_until(t);
}

SimTime Accelerator::logic_busy_until(std::size_t core, std::size_t pipe, SimTime t) const {
  return cores_.at(core)->logic.at(pipe).meter.busy_until(t);
}

SimTime Accelerator::total_mem_busy(SimTime t) const {
  SimTime sum = 0;
  for (const auto& c : cores_) sum += c->mem_meter.busy_until(t);
  return sum;
}

SimTime Accelerator::total_logic_busy(SimTime t) const {
  SimTime sum = 0;
  for (const auto& c : cores_)
    for (const auto& p : c->logic) sum += p.meter.busy_until(t);
  return sum;
}

}  // namespace pchase
