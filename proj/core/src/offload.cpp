#include "pchase/offload.hpp"

#include <algorithm>
#include <limits>

#include "pchase/codec.hpp"

namespace pchase {

OffloadAnalysis analyze(const Program& source, double t_i_ns) {
  if (source.form() != ProgramForm::Source) throw OffloadError("analyze expects a SOURCE program");

  OffloadAnalysis a;
  std::size_t lo = std::numeric_limits<std::size_t>::max();
  std::size_t hi = 0;
  for (const Instruction& in : source.code) {
    const std::size_t w = access_width(in);
    for (const Operand* o : {&in.a, &in.b}) {
      if (o->kind == OperandKind::Data) {
        lo = std::min<std::size_t>(lo, o->offset);
        hi = std::max<std::size_t>(hi, o->offset + w);
      } else if (o->kind == OperandKind::Sp) {
        a.scratch_bytes_used = std::max<std::size_t>(a.scratch_bytes_used, o->offset + w);
      }
    }
    if (in.op == Opcode::Store) a.uses_store = true;
  }
  if (hi == 0) {
    lo = 0;
    hi = 8;
  }
  a.window_start = static_cast<std::uint16_t>(lo);
  a.window_len = static_cast<std::uint32_t>(hi - lo);
  a.window_fits = a.window_len <= kMaxLoadWindow && hi <= kMaxLoadWindow;
  a.n = longest_path(source);
  a.t_c = ns_to_ps(t_i_ns * static_cast<double>(a.n));
  return a;
}

Program lower(const Program& source, const OffloadAnalysis& analysis) {
  if (source.form() == ProgramForm::Deployable) throw OffloadError("already lowered");
  if (source.size() + 1 > kMaxProgramLength) throw OffloadError("program too long after lowering");
  if (!analysis.window_fits) throw OffloadError("load window exceeds 256 bytes");

  Program out;
  out.code.reserve(source.size() + 1);
  out.code.push_back(ins::load(analysis.window_start, analysis.window_len));
  for (Instruction in : source.code) {
    if (is_jump(in.op)) ++in.imm;
    out.code.push_back(in);
  }
  return out;
}

Decision decide(const OffloadAnalysis& analysis, const OffloadConfig& cfg) {
  if (!analysis.window_fits) return {false, "window"};
  if (analysis.scratch_bytes_used > cfg.scratch_bytes) return {false, "scratch"};
  if (analysis.t_c >= static_cast<SimTime>(cfg.eta) * cfg.t_d) return {false, "eta"};
  return {true, ""};
}

std::shared_ptr<const PreparedProgram> prepare(const Program& deployable, double t_i_ns) {
  if (deployable.form() != ProgramForm::Deployable) throw OffloadError("prepare expects a DEPLOYABLE program");
  auto p = std::make_shared<PreparedProgram>();
  p->program = deployable;
  p->code = encode(deployable);
  p->t_c = ns_to_ps(t_i_ns * static_cast<double>(longest_path(deployable)));
  p->uses_store = std::any_of(deployable.code.begin(), deployable.code.end(),
                              [](const Instruction& in) { return in.op == Opcode::Store; });
  return p;
}

std::string_view job_status_name(JobStatus s) {
  switch (s) {
    case JobStatus::Done: return "done";
    case JobStatus::Fault: return "fault";
    case JobStatus::InvalidAddr: return "invalid-addr";
    case JobStatus::Exhausted: return "exhausted-retransmits";
    case JobStatus::Timeout: return "timeout";
  }
  return "?";
}

struct OffloadEngine::Job {
  std::shared_ptr<const PreparedProgram> prog;
  TraversalPacket packet;  // current round's request, resent verbatim on timeout
  Completion done;
  JobResult result;
  std::uint64_t attempt = 0;
  std::uint32_t round_retransmits = 0;
  SimTime timeout = 0;
};

struct OffloadEngine::HostJob {
  std::shared_ptr<const PreparedProgram> prog;
  std::unique_ptr<ReferenceMachine> machine;
  Completion done;
  JobResult result;
};

OffloadEngine::OffloadEngine(Rack& rack, std::uint16_t cpu_id, const OffloadConfig& cfg)
    : rack_(rack), cpu_(cpu_id), cfg_(cfg), alive_(std::make_shared<bool>(true)) {
  rack_.attach_cpu(cpu_, [this](TraversalPacket&& p) { on_packet(std::move(p)); });
}

OffloadEngine::~OffloadEngine() {
  *alive_ = false;
  rack_.attach_cpu(cpu_, nullptr);
}

SimTime OffloadEngine::remote_access_time() const {
  const auto& l = rack_.config().link;
  return 2 * (l.stack + l.cpu_switch + l.switch_node) + cfg_.t_d;
}

SimTime OffloadEngine::timeout_for(const PreparedProgram& p) const {
  if (cfg_.timeout > 0) return cfg_.timeout;
  const auto& l = rack_.config().link;
  // worst case: every iteration moves to another node, directly or through the CPU
  const SimTime hop = 2 * cfg_.t_sched + std::max(l.stack + 2 * l.switch_node,
                                                  2 * (l.stack + l.cpu_switch + l.switch_node) +
                                                      rack_.config().cpu_processing);
  const auto iters = static_cast<SimTime>(cfg_.max_iter);
  const SimTime one_round = 2 * (l.stack + cfg_.t_sched + l.cpu_switch + l.switch_node) +
                            iters * (cfg_.t_d + p.t_c) + (iters - 1) * hop;
  return 4 * one_round;
}

void OffloadEngine::submit_offloaded(std::shared_ptr<const PreparedProgram> prog, VirtualAddress cur_ptr,
                                     Bytes scratch, Completion done) {
  auto job = std::make_unique<Job>();
  job->timeout = timeout_for(*prog);
  job->packet.msg_type = MsgType::Request;
  job->packet.request_id = make_request_id(cpu_, counter_++);
  job->packet.cur_ptr = cur_ptr;
  job->packet.code = prog->code;
  job->packet.scratch = std::move(scratch);
  job->prog = std::move(prog);
  job->done = std::move(done);
  job->result.submitted = rack_.kernel().now();
  job->result.rounds = 1;
  const std::uint64_t id = job->packet.request_id;
  Job& ref = *job;
  jobs_.emplace(id, std::move(job));
  transmit(ref);
}

void OffloadEngine::transmit(Job& job) {
  ++job.result.cpu_sends;
  ++job.attempt;
  rack_.send_from_cpu(cpu_, job.packet);
  arm(job.packet.request_id, job.attempt, job.timeout);
}

void OffloadEngine::arm(std::uint64_t id, std::uint64_t attempt, SimTime delay) {
  std::weak_ptr<bool> alive = alive_;
  rack_.kernel().schedule_after(delay, [this, alive, id, attempt] {
    if (alive.expired() || !*alive.lock()) return;
    auto it = jobs_.find(id);
    if (it == jobs_.end() || it->second->attempt != attempt) return;
    Job& job = *it->second;
    if (job.prog->uses_store) {
      complete(id, JobStatus::Timeout, nullptr);
      return;
    }
    if (job.round_retransmits >= cfg_.max_retransmits) {
      complete(id, JobStatus::Exhausted, nullptr);
      return;
    }
    ++job.round_retransmits;
    ++job.result.retransmits;
    transmit(job);
  });
}

void OffloadEngine::on_packet(TraversalPacket&& p) {
  auto it = jobs_.find(p.request_id);
  if (it == jobs_.end()) return;  // late duplicate
  Job& job = *it->second;
  ++job.result.cpu_receives;

  switch (p.msg_type) {
    case MsgType::Request: {
      // continuation detoured through the CPU: re-issue after local processing
      ++job.result.detours;
      std::weak_ptr<bool> alive = alive_;
      auto pkt = std::make_shared<TraversalPacket>(std::move(p));
      rack_.kernel().schedule_after(rack_.config().cpu_processing, [this, alive, pkt] {
        if (alive.expired() || !*alive.lock()) return;
        auto j = jobs_.find(pkt->request_id);
        if (j == jobs_.end()) return;
        ++j->second->result.cpu_sends;
        rack_.send_from_cpu(cpu_, *pkt);
      });
      return;
    }
    case MsgType::IterLimit: {
      job.result.iterations += p.iter_used;
      auto node = std::move(it->second);
      jobs_.erase(it);
      node->packet.request_id = make_request_id(cpu_, counter_++);
      node->packet.cur_ptr = p.cur_ptr;
      node->packet.iter_used = 0;
      node->packet.scratch = std::move(p.scratch);
      node->round_retransmits = 0;
      ++node->result.rounds;
      Job& ref = *node;
      jobs_.emplace(node->packet.request_id, std::move(node));
      transmit(ref);
      return;
    }
    case MsgType::Done:
      complete(p.request_id, JobStatus::Done, &p);
      return;
    case MsgType::Fault:
      complete(p.request_id, JobStatus::Fault, &p);
      return;
    case MsgType::InvalidAddr:
      complete(p.request_id, JobStatus::InvalidAddr, &p);
      return;
  }
}

void OffloadEngine::complete(std::uint64_t id, JobStatus status, const TraversalPacket* p) {
  auto it = jobs_.find(id);
  std::unique_ptr<Job> job = std::move(it->second);
  jobs_.erase(it);
  JobResult& r = job->result;
  r.status = status;
  r.completed = rack_.kernel().now();
  if (p) {
    r.fault = p->fault();
    r.scratch = p->scratch;
    r.cur_ptr = p->cur_ptr;
    // iter_used counts NEXT_ITERs; a Done reply also completed its final iteration
    r.iterations += p->iter_used + (status == JobStatus::Done ? 1 : 0);
  } else {
    r.scratch = job->packet.scratch;
    r.cur_ptr = job->packet.cur_ptr;
  }
  if (job->done) job->done(r);
}

void OffloadEngine::submit_host(std::shared_ptr<const PreparedProgram> prog, VirtualAddress cur_ptr,
                                Bytes scratch, Completion done) {
  auto job = std::make_shared<HostJob>();
  job->prog = std::move(prog);
  job->machine = std::make_unique<ReferenceMachine>(job->prog->program, rack_.memory(), cur_ptr, scratch, 0, 0,
                                                    cfg_.scratch_bytes);
  job->done = std::move(done);
  job->result.submitted = rack_.kernel().now();
  job->result.rounds = 1;
  ++host_jobs_;
  host_step(job);
}

void OffloadEngine::host_step(const std::shared_ptr<HostJob>& job) {
  ReferenceMachine::Step info;
  const RunStatus s = job->machine->step(&info);

  // every iteration of a deployable program reads its window remotely
  std::uint64_t accesses = 1 + (info.flushed ? 1 : 0) + (info.final_flush ? 1 : 0);
  job->result.remote_accesses += accesses;
  const SimTime delay = static_cast<SimTime>(accesses) * remote_access_time() +
                        ns_to_ps(cfg_.host_instruction_ns * static_cast<double>(info.instructions));

  std::weak_ptr<bool> alive = alive_;
  rack_.kernel().schedule_after(delay, [this, alive, job, s] {
    if (alive.expired() || !*alive.lock()) return;
    if (s == RunStatus::Running) {
      host_step(job);
      return;
    }
    JobResult& r = job->result;
    const ReferenceResult ref = job->machine->result();
    switch (s) {
      case RunStatus::Done: r.status = JobStatus::Done; break;
      case RunStatus::InvalidAddr: r.status = JobStatus::InvalidAddr; break;
      default: r.status = JobStatus::Fault; break;
    }
    r.fault = ref.fault;
    r.scratch = ref.scratch;
    r.cur_ptr = ref.cur_ptr;
    r.iterations = ref.iterations;
    r.completed = rack_.kernel().now();
    --host_jobs_;
    if (job->done) job->done(r);
  });
}

namespace {
template <class Submit>
JobResult run_blocking(Rack& rack, Submit submit) {
  bool finished = false;
  JobResult out;
  submit([&](const JobResult& r) {
    out = r;
    finished = true;
  });
  while (!finished && rack.kernel().step()) {
  }
  if (!finished) throw std::logic_error("simulation drained before the job completed");
  return out;
}
}  // namespace

JobResult execute_offloaded(OffloadEngine& engine, std::shared_ptr<const PreparedProgram> prog,
                            VirtualAddress cur_ptr, Bytes scratch) {
  return run_blocking(engine.rack(), [&](OffloadEngine::Completion c) {
    engine.submit_offloaded(std::move(prog), cur_ptr, std::move(scratch), std::move(c));
  });
}

JobResult execute_host(OffloadEngine& engine, std::shared_ptr<const PreparedProgram> prog,
                       VirtualAddress cur_ptr, Bytes scratch) {
  return run_blocking(engine.rack(), [&](OffloadEngine::Completion c) {
    engine.submit_host(std::move(prog), cur_ptr, std::move(scratch), std::move(c));
  });
}

}  // namespace pchase
