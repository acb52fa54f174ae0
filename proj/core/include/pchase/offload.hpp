#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "pchase/isa.hpp"
#include "pchase/logic.hpp"
#include "pchase/packet.hpp"
#include "pchase/rack.hpp"
#include "pchase/sim_kernel.hpp"

namespace pchase {

struct OffloadAnalysis {
  std::size_t n = 0;     // longest path, terminal included, LOAD excluded
  SimTime t_c = 0;       // ps
  std::uint16_t window_start = 0;
  std::uint32_t window_len = 8;
  bool window_fits = true;
  bool uses_store = false;
  std::size_t scratch_bytes_used = 0;

  double eta_ratio(SimTime t_d) const { return static_cast<double>(t_c) / static_cast<double>(t_d); }
};

class OffloadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Static analysis of a SOURCE program: load window, longest path and its cost.
OffloadAnalysis analyze(const Program& source, double t_i_ns);

/// Prepends the aggregated LOAD and shifts jump targets.
Program lower(const Program& source, const OffloadAnalysis& analysis);

struct OffloadConfig {
  std::uint32_t eta = 1;
  SimTime t_d = 120 * kPsPerNs;
  double t_i_ns = 7.0 / 6.0;
  std::uint32_t max_iter = 512;
  SimTime timeout = 0;  // 0: derived per program
  std::uint32_t max_retransmits = 3;
  std::size_t scratch_bytes = kDefaultScratchBytes;
  double host_instruction_ns = 0.2;
  SimTime t_sched = 4 * kPsPerNs;
};

struct Decision {
  bool offload = false;
  std::string reason;  // "eta", "window" or "scratch" when not offloaded
};

/// Offload iff t_c < eta * t_d, the window fits and the scratch use fits.
Decision decide(const OffloadAnalysis& analysis, const OffloadConfig& cfg);

/// A deployable program with its encoded bytes, ready to be sent repeatedly.
struct PreparedProgram {
  Program program;
  Bytes code;
  SimTime t_c = 0;
  bool uses_store = false;
};

std::shared_ptr<const PreparedProgram> prepare(const Program& deployable, double t_i_ns);

enum class JobStatus { Done, Fault, InvalidAddr, Exhausted, Timeout };

std::string_view job_status_name(JobStatus s);

struct JobResult {
  JobStatus status = JobStatus::Done;
  FaultKind fault = FaultKind::None;
  Bytes scratch;
  VirtualAddress cur_ptr = 0;
  std::uint32_t rounds = 0;       // request rounds (resumes after ITER_LIMIT + 1)
  std::uint32_t retransmits = 0;
  std::uint32_t cpu_sends = 0;    // packets this job put on the wire from the CPU
  std::uint32_t cpu_receives = 0;
  std::uint32_t detours = 0;      // continuations re-issued by the CPU
  std::uint64_t iterations = 0;
  std::uint64_t remote_accesses = 0;  // host path only
  SimTime submitted = 0;
  SimTime completed = 0;

  SimTime latency() const { return completed - submitted; }
  bool ok() const { return status == JobStatus::Done; }
};

/// CPU-node endpoint: sends traversal requests, handles timeouts,
/// retransmission, resume after ITER_LIMIT and CHASE-ACC re-issue, and runs
/// the host fallback executor.
class OffloadEngine {
 public:
  using Completion = std::function<void(const JobResult&)>;

  OffloadEngine(Rack& rack, std::uint16_t cpu_id, const OffloadConfig& cfg);
  ~OffloadEngine();

  OffloadEngine(const OffloadEngine&) = delete;
  OffloadEngine& operator=(const OffloadEngine&) = delete;

  void submit_offloaded(std::shared_ptr<const PreparedProgram> prog, VirtualAddress cur_ptr, Bytes scratch,
                        Completion done);
  void submit_host(std::shared_ptr<const PreparedProgram> prog, VirtualAddress cur_ptr, Bytes scratch,
                   Completion done);

  const OffloadConfig& config() const { return cfg_; }
  Rack& rack() { return rack_; }
  std::uint16_t cpu_id() const { return cpu_; }
  std::size_t in_flight() const { return jobs_.size() + host_jobs_; }
  std::uint64_t next_counter() const { return counter_; }

  /// Round trip of one host remote access: request and reply through the
  /// switch plus one memory slot at the node.
  SimTime remote_access_time() const;
  SimTime timeout_for(const PreparedProgram& p) const;

 private:
  struct Job;
  struct HostJob;

  void on_packet(TraversalPacket&& p);
  void transmit(Job& job);
  void arm(std::uint64_t id, std::uint64_t attempt, SimTime delay);
  void complete(std::uint64_t id, JobStatus status, const TraversalPacket* p);
  void host_step(const std::shared_ptr<HostJob>& job);

  Rack& rack_;
  std::uint16_t cpu_;
  OffloadConfig cfg_;
  std::uint64_t counter_ = 1;
  std::unordered_map<std::uint64_t, std::unique_ptr<Job>> jobs_;
  std::size_t host_jobs_ = 0;
  std::shared_ptr<bool> alive_;
};

/// Blocking wrappers: submit and step the kernel until the job completes.
JobResult execute_offloaded(OffloadEngine& engine, std::shared_ptr<const PreparedProgram> prog,
                            VirtualAddress cur_ptr, Bytes scratch);
JobResult execute_host(OffloadEngine& engine, std::shared_ptr<const PreparedProgram> prog,
                       VirtualAddress cur_ptr, Bytes scratch);

}  // namespace pchase
