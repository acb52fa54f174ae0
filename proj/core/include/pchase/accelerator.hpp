#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <unordered_set>
#include <vector>

#include "pchase/logic.hpp"
#include "pchase/memory.hpp"
#include "pchase/packet.hpp"
#include "pchase/sim_kernel.hpp"
#include "pchase/trace.hpp"

namespace pchase {

struct CoreConfig {
  std::uint32_t eta = 1;
  SimTime t_d = 120 * kPsPerNs;
  double t_i_ns = 7.0 / 6.0;
  std::uint32_t max_iter = 512;
  std::uint32_t workspaces_per_logic = 2;
  std::size_t scratch_bytes = kDefaultScratchBytes;
  SimTime t_sched = 4 * kPsPerNs;

  /// Logic occupancy for `n` executed instructions.
  SimTime logic_time(std::size_t n) const { return ns_to_ps(t_i_ns * static_cast<double>(n)); }
  void check() const;
};

struct AcceleratorConfig {
  CoreConfig core;
  std::uint32_t cores = 2;
};

/// Busy-time counter supporting utilisation over arbitrary windows.
class BusyMeter {
 public:
  void begin(SimTime t) {
    active_ = true;
    since_ = t;
  }
  void end(SimTime t) {
    busy_ += t - since_;
    active_ = false;
  }
  bool active() const { return active_; }
  /// Busy time accumulated up to `t` (t >= the last transition).
  SimTime busy_until(SimTime t) const { return busy_ + (active_ ? t - since_ : 0); }

 private:
  bool active_ = false;
  SimTime since_ = 0;
  SimTime busy_ = 0;
};

struct AcceleratorStats {
  std::uint64_t admitted = 0;
  std::uint64_t queued = 0;  // requests that waited for a workspace
  std::uint64_t deduped = 0;
  std::uint64_t mem_slots = 0;
  std::uint64_t logic_slots = 0;
  std::uint64_t iterations = 0;
  std::uint64_t done = 0;
  std::uint64_t iter_limit = 0;
  std::uint64_t faults = 0;
  std::uint64_t invalid = 0;
  std::uint64_t forwarded = 0;  // MISS continuations handed to the switch
};

/// One memory node's accelerator: per core one memory pipeline, eta logic
/// pipelines and workspaces_per_logic * eta workspaces, driven by a
/// signal-based scheduler.
class Accelerator {
 public:
  using Emit = std::function<void(TraversalPacket&&)>;

  Accelerator(NodeId id, SimKernel& kernel, MemoryNodeStore& store, const AcceleratorConfig& cfg,
              Emit emit, Tracer* tracer = nullptr);
  ~Accelerator();

  Accelerator(const Accelerator&) = delete;
  Accelerator& operator=(const Accelerator&) = delete;

  /// Admission of an incoming REQUEST at the current simulated time.
  void receive(TraversalPacket pkt);

  NodeId id() const { return id_; }
  const AcceleratorConfig& config() const { return cfg_; }
  const AcceleratorStats& stats() const { return stats_; }

  std::size_t core_count() const;
  std::size_t busy_workspaces(std::size_t core) const;
  std::size_t queued(std::size_t core) const;
  std::size_t active_requests() const { return active_.size(); }

  SimTime mem_busy_until(std::size_t core, SimTime t) const;
  SimTime logic_busy_until(std::size_t core, std::size_t pipe, SimTime t) const;
  /// Sum over every memory pipeline / logic pipeline of this node.
  SimTime total_mem_busy(SimTime t) const;
  SimTime total_logic_busy(SimTime t) const;

 private:
  struct Core;
  struct Program_;

  std::shared_ptr<const Program_> program_for(const Bytes& code);
  void emit_later(int core, TraversalPacket&& pkt);
  void trace(int core, std::string_view unit, std::string_view ev, std::uint64_t id, std::uint64_t iter);

  NodeId id_;
  SimKernel& kernel_;
  MemoryNodeStore& store_;
  AcceleratorConfig cfg_;
  Emit emit_;
  Tracer* tracer_;
  std::vector<std::unique_ptr<Core>> cores_;
  std::map<Bytes, std::shared_ptr<const Program_>> programs_;
  std::unordered_set<std::uint64_t> active_;
  AcceleratorStats stats_;

  friend struct Core;
};

}  // namespace pchase
