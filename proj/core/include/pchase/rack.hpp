#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "pchase/accelerator.hpp"
#include "pchase/memory.hpp"
#include "pchase/packet.hpp"
#include "pchase/sim_kernel.hpp"
#include "pchase/trace.hpp"

namespace pchase {

struct LinkConfig {
  SimTime cpu_switch = 2285 * kPsPerNs;
  SimTime switch_node = 2285 * kPsPerNs;
  SimTime stack = 430 * kPsPerNs;  // network stack cost per packet
  double drop_prob = 0.0;
  std::uint64_t seed = 1;
};

struct RouteEntry {
  VirtualAddress vbase = 0;
  std::uint64_t length = 0;
  NodeId node = 0;
};

/// Global range map from virtual address to memory node.
class Switch {
 public:
  struct Destination {
    enum class Kind { Node, Cpu, Invalid };
    Kind kind = Kind::Invalid;
    NodeId node = 0;
    std::uint16_t cpu = 0;
  };

  void add_route(const RouteEntry& e);
  std::optional<NodeId> lookup(VirtualAddress addr) const;
  /// REQUESTs go by cur_ptr (Invalid if uncovered), responses to the CPU in the request id.
  Destination route(const TraversalPacket& p) const;
  const std::map<VirtualAddress, RouteEntry>& routes() const { return routes_; }

 private:
  std::map<VirtualAddress, RouteEntry> routes_;
};

struct RackConfig {
  std::size_t nodes = 1;
  AcceleratorConfig accel;
  LinkConfig link;
  std::uint64_t node_capacity = std::uint64_t{1} << 34;
  AllocationPolicy policy = AllocationPolicy::Uniform;
  bool chase_acc = false;
  SimTime cpu_processing = 1000 * kPsPerNs;
};

struct FabricStats {
  std::uint64_t sent = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;
  std::uint64_t bytes = 0;
  std::uint64_t cpu_sends = 0;
  std::uint64_t cpu_receives = 0;
  std::uint64_t xnode_hops = 0;   // node -> switch -> node continuations
  std::uint64_t acc_detours = 0;  // continuations bounced through the CPU
  std::uint64_t invalid_routes = 0;
};

/// Memory nodes with their accelerators, one switch and the CPU endpoints,
/// connected by fixed-latency links with seeded random loss.
class Rack {
 public:
  using CpuHandler = std::function<void(TraversalPacket&&)>;

  Rack(SimKernel& kernel, const RackConfig& cfg, Tracer* tracer = nullptr);

  Rack(const Rack&) = delete;
  Rack& operator=(const Rack&) = delete;

  SimKernel& kernel() { return kernel_; }
  MemoryPool& memory() { return memory_; }
  const Switch& network_switch() const { return switch_; }
  Accelerator& accelerator(NodeId n) { return *accels_.at(n); }
  std::size_t node_count() const { return accels_.size(); }
  const RackConfig& config() const { return cfg_; }
  const FabricStats& stats() const { return stats_; }
  Tracer* tracer() { return tracer_; }

  void attach_cpu(std::uint16_t cpu, CpuHandler handler);
  void send_from_cpu(std::uint16_t cpu, const TraversalPacket& p);

  /// When on, MISS continuations go node -> switch -> CPU instead of straight
  /// to the next node; the CPU re-issues them.
  void set_chase_acc_mode(bool on) { chase_acc_ = on; }
  bool chase_acc_mode() const { return chase_acc_; }

  /// One-way CPU -> node delivery latency (stack + both links).
  SimTime one_way_latency() const { return cfg_.link.stack + cfg_.link.cpu_switch + cfg_.link.switch_node; }

 private:
  struct Source {
    bool from_cpu;
    std::uint16_t id;
  };

  void send(Source from, const TraversalPacket& p);
  void at_switch(Source from, Bytes wire);
  void deliver_to_cpu(Bytes wire);
  bool dropped();
  void trace(int node, std::string_view ev, std::uint64_t id, std::uint64_t iter);

  SimKernel& kernel_;
  RackConfig cfg_;
  Tracer* tracer_;
  MemoryPool memory_;
  Switch switch_;
  std::vector<std::unique_ptr<Accelerator>> accels_;
  std::map<std::uint16_t, CpuHandler> cpus_;
  std::mt19937_64 rng_;
  bool chase_acc_;
  FabricStats stats_;
};

}  // namespace pchase
