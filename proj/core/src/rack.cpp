#include "pchase/rack.hpp"

#include <stdexcept>

namespace pchase {

void Switch::add_route(const RouteEntry& e) {
  if (e.length == 0) throw std::invalid_argument("route entry with zero length");
  auto next = routes_.lower_bound(e.vbase);
  if (next != routes_.end() && next->first < e.vbase + e.length)
    throw std::invalid_argument("route entry overlaps an existing route");
  if (next != routes_.begin()) {
    const auto& prev = std::prev(next)->second;
    if (prev.vbase + prev.length > e.vbase) throw std::invalid_argument("route entry overlaps an existing route");
  }
  routes_.emplace(e.vbase, e);
}

std::optional<NodeId> Switch::lookup(VirtualAddress addr) const {
  auto it = routes_.upper_bound(addr);
  if (it == routes_.begin()) return std::nullopt;
  const RouteEntry& e = std::prev(it)->second;
  if (addr - e.vbase >= e.length) return std::nullopt;
  return e.node;
}

Switch::Destination Switch::route(const TraversalPacket& p) const {
  Destination d;
  if (p.msg_type == MsgType::Request) {
    if (auto n = lookup(p.cur_ptr)) {
      d.kind = Destination::Kind::Node;
      d.node = *n;
    }
    return d;
  }
  d.kind = Destination::Kind::Cpu;
  d.cpu = request_cpu(p.request_id);
  return d;
}

Rack::Rack(SimKernel& kernel, const RackConfig& cfg, Tracer* tracer)
    : kernel_(kernel),
      cfg_(cfg),
      tracer_(tracer),
      memory_(cfg.nodes, cfg.node_capacity, cfg.policy),
      rng_(cfg.link.seed),
      chase_acc_(cfg.chase_acc) {
  if (cfg.nodes == 0 || cfg.nodes > 0xFFFF) throw std::invalid_argument("node count must be in [1, 65535]");
  if (cfg.link.drop_prob < 0.0 || cfg.link.drop_prob > 1.0)
    throw std::invalid_argument("drop probability must be in [0, 1]");
  for (std::size_t n = 0; n < cfg.nodes; ++n) {
    const auto id = static_cast<NodeId>(n);
    switch_.add_route({partition_base(id), kPartitionSize, id});
    accels_.push_back(std::make_unique<Accelerator>(
        id, kernel_, memory_.node(id), cfg.accel,
        [this, id](TraversalPacket&& p) { send({false, id}, p); }, tracer_));
  }
}

void Rack::attach_cpu(std::uint16_t cpu, CpuHandler handler) { cpus_[cpu] = std::move(handler); }

void Rack::send_from_cpu(std::uint16_t cpu, const TraversalPacket& p) { send({true, cpu}, p); }

void Rack::trace(int node, std::string_view ev, std::uint64_t id, std::uint64_t iter) {
  if (tracer_ && tracer_->enabled()) tracer_->event(kernel_.now(), node, -1, "net", ev, id, iter);
}

bool Rack::dropped() {
  const double p = cfg_.link.drop_prob;
  if (p <= 0.0) return false;
  // 53-bit uniform in [0, 1)
  return static_cast<double>(rng_() >> 11) * 0x1.0p-53 < p;
}

void Rack::send(Source from, const TraversalPacket& p) {
  Bytes wire = serialize(p);
  ++stats_.sent;
  stats_.bytes += wire.size();
  if (from.from_cpu) ++stats_.cpu_sends;
  const int where = from.from_cpu ? kTraceCpu : static_cast<int>(from.id);
  trace(where, "send", p.request_id, p.iter_used);
  if (dropped()) {
    ++stats_.dropped;
    trace(where, "drop", p.request_id, p.iter_used);
    return;
  }
  const SimTime first = cfg_.link.stack + (from.from_cpu ? cfg_.link.cpu_switch : cfg_.link.switch_node);
  auto shared = std::make_shared<Bytes>(std::move(wire));
  kernel_.schedule_after(first, [this, from, shared] { at_switch(from, std::move(*shared)); });
}

void Rack::at_switch(Source from, Bytes wire) {
  TraversalPacket p = deserialize(wire);
  auto shared = std::make_shared<Bytes>();

  if (p.msg_type == MsgType::Request && !from.from_cpu && chase_acc_) {
    ++stats_.acc_detours;
    trace(kTraceSwitch, "to-cpu", p.request_id, p.iter_used);
    *shared = std::move(wire);
    kernel_.schedule_after(cfg_.link.cpu_switch, [this, shared] { deliver_to_cpu(std::move(*shared)); });
    return;
  }

  const Switch::Destination d = switch_.route(p);
  switch (d.kind) {
    case Switch::Destination::Kind::Node: {
      if (!from.from_cpu) ++stats_.xnode_hops;
      trace(kTraceSwitch, "to-node", p.request_id, p.iter_used);
      *shared = std::move(wire);
      const NodeId node = d.node;
      kernel_.schedule_after(cfg_.link.switch_node, [this, node, shared] {
        ++stats_.delivered;
        TraversalPacket in = deserialize(*shared);
        trace(node, "deliver", in.request_id, in.iter_used);
        accels_[node]->receive(std::move(in));
      });
      return;
    }
    case Switch::Destination::Kind::Invalid:
      ++stats_.invalid_routes;
      p.msg_type = MsgType::InvalidAddr;
      trace(kTraceSwitch, "invalid", p.request_id, p.iter_used);
      *shared = serialize(p);
      break;
    case Switch::Destination::Kind::Cpu:
      trace(kTraceSwitch, "to-cpu", p.request_id, p.iter_used);
      *shared = std::move(wire);
      break;
  }
  kernel_.schedule_after(cfg_.link.cpu_switch, [this, shared] { deliver_to_cpu(std::move(*shared)); });
}

void Rack::deliver_to_cpu(Bytes wire) {
  TraversalPacket p = deserialize(wire);
  ++stats_.delivered;
  ++stats_.cpu_receives;
  trace(kTraceCpu, "deliver", p.request_id, p.iter_used);
  auto it = cpus_.find(request_cpu(p.request_id));
  if (it == cpus_.end()) return;
  it->second(std::move(p));
}

}  // namespace pchase
