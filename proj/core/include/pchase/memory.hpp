#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pchase/isa.hpp"

namespace pchase {

using VirtualAddress = std::uint64_t;
using NodeId = std::uint16_t;

inline constexpr VirtualAddress kNullAddress = 0;

// Static range partitioning of the rack address space. Node i owns
// [(i+1) << 40, (i+2) << 40); the first terabyte is left unmapped so the null
// address never routes to a node.
inline constexpr unsigned kPartitionShift = 40;
inline constexpr std::uint64_t kPartitionSize = std::uint64_t{1} << kPartitionShift;

inline constexpr VirtualAddress partition_base(NodeId node) {
  return (static_cast<std::uint64_t>(node) + 1) << kPartitionShift;
}

inline constexpr std::optional<NodeId> partition_owner(VirtualAddress a) {
  const std::uint64_t p = a >> kPartitionShift;
  if (p == 0 || p > 0xFFFF + 1) return std::nullopt;
  return static_cast<NodeId>(p - 1);
}

enum Perm : std::uint8_t { kPermRead = 1, kPermWrite = 2, kPermRW = 3 };
enum class Access : std::uint8_t { Read = kPermRead, Write = kPermWrite };

struct TranslationEntry {
  VirtualAddress vbase = 0;
  std::uint64_t length = 0;
  std::uint64_t pbase = 0;
  std::uint8_t perms = kPermRW;

  bool operator==(const TranslationEntry&) const = default;
};

struct Translation {
  enum class Status { Hit, Miss, Fault };
  enum class FaultReason { None, Permission, Straddle };

  Status status = Status::Miss;
  std::uint64_t offset = 0;
  FaultReason reason = FaultReason::None;

  bool hit() const { return status == Status::Hit; }
  static Translation make_hit(std::uint64_t off) { return {Status::Hit, off, FaultReason::None}; }
  static Translation make_miss() { return {Status::Miss, 0, FaultReason::None}; }
  static Translation make_fault(FaultReason r) { return {Status::Fault, 0, r}; }
};

class MemoryError : public std::runtime_error {
 public:
  enum class Kind { OutOfBounds, OutOfCapacity, Overlap, BadEntry, Unmapped };
  MemoryError(Kind k, const std::string& msg) : std::runtime_error(msg), kind_(k) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// One memory node's physical store plus its local range translation table.
/// Backing bytes grow lazily; unwritten bytes below capacity read as zero.
class MemoryNodeStore {
 public:
  MemoryNodeStore(NodeId id, std::uint64_t capacity);

  NodeId node_id() const { return id_; }
  std::uint64_t capacity() const { return capacity_; }

  void map(const TranslationEntry& e);
  Translation translate(VirtualAddress addr, std::uint64_t len, Access access) const;
  const std::map<VirtualAddress, TranslationEntry>& table() const { return table_; }

  Bytes read(std::uint64_t offset, std::uint64_t len) const;
  void read_into(std::uint64_t offset, std::span<std::uint8_t> out) const;
  void write(std::uint64_t offset, std::span<const std::uint8_t> bytes);

  /// Writes `<stem>.bin` (touched bytes) and `<stem>.json` (translation table).
  void dump(const std::filesystem::path& stem) const;

 private:
  void check_bounds(std::uint64_t offset, std::uint64_t len) const;

  NodeId id_;
  std::uint64_t capacity_;
  Bytes contents_;
  std::map<VirtualAddress, TranslationEntry> table_;
};

enum class AllocationPolicy { Uniform, Partitioned };

/// Bump allocator over a set of nodes. Every allocation gets its own
/// READ|WRITE translation entry on exactly one node.
class Allocator {
 public:
  Allocator(std::vector<MemoryNodeStore*> nodes, AllocationPolicy policy);

  VirtualAddress allocate(std::uint64_t size, std::optional<std::uint32_t> hint = std::nullopt);

  AllocationPolicy policy() const { return policy_; }
  std::size_t node_count() const { return nodes_.size(); }
  std::uint64_t used(NodeId node) const { return cursor_.at(node); }

 private:
  std::vector<MemoryNodeStore*> nodes_;
  AllocationPolicy policy_;
  std::vector<std::uint64_t> cursor_;
  std::size_t next_ = 0;
};

/// The rack's memory nodes addressed through the global virtual space. Used by
/// host-side builders and the untimed reference interpreter.
class MemoryPool {
 public:
  MemoryPool(std::size_t nodes, std::uint64_t capacity_per_node, AllocationPolicy policy);

  MemoryPool(const MemoryPool&) = delete;
  MemoryPool& operator=(const MemoryPool&) = delete;

  std::size_t node_count() const { return nodes_.size(); }
  MemoryNodeStore& node(NodeId id) { return *nodes_.at(id); }
  const MemoryNodeStore& node(NodeId id) const { return *nodes_.at(id); }
  Allocator& allocator() { return allocator_; }

  VirtualAddress allocate(std::uint64_t size, std::optional<std::uint32_t> hint = std::nullopt) {
    return allocator_.allocate(size, hint);
  }

  /// Translation on the owning node. Addresses outside every node's partition
  /// report Miss.
  Translation translate(VirtualAddress addr, std::uint64_t len, Access access) const;
  std::optional<NodeId> owner(VirtualAddress addr) const;

  // Throw MemoryError(Unmapped) unless the range translates with the access.
  void write(VirtualAddress addr, std::span<const std::uint8_t> bytes);
  void write_u64(VirtualAddress addr, std::uint64_t v);
  Bytes read(VirtualAddress addr, std::uint64_t len) const;
  std::uint64_t read_u64(VirtualAddress addr) const;

 private:
  std::vector<std::unique_ptr<MemoryNodeStore>> nodes_;
  Allocator allocator_;
};

}  // namespace pchase
