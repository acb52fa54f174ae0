#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "pchase/isa.hpp"
#include "pchase/memory.hpp"

namespace pchase {

enum class StructureKind { List, HashMap, BTree, RbMap, Avl };
enum class Operation { Find, LowerBound, ScanAgg };
enum class Aggregate { Sum, Min, Max, Count };

std::string_view structure_name(StructureKind k);
std::string_view aggregate_name(Aggregate a);

struct Field {
  std::uint16_t offset = 0;
  std::uint16_t width = 8;
};

struct NodeLayout {
  std::map<std::string, Field> fields;
  std::uint32_t size = 0;

  const Field& at(const std::string& name) const { return fields.at(name); }
  std::uint16_t off(const std::string& name) const { return at(name).offset; }
  /// True if no two fields overlap and all lie within `size`.
  bool well_formed() const;
};

NodeLayout list_layout();
NodeLayout hash_layout(std::uint16_t value_bytes = 32);
NodeLayout btree_layout();
NodeLayout rb_layout();
NodeLayout avl_layout();

inline constexpr std::size_t kNodeValues = 8;  // B+tree fan-in

std::uint64_t hash_key(std::uint64_t key, std::uint64_t buckets);

struct KeyValue {
  std::uint64_t key = 0;
  std::uint64_t value = 0;
};

struct BuildOptions {
  std::uint32_t load_factor = 4;           // hash: entries per bucket
  std::uint32_t buckets = 0;               // hash: 0 derives from load_factor
  std::uint16_t hash_value_bytes = 32;
  std::uint32_t partitions = 0;            // 0: one per memory node
  std::uint32_t leaves_per_partition = 0;  // B+tree: 0 spreads leaves evenly
};

/// Where a structure lives in rack memory plus a host-side mirror of its
/// contents and node addresses, used by init() and by the oracles.
struct StructureHandle {
  StructureKind kind = StructureKind::List;
  NodeLayout layout;
  VirtualAddress root = kNullAddress;  // list head / tree root
  std::size_t count = 0;
  std::uint32_t height = 0;

  // hash map
  VirtualAddress bucket_array = kNullAddress;
  std::vector<VirtualAddress> bucket_heads;

  // B+tree leaf chain
  std::vector<VirtualAddress> leaves;

  // mirror
  std::vector<KeyValue> entries;  // list order for lists, key order otherwise
  std::vector<VirtualAddress> list_nodes;
  std::map<std::uint64_t, VirtualAddress> node_of_key;  // binary trees
};

StructureHandle build(StructureKind kind, const std::vector<KeyValue>& entries, MemoryPool& mem,
                      const BuildOptions& opts = {});

struct OpParams {
  Operation op = Operation::Find;
  std::uint64_t key = 0;
  std::uint64_t lo = 0;
  std::uint64_t hi = 0;
  Aggregate agg = Aggregate::Sum;

  static OpParams find(std::uint64_t k) { return {Operation::Find, k, 0, 0, Aggregate::Sum}; }
  static OpParams lower_bound(std::uint64_t k) { return {Operation::LowerBound, k, 0, 0, Aggregate::Sum}; }
  static OpParams scan(std::uint64_t lo, std::uint64_t hi, Aggregate a) {
    return {Operation::ScanAgg, 0, lo, hi, a};
  }
};

struct TraversalSpec {
  Operation op = Operation::Find;
  Program program;  // SOURCE form
  VirtualAddress init_cur_ptr = kNullAddress;
  Bytes init_scratch;
  std::size_t result_bytes = 16;  // scratch prefix holding the result
  bool trivially_done = false;    // nothing to traverse; init_scratch is the result
};

class UnsupportedOperation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// SOURCE program and host-side init state for one operation.
TraversalSpec gen_traversal(const StructureHandle& h, const OpParams& p);

/// Same program for every parameter value; gen_traversal only varies init state.
Program traversal_program(StructureKind kind, const NodeLayout& layout, const OpParams& p);

/// Ground truth computed with standard containers over the mirror, rendered in
/// the program's scratch convention (result_bytes long).
class Oracle {
 public:
  explicit Oracle(const StructureHandle& h);
  Bytes expect(const OpParams& p) const;

 private:
  StructureKind kind_;
  std::vector<std::pair<std::uint64_t, VirtualAddress>> list_;
  std::unordered_map<std::uint64_t, std::uint64_t> hash_;
  std::map<std::uint64_t, std::uint64_t> ordered_;
  std::map<std::uint64_t, VirtualAddress> nodes_;
};

/// Result prefix size for an operation.
std::size_t result_bytes(Operation op);

}  // namespace pchase
