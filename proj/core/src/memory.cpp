#include "pchase/memory.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"

#include "pchase/detail/endian.hpp"

namespace pchase {

MemoryNodeStore::MemoryNodeStore(NodeId id, std::uint64_t capacity) : id_(id), capacity_(capacity) {}

void MemoryNodeStore::map(const TranslationEntry& e) {
  if (e.length == 0) throw MemoryError(MemoryError::Kind::BadEntry, "translation entry with zero length");
  if (e.pbase > capacity_ || e.length > capacity_ - e.pbase)
    throw MemoryError(MemoryError::Kind::BadEntry, "translation entry maps beyond node capacity");
  if (e.vbase + e.length < e.vbase)
    throw MemoryError(MemoryError::Kind::BadEntry, "translation entry wraps the address space");

  auto next = table_.lower_bound(e.vbase);
  if (next != table_.end() && next->first < e.vbase + e.length)
    throw MemoryError(MemoryError::Kind::Overlap, "translation entry overlaps an existing range");
  if (next != table_.begin()) {
    const auto& prev = std::prev(next)->second;
    if (prev.vbase + prev.length > e.vbase)
      throw MemoryError(MemoryError::Kind::Overlap, "translation entry overlaps an existing range");
  }
  table_.emplace(e.vbase, e);
}

Translation MemoryNodeStore::translate(VirtualAddress addr, std::uint64_t len, Access access) const {
  auto it = table_.upper_bound(addr);
  if (it == table_.begin()) return Translation::make_miss();
  const TranslationEntry& e = std::prev(it)->second;
  const std::uint64_t rel = addr - e.vbase;
  if (rel >= e.length) return Translation::make_miss();
  if (len > e.length - rel) return Translation::make_fault(Translation::FaultReason::Straddle);
  if ((e.perms & static_cast<std::uint8_t>(access)) == 0)
    return Translation::make_fault(Translation::FaultReason::Permission);
  return Translation::make_hit(e.pbase + rel);
}

void MemoryNodeStore::check_bounds(std::uint64_t offset, std::uint64_t len) const {
  if (offset > capacity_ || len > capacity_ - offset)
    throw MemoryError(MemoryError::Kind::OutOfBounds,
                      "node " + std::to_string(id_) + ": access [" + std::to_string(offset) + ", +" +
                          std::to_string(len) + ") beyond capacity");
}

void MemoryNodeStore::read_into(std::uint64_t offset, std::span<std::uint8_t> out) const {
  check_bounds(offset, out.size());
  std::fill(out.begin(), out.end(), 0);
  if (offset >= contents_.size()) return;
  const std::size_t avail = std::min<std::uint64_t>(out.size(), contents_.size() - offset);
  std::copy_n(contents_.begin() + static_cast<std::ptrdiff_t>(offset), avail, out.begin());
}

Bytes MemoryNodeStore::read(std::uint64_t offset, std::uint64_t len) const {
  check_bounds(offset, len);
  Bytes out(len);
  read_into(offset, out);
  return out;
}

void MemoryNodeStore::write(std::uint64_t offset, std::span<const std::uint8_t> bytes) {
  check_bounds(offset, bytes.size());
  if (bytes.empty()) return;
  if (offset + bytes.size() > contents_.size()) {
    // grow geometrically so bulk builds stay linear
    std::size_t want = std::max<std::size_t>(offset + bytes.size(), contents_.size() * 2);
    want = std::min<std::uint64_t>(want, capacity_);
    contents_.resize(std::max<std::size_t>(want, offset + bytes.size()));
  }
  std::copy(bytes.begin(), bytes.end(), contents_.begin() + static_cast<std::ptrdiff_t>(offset));
}

void MemoryNodeStore::dump(const std::filesystem::path& stem) const {
  auto bin = stem;
  bin += ".bin";
  auto side = stem;
  side += ".json";
  {
    std::ofstream os(bin, std::ios::binary);
    os.write(reinterpret_cast<const char*>(contents_.data()),
             static_cast<std::streamsize>(contents_.size()));
  }
  nlohmann::ordered_json j;
  j["node"] = id_;
  j["capacity"] = capacity_;
  j["image_bytes"] = contents_.size();
  auto& entries = j["entries"] = nlohmann::ordered_json::array();
  for (const auto& [vbase, e] : table_) {
    std::string perms;
    if (e.perms & kPermRead) perms += 'R';
    if (e.perms & kPermWrite) perms += 'W';
    entries.push_back({{"vbase", e.vbase}, {"length", e.length}, {"pbase", e.pbase}, {"perms", perms}});
  }
  std::ofstream(side) << j.dump(2) << '\n';
}

Allocator::Allocator(std::vector<MemoryNodeStore*> nodes, AllocationPolicy policy)
    : nodes_(std::move(nodes)), policy_(policy), cursor_(nodes_.size(), 0) {
  if (nodes_.empty()) throw std::invalid_argument("allocator needs at least one node");
}

VirtualAddress Allocator::allocate(std::uint64_t size, std::optional<std::uint32_t> hint) {
  if (size == 0) throw std::invalid_argument("allocation size must be positive");
  const std::uint64_t rounded = (size + 7) & ~std::uint64_t{7};

  auto fits = [&](std::size_t n) {
    const std::uint64_t cap = std::min(nodes_[n]->capacity(), kPartitionSize);
    return rounded <= cap && cursor_[n] <= cap - rounded;
  };

  std::size_t node = 0;
  if (policy_ == AllocationPolicy::Partitioned && hint) {
    node = *hint % nodes_.size();
    if (!fits(node))
      throw MemoryError(MemoryError::Kind::OutOfCapacity,
                        "node " + std::to_string(node) + " out of capacity for " +
                            std::to_string(size) + " bytes");
  } else {
    std::size_t tried = 0;
    node = next_;
    while (!fits(node)) {
      if (++tried == nodes_.size())
        throw MemoryError(MemoryError::Kind::OutOfCapacity,
                          "no node has capacity for " + std::to_string(size) + " bytes");
      node = (node + 1) % nodes_.size();
    }
    next_ = (node + 1) % nodes_.size();
  }

  const std::uint64_t pbase = cursor_[node];
  const VirtualAddress vbase = partition_base(static_cast<NodeId>(node)) + pbase;
  nodes_[node]->map({vbase, size, pbase, kPermRW});
  cursor_[node] += rounded;
  return vbase;
}

namespace {
std::vector<std::unique_ptr<MemoryNodeStore>> make_nodes(std::size_t n, std::uint64_t cap) {
  std::vector<std::unique_ptr<MemoryNodeStore>> v;
  for (std::size_t i = 0; i < n; ++i) v.push_back(std::make_unique<MemoryNodeStore>(static_cast<NodeId>(i), cap));
  return v;
}
std::vector<MemoryNodeStore*> raw(const std::vector<std::unique_ptr<MemoryNodeStore>>& v) {
  std::vector<MemoryNodeStore*> out;
  for (const auto& p : v) out.push_back(p.get());
  return out;
}
}  // namespace

MemoryPool::MemoryPool(std::size_t nodes, std::uint64_t capacity_per_node, AllocationPolicy policy)
    : nodes_(make_nodes(nodes, capacity_per_node)), allocator_(raw(nodes_), policy) {}

std::optional<NodeId> MemoryPool::owner(VirtualAddress addr) const {
  auto n = partition_owner(addr);
  if (!n || *n >= nodes_.size()) return std::nullopt;
  return n;
}

Translation MemoryPool::translate(VirtualAddress addr, std::uint64_t len, Access access) const {
  auto n = owner(addr);
  if (!n) return Translation::make_miss();
  return nodes_[*n]->translate(addr, len, access);
}

void MemoryPool::write(VirtualAddress addr, std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) return;
  auto t = translate(addr, bytes.size(), Access::Write);
  if (!t.hit()) throw MemoryError(MemoryError::Kind::Unmapped, "write to unmapped address");
  nodes_[*owner(addr)]->write(t.offset, bytes);
}

void MemoryPool::write_u64(VirtualAddress addr, std::uint64_t v) {
  std::uint8_t b[8];
  detail::store_word(b, v, 8);
  write(addr, b);
}

Bytes MemoryPool::read(VirtualAddress addr, std::uint64_t len) const {
  if (len == 0) return {};
  auto t = translate(addr, len, Access::Read);
  if (!t.hit()) throw MemoryError(MemoryError::Kind::Unmapped, "read from unmapped address");
  return nodes_[*owner(addr)]->read(t.offset, len);
}

std::uint64_t MemoryPool::read_u64(VirtualAddress addr) const {
  auto b = read(addr, 8);
  return detail::load_word(b.data(), 8);
}

}  // namespace pchase
