#include "pchase/datastructs.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <stdexcept>

#include "pchase/detail/endian.hpp"

namespace pchase {

std::string_view structure_name(StructureKind k) {
  switch (k) {
    case StructureKind::List: return "list";
    case StructureKind::HashMap: return "hash";
    case StructureKind::BTree: return "btree";
    case StructureKind::RbMap: return "map";
    case StructureKind::Avl: return "avl";
  }
  return "?";
}

std::string_view aggregate_name(Aggregate a) {
  switch (a) {
    case Aggregate::Sum: return "sum";
    case Aggregate::Min: return "min";
    case Aggregate::Max: return "max";
    case Aggregate::Count: return "count";
  }
  return "?";
}

bool NodeLayout::well_formed() const {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> spans;
  for (const auto& [name, f] : fields) {
    if (f.width == 0 || f.offset + f.width > size) return false;
    spans.emplace_back(f.offset, f.offset + f.width);
  }
  std::sort(spans.begin(), spans.end());
  for (std::size_t i = 1; i < spans.size(); ++i)
    if (spans[i].first < spans[i - 1].second) return false;
  return true;
}

NodeLayout list_layout() { return {{{"value", {0, 8}}, {"next", {8, 8}}}, 16}; }

NodeLayout hash_layout(std::uint16_t value_bytes) {
  if (value_bytes < 8) throw std::invalid_argument("hash value must be at least 8 bytes");
  const std::uint16_t next = static_cast<std::uint16_t>(8 + value_bytes);
  return {{{"key", {0, 8}}, {"value", {8, value_bytes}}, {"next", {next, 8}}},
          static_cast<std::uint32_t>(next + 8)};
}

NodeLayout btree_layout() {
  // leaves reuse the child slots: values[0..8) at 72, next-leaf link in child[8]
  return {{{"is_leaf", {0, 1}},
           {"num_keys", {1, 1}},
           {"keys", {8, 8 * kNodeValues}},
           {"children", {72, 8 * (kNodeValues + 1)}}},
          144};
}

NodeLayout rb_layout() {
  return {{{"key", {0, 8}}, {"value", {8, 8}}, {"left", {16, 8}}, {"right", {24, 8}}, {"color", {32, 1}}}, 40};
}

NodeLayout avl_layout() {
  return {{{"balance", {0, 1}}, {"key", {8, 8}}, {"value", {16, 8}}, {"left", {24, 8}}, {"right", {32, 8}}}, 40};
}

std::uint64_t hash_key(std::uint64_t key, std::uint64_t buckets) {
  return (key * 0x9E3779B97F4A7C15ULL) % buckets;
}

namespace {

constexpr std::uint16_t kLeafNext = 72 + 8 * kNodeValues;  // child[8]

std::uint64_t filler(std::uint64_t key, std::uint64_t i) {
  std::uint64_t z = key + 0x9E3779B97F4A7C15ULL * (i + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void put(Bytes& node, std::uint16_t off, std::uint64_t v, std::size_t w = 8) {
  detail::store_word(node.data() + off, v, w);
}

std::uint32_t partitions_for(const MemoryPool& mem, const BuildOptions& o) {
  return o.partitions ? o.partitions : static_cast<std::uint32_t>(mem.node_count());
}

// partition of item `i` out of `n` when items are split into contiguous ranges
std::uint32_t range_partition(std::size_t i, std::size_t n, std::uint32_t parts) {
  if (n == 0) return 0;
  return static_cast<std::uint32_t>(static_cast<std::uint64_t>(i) * parts / n);
}

void check_unique(std::vector<KeyValue>& sorted) {
  std::sort(sorted.begin(), sorted.end(), [](const KeyValue& a, const KeyValue& b) { return a.key < b.key; });
  for (std::size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i].key == sorted[i - 1].key)
      throw std::invalid_argument("duplicate key " + std::to_string(sorted[i].key));
}

StructureHandle build_list(const std::vector<KeyValue>& entries, MemoryPool& mem, const BuildOptions& o) {
  StructureHandle h;
  h.kind = StructureKind::List;
  h.layout = list_layout();
  h.entries = entries;
  h.count = entries.size();
  const std::uint32_t parts = partitions_for(mem, o);
  for (std::size_t i = 0; i < entries.size(); ++i)
    h.list_nodes.push_back(mem.allocate(h.layout.size, range_partition(i, entries.size(), parts)));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Bytes node(h.layout.size, 0);
    put(node, h.layout.off("value"), entries[i].key);
    put(node, h.layout.off("next"), i + 1 < entries.size() ? h.list_nodes[i + 1] : kNullAddress);
    mem.write(h.list_nodes[i], node);
  }
  h.root = h.list_nodes.empty() ? kNullAddress : h.list_nodes.front();
  h.height = static_cast<std::uint32_t>(entries.size());
  return h;
}

StructureHandle build_hash(const std::vector<KeyValue>& entries, MemoryPool& mem, const BuildOptions& o) {
  StructureHandle h;
  h.kind = StructureKind::HashMap;
  h.layout = hash_layout(o.hash_value_bytes);
  auto sorted = entries;
  check_unique(sorted);
  h.entries = entries;
  h.count = entries.size();

  const std::uint64_t buckets =
      o.buckets ? o.buckets : std::max<std::uint64_t>(1, entries.size() / std::max<std::uint32_t>(1, o.load_factor));
  const std::uint32_t parts = partitions_for(mem, o);
  h.bucket_heads.assign(buckets, kNullAddress);

  std::vector<std::vector<const KeyValue*>> chains(buckets);
  for (const auto& e : entries) chains[hash_key(e.key, buckets)].push_back(&e);

  const std::uint16_t key_off = h.layout.off("key");
  const Field val = h.layout.at("value");
  const std::uint16_t next_off = h.layout.off("next");
  for (std::uint64_t b = 0; b < buckets; ++b) {
    const auto& chain = chains[b];
    std::vector<VirtualAddress> addrs;
    for (std::size_t i = 0; i < chain.size(); ++i)
      addrs.push_back(mem.allocate(h.layout.size, static_cast<std::uint32_t>(b % parts)));
    for (std::size_t i = 0; i < chain.size(); ++i) {
      Bytes node(h.layout.size, 0);
      put(node, key_off, chain[i]->key);
      put(node, val.offset, chain[i]->value);
      for (std::uint16_t w = 8; w < val.width; w += 8)
        put(node, static_cast<std::uint16_t>(val.offset + w), filler(chain[i]->key, w),
            std::min<std::size_t>(8, val.width - w));
      put(node, next_off, i + 1 < chain.size() ? addrs[i + 1] : kNullAddress);
      mem.write(addrs[i], node);
    }
    if (!addrs.empty()) h.bucket_heads[b] = addrs.front();
    h.height = std::max<std::uint32_t>(h.height, static_cast<std::uint32_t>(chain.size()));
  }

  h.bucket_array = mem.allocate(8 * buckets, 0);
  Bytes arr(8 * buckets, 0);
  for (std::uint64_t b = 0; b < buckets; ++b) detail::store_word(arr.data() + 8 * b, h.bucket_heads[b], 8);
  mem.write(h.bucket_array, arr);
  return h;
}

StructureHandle build_btree(const std::vector<KeyValue>& entries, MemoryPool& mem, const BuildOptions& o) {
  StructureHandle h;
  h.kind = StructureKind::BTree;
  h.layout = btree_layout();
  auto sorted = entries;
  check_unique(sorted);
  h.entries = sorted;
  h.count = sorted.size();
  if (sorted.empty()) return h;

  const std::size_t n_leaves = (sorted.size() + kNodeValues - 1) / kNodeValues;
  const std::uint32_t parts = partitions_for(mem, o);
  auto leaf_hint = [&](std::size_t leaf) -> std::uint32_t {
    if (o.leaves_per_partition) return static_cast<std::uint32_t>(leaf / o.leaves_per_partition);
    return range_partition(leaf, n_leaves, parts);
  };

  struct Child {
    VirtualAddress addr;
    std::uint64_t max_key;
    std::size_t first_leaf;
  };
  std::vector<Child> level;
  for (std::size_t l = 0; l < n_leaves; ++l) level.push_back({mem.allocate(h.layout.size, leaf_hint(l)), 0, l});
  for (std::size_t l = 0; l < n_leaves; ++l) {
    Bytes node(h.layout.size, 0);
    const std::size_t begin = l * kNodeValues;
    const std::size_t end = std::min(sorted.size(), begin + kNodeValues);
    put(node, 0, 1, 1);
    put(node, 1, end - begin, 1);
    for (std::size_t i = begin; i < end; ++i) {
      put(node, static_cast<std::uint16_t>(8 + 8 * (i - begin)), sorted[i].key);
      put(node, static_cast<std::uint16_t>(72 + 8 * (i - begin)), sorted[i].value);
    }
    put(node, kLeafNext, l + 1 < n_leaves ? level[l + 1].addr : kNullAddress);
    mem.write(level[l].addr, node);
    level[l].max_key = sorted[end - 1].key;
    h.leaves.push_back(level[l].addr);
  }

  h.height = 1;
  while (level.size() > 1) {
    std::vector<Child> up;
    const std::size_t fan = kNodeValues + 1;
    const std::size_t groups = (level.size() + fan - 1) / fan;
    for (std::size_t g = 0; g < groups; ++g) {
      // spread children evenly so no interior node is left with a single child
      const std::size_t begin = g * level.size() / groups;
      const std::size_t end = (g + 1) * level.size() / groups;
      Bytes node(h.layout.size, 0);
      put(node, 0, 0, 1);
      put(node, 1, end - begin - 1, 1);
      for (std::size_t i = begin; i < end; ++i) {
        if (i + 1 < end) put(node, static_cast<std::uint16_t>(8 + 8 * (i - begin)), level[i].max_key);
        put(node, static_cast<std::uint16_t>(72 + 8 * (i - begin)), level[i].addr);
      }
      const VirtualAddress addr = mem.allocate(h.layout.size, leaf_hint(level[begin].first_leaf));
      mem.write(addr, node);
      up.push_back({addr, level[end - 1].max_key, level[begin].first_leaf});
    }
    level = std::move(up);
    ++h.height;
  }
  h.root = level.front().addr;
  return h;
}

StructureHandle build_bst(StructureKind kind, const std::vector<KeyValue>& entries, MemoryPool& mem,
                          const BuildOptions& o) {
  StructureHandle h;
  h.kind = kind;
  h.layout = kind == StructureKind::Avl ? avl_layout() : rb_layout();
  auto sorted = entries;
  check_unique(sorted);
  h.entries = sorted;
  h.count = sorted.size();
  const std::uint32_t parts = partitions_for(mem, o);

  std::vector<VirtualAddress> addr(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    addr[i] = mem.allocate(h.layout.size, range_partition(i, sorted.size(), parts));
    h.node_of_key[sorted[i].key] = addr[i];
  }

  const NodeLayout& L = h.layout;
  // median split; returns (root, height) of [lo, hi)
  std::function<std::pair<VirtualAddress, int>(std::size_t, std::size_t, int)> make =
      [&](std::size_t lo, std::size_t hi, int depth) -> std::pair<VirtualAddress, int> {
    if (lo >= hi) return {kNullAddress, 0};
    const std::size_t mid = lo + (hi - lo) / 2;
    auto [left, lh] = make(lo, mid, depth + 1);
    auto [right, rh] = make(mid + 1, hi, depth + 1);
    Bytes node(L.size, 0);
    put(node, L.off("key"), sorted[mid].key);
    put(node, L.off("value"), sorted[mid].value);
    put(node, L.off("left"), left);
    put(node, L.off("right"), right);
    if (kind == StructureKind::Avl)
      put(node, L.off("balance"), static_cast<std::uint64_t>(static_cast<std::int8_t>(rh - lh)), 1);
    else
      put(node, L.off("color"), depth % 2, 1);
    mem.write(addr[mid], node);
    return {addr[mid], 1 + std::max(lh, rh)};
  };
  auto [root, height] = make(0, sorted.size(), 0);
  h.root = root;
  h.height = static_cast<std::uint32_t>(height);
  return h;
}

// Label-resolving program emitter for the generators.
class Emitter {
 public:
  void emit(const Instruction& in) { prog_.code.push_back(in); }
  void jump(Opcode cond, const std::string& label) {
    fixups_.emplace_back(prog_.code.size(), label);
    prog_.code.push_back(ins::jump(cond, 0));
  }
  void label(const std::string& name) { labels_[name] = prog_.code.size(); }
  Program finish() {
    for (const auto& [at, name] : fixups_) prog_.code[at].imm = labels_.at(name);
    return std::move(prog_);
  }

 private:
  Program prog_;
  std::map<std::string, std::size_t> labels_;
  std::vector<std::pair<std::size_t, std::string>> fixups_;
};

Operand data(std::uint16_t off) { return Operand::data(off); }
Operand sp(std::uint16_t off) { return Operand::sp(off); }
Operand imm(std::uint64_t v) { return Operand::imm(v); }

// sp0 = search value, sp8 = result; `found` is what to store on a match.
Program chain_find(std::uint16_t key_off, std::uint16_t next_off, Operand found) {
  Emitter e;
  e.emit(ins::compare(sp(0), data(key_off)));
  e.jump(Opcode::JumpEq, "found");
  e.emit(ins::compare(imm(0), data(next_off)));
  e.jump(Opcode::JumpEq, "missing");
  e.emit(ins::move(Operand::cur_ptr(), data(next_off)));
  e.emit(ins::next_iter());
  e.label("missing");
  e.emit(ins::move(sp(8), imm(kKeyNotFound)));
  e.emit(ins::ret());
  e.label("found");
  e.emit(ins::move(sp(8), found));
  e.emit(ins::ret());
  return e.finish();
}

std::uint16_t key_slot(std::size_t i) { return static_cast<std::uint16_t>(8 + 8 * i); }
std::uint16_t child_slot(std::size_t i) { return static_cast<std::uint16_t>(72 + 8 * i); }

// Interior descent: first i with i == num_keys or key <= keys[i].
void descend_chain(Emitter& e, Operand key, Operand num_keys, const std::string& prefix) {
  for (std::size_t i = 0; i < kNodeValues; ++i) {
    const std::string sel = prefix + std::to_string(i);
    e.emit(ins::compare(num_keys, imm(i)));
    e.jump(Opcode::JumpLe, sel);
    e.emit(ins::compare(key, data(key_slot(i))));
    e.jump(Opcode::JumpLe, sel);
  }
}

// sp0 key, sp8 result, sp16 is_leaf, sp24 num_keys
Program btree_find() {
  Emitter e;
  e.emit(ins::move(sp(16), data(0), 1));
  e.emit(ins::move(sp(24), data(1), 1));
  descend_chain(e, sp(0), sp(24), "sel");
  e.emit(ins::compare(sp(16), imm(0)));
  e.jump(Opcode::JumpNeq, "notfound");
  e.emit(ins::move(Operand::cur_ptr(), data(child_slot(kNodeValues))));
  e.emit(ins::next_iter());
  for (std::size_t i = 0; i < kNodeValues; ++i) {
    const std::string leaf = "leaf" + std::to_string(i);
    e.label("sel" + std::to_string(i));
    e.emit(ins::compare(sp(16), imm(0)));
    e.jump(Opcode::JumpNeq, leaf);
    e.emit(ins::move(Operand::cur_ptr(), data(child_slot(i))));
    e.emit(ins::next_iter());
    e.label(leaf);
    e.emit(ins::compare(sp(24), imm(i)));
    e.jump(Opcode::JumpLe, "notfound");
    e.emit(ins::compare(sp(0), data(key_slot(i))));
    e.jump(Opcode::JumpNeq, "notfound");
    e.emit(ins::move(sp(8), data(child_slot(i))));
    e.emit(ins::ret());
  }
  e.label("notfound");
  e.emit(ins::move(sp(8), imm(kKeyNotFound)));
  e.emit(ins::ret());
  return e.finish();
}

// sp0 lo, sp8 hi, sp16 aggregate, sp24 count, sp32 is_leaf, sp40 num_keys
Program btree_scan(Aggregate agg) {
  Emitter e;
  e.emit(ins::move(sp(32), data(0), 1));
  e.emit(ins::move(sp(40), data(1), 1));
  e.emit(ins::compare(sp(32), imm(0)));
  e.jump(Opcode::JumpNeq, "leaf");
  descend_chain(e, sp(0), sp(40), "sel");
  e.emit(ins::move(Operand::cur_ptr(), data(child_slot(kNodeValues))));
  e.emit(ins::next_iter());
  for (std::size_t i = 0; i < kNodeValues; ++i) {
    e.label("sel" + std::to_string(i));
    e.emit(ins::move(Operand::cur_ptr(), data(child_slot(i))));
    e.emit(ins::next_iter());
  }
  e.label("leaf");
  for (std::size_t j = 0; j < kNodeValues; ++j) {
    const std::string skip = "skip" + std::to_string(j);
    e.emit(ins::compare(sp(40), imm(j)));
    e.jump(Opcode::JumpLe, "leaf_end");
    e.emit(ins::compare(data(key_slot(j)), sp(0)));
    e.jump(Opcode::JumpLt, skip);
    e.emit(ins::compare(data(key_slot(j)), sp(8)));
    e.jump(Opcode::JumpGt, "done");
    e.emit(ins::alu(Opcode::Add, sp(24), imm(1)));
    switch (agg) {
      case Aggregate::Sum:
        e.emit(ins::alu(Opcode::Add, sp(16), data(child_slot(j))));
        break;
      case Aggregate::Min:
        e.emit(ins::compare(data(child_slot(j)), sp(16)));
        e.jump(Opcode::JumpGe, skip);
        e.emit(ins::move(sp(16), data(child_slot(j))));
        break;
      case Aggregate::Max:
        e.emit(ins::compare(data(child_slot(j)), sp(16)));
        e.jump(Opcode::JumpLe, skip);
        e.emit(ins::move(sp(16), data(child_slot(j))));
        break;
      case Aggregate::Count:
        break;
    }
    e.label(skip);
  }
  e.label("leaf_end");
  e.emit(ins::compare(imm(0), data(kLeafNext)));
  e.jump(Opcode::JumpEq, "done");
  e.emit(ins::move(Operand::cur_ptr(), data(kLeafNext)));
  e.emit(ins::next_iter());
  e.label("done");
  e.emit(ins::ret());
  return e.finish();
}

// Records the node in sp8/16/24 whenever its key >= the search key, then
// descends left; otherwise descends right.
void take_and_go_left(Emitter& e, const NodeLayout& L) {
  e.emit(ins::move(sp(8), Operand::cur_ptr()));
  e.emit(ins::move(sp(16), data(L.off("key"))));
  e.emit(ins::move(sp(24), data(L.off("value"))));
  e.emit(ins::compare(imm(0), data(L.off("left"))));
  e.jump(Opcode::JumpEq, "done");
  e.emit(ins::move(Operand::cur_ptr(), data(L.off("left"))));
  e.emit(ins::next_iter());
}

void go_right(Emitter& e, const NodeLayout& L) {
  e.emit(ins::compare(imm(0), data(L.off("right"))));
  e.jump(Opcode::JumpEq, "done");
  e.emit(ins::move(Operand::cur_ptr(), data(L.off("right"))));
  e.emit(ins::next_iter());
}

Program map_lower_bound(const NodeLayout& L) {
  Emitter e;
  e.emit(ins::compare(data(L.off("key")), sp(0)));
  e.jump(Opcode::JumpLt, "right");
  take_and_go_left(e, L);
  e.label("right");
  go_right(e, L);
  e.label("done");
  e.emit(ins::ret());
  return e.finish();
}

Program avl_lower_bound(const NodeLayout& L) {
  Emitter e;
  e.emit(ins::compare(data(L.off("key")), sp(0)));
  e.jump(Opcode::JumpGe, "take");
  go_right(e, L);
  e.label("take");
  take_and_go_left(e, L);
  e.label("done");
  e.emit(ins::ret());
  return e.finish();
}

Bytes scratch_of(std::size_t n) { return Bytes(n, 0); }

std::uint64_t agg_seed(Aggregate a) { return a == Aggregate::Min ? std::numeric_limits<std::uint64_t>::max() : 0; }

}  // namespace

StructureHandle build(StructureKind kind, const std::vector<KeyValue>& entries, MemoryPool& mem,
                      const BuildOptions& opts) {
  switch (kind) {
    case StructureKind::List: return build_list(entries, mem, opts);
    case StructureKind::HashMap: return build_hash(entries, mem, opts);
    case StructureKind::BTree: return build_btree(entries, mem, opts);
    case StructureKind::RbMap:
    case StructureKind::Avl: return build_bst(kind, entries, mem, opts);
  }
  throw std::invalid_argument("unknown structure kind");
}

std::size_t result_bytes(Operation op) { return op == Operation::Find ? 16 : 32; }

Program traversal_program(StructureKind kind, const NodeLayout& L, const OpParams& p) {
  switch (p.op) {
    case Operation::Find:
      if (kind == StructureKind::List) return chain_find(L.off("value"), L.off("next"), Operand::cur_ptr());
      if (kind == StructureKind::HashMap) return chain_find(L.off("key"), L.off("next"), data(L.off("value")));
      if (kind == StructureKind::BTree) return btree_find();
      break;
    case Operation::LowerBound:
      if (kind == StructureKind::RbMap) return map_lower_bound(L);
      if (kind == StructureKind::Avl) return avl_lower_bound(L);
      break;
    case Operation::ScanAgg:
      if (kind == StructureKind::BTree) return btree_scan(p.agg);
      break;
  }
  throw UnsupportedOperation("operation not supported on " + std::string(structure_name(kind)));
}

TraversalSpec gen_traversal(const StructureHandle& h, const OpParams& p) {
  TraversalSpec t;
  t.op = p.op;
  t.program = traversal_program(h.kind, h.layout, p);
  t.result_bytes = result_bytes(p.op);

  switch (p.op) {
    case Operation::Find:
      t.init_scratch = scratch_of(h.kind == StructureKind::BTree ? 32 : 16);
      detail::store_word(t.init_scratch.data(), p.key, 8);
      if (h.kind == StructureKind::HashMap)
        t.init_cur_ptr = h.bucket_heads.empty() ? kNullAddress : h.bucket_heads[hash_key(p.key, h.bucket_heads.size())];
      else
        t.init_cur_ptr = h.root;
      if (t.init_cur_ptr == kNullAddress) {
        t.trivially_done = true;
        detail::store_word(t.init_scratch.data() + 8, kKeyNotFound, 8);
      }
      break;
    case Operation::LowerBound:
      t.init_scratch = scratch_of(32);
      detail::store_word(t.init_scratch.data(), p.key, 8);
      t.init_cur_ptr = h.root;
      t.trivially_done = h.root == kNullAddress;
      break;
    case Operation::ScanAgg:
      t.init_scratch = scratch_of(48);
      detail::store_word(t.init_scratch.data(), p.lo, 8);
      detail::store_word(t.init_scratch.data() + 8, p.hi, 8);
      detail::store_word(t.init_scratch.data() + 16, agg_seed(p.agg), 8);
      t.init_cur_ptr = h.root;
      t.trivially_done = h.root == kNullAddress || p.lo > p.hi;
      break;
  }
  return t;
}

Oracle::Oracle(const StructureHandle& h) : kind_(h.kind) {
  switch (h.kind) {
    case StructureKind::List:
      for (std::size_t i = 0; i < h.entries.size(); ++i) list_.emplace_back(h.entries[i].key, h.list_nodes[i]);
      break;
    case StructureKind::HashMap:
      for (const auto& e : h.entries) hash_.emplace(e.key, e.value);
      break;
    default:
      for (const auto& e : h.entries) ordered_.emplace(e.key, e.value);
      nodes_ = h.node_of_key;
      break;
  }
}

Bytes Oracle::expect(const OpParams& p) const {
  Bytes out(result_bytes(p.op), 0);
  auto put8 = [&](std::size_t off, std::uint64_t v) { detail::store_word(out.data() + off, v, 8); };

  switch (p.op) {
    case Operation::Find: {
      put8(0, p.key);
      std::uint64_t r = kKeyNotFound;
      if (kind_ == StructureKind::List) {
        auto it = std::find_if(list_.begin(), list_.end(), [&](const auto& e) { return e.first == p.key; });
        if (it != list_.end()) r = it->second;
      } else if (kind_ == StructureKind::HashMap) {
        if (auto it = hash_.find(p.key); it != hash_.end()) r = it->second;
      } else {
        if (auto it = ordered_.find(p.key); it != ordered_.end()) r = it->second;
      }
      put8(8, r);
      break;
    }
    case Operation::LowerBound: {
      put8(0, p.key);
      auto it = ordered_.lower_bound(p.key);
      if (it != ordered_.end()) {
        put8(8, nodes_.at(it->first));
        put8(16, it->first);
        put8(24, it->second);
      }
      break;
    }
    case Operation::ScanAgg: {
      put8(0, p.lo);
      put8(8, p.hi);
      std::uint64_t acc = agg_seed(p.agg);
      std::uint64_t count = 0;
      if (p.lo <= p.hi) {
        for (auto it = ordered_.lower_bound(p.lo); it != ordered_.end() && it->first <= p.hi; ++it) {
          ++count;
          switch (p.agg) {
            case Aggregate::Sum: acc += it->second; break;
            case Aggregate::Min: acc = std::min(acc, it->second); break;
            case Aggregate::Max: acc = std::max(acc, it->second); break;
            case Aggregate::Count: break;
          }
        }
      }
      put8(16, acc);
      put8(24, count);
      break;
    }
  }
  return out;
}

}  // namespace pchase
