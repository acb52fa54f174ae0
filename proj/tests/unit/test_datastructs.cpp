#include <random>
#include <set>

#include "doctest.h"

#include "pchase/assembler.hpp"
#include "pchase/datastructs.hpp"
#include "pchase/harness.hpp"

using namespace pchase;

namespace {

std::uint64_t word(const Bytes& b, std::size_t off) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < 8; ++i) v |= std::uint64_t{b[off + i]} << (8 * i);
  return v;
}

std::vector<KeyValue> random_entries(std::mt19937_64& rng, std::size_t n, std::uint64_t space) {
  std::set<std::uint64_t> keys;
  while (keys.size() < n) keys.insert(rng() % space);
  std::vector<KeyValue> out;
  for (auto k : keys) out.push_back({k, rng()});
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

// Leaves hold up to 8 keys; each interior level groups up to 9 children.
std::uint32_t btree_height(std::size_t n) {
  if (n == 0) return 0;
  std::size_t nodes = (n + 7) / 8;
  std::uint32_t h = 1;
  while (nodes > 1) {
    nodes = (nodes + 8) / 9;
    ++h;
  }
  return h;
}

bool reads_data(const Program& p, Opcode op, std::uint16_t off) {
  for (const auto& in : p.code)
    if (in.op == op && (in.a == Operand::data(off) || in.b == Operand::data(off))) return true;
  return false;
}

bool moves_cur_ptr_from(const Program& p, std::uint16_t off) {
  for (const auto& in : p.code)
    if (in.op == Opcode::Move && in.a == Operand::cur_ptr() && in.b == Operand::data(off)) return true;
  return false;
}

}  // namespace

TEST_SUITE("datastructs") {
  TEST_CASE("layouts") {
    const auto h = hash_layout();
    CHECK(h.size == 48);
    CHECK(h.off("key") == 0);
    CHECK(h.off("value") == 8);
    CHECK(h.at("value").width == 32);
    CHECK(h.off("next") == 40);
    CHECK(hash_layout(240).size == 256);
    for (const auto& l : {list_layout(), hash_layout(), hash_layout(240), btree_layout(), rb_layout(), avl_layout()}) {
      CHECK(l.well_formed());
      CHECK(l.size <= kMaxLoadWindow);
    }
    NodeLayout bad{{{"a", {0, 8}}, {"b", {4, 8}}}, 16};
    CHECK_FALSE(bad.well_formed());
  }

  TEST_CASE("hash chains") {
    MemoryPool mem(1, 1 << 22, AllocationPolicy::Uniform);
    std::vector<KeyValue> colliding;
    for (std::uint64_t k = 1; colliding.size() < 3; ++k)
      if (hash_key(k, 4) == 2) colliding.push_back({k, k * 10});
    BuildOptions o;
    o.buckets = 4;
    const auto h = build(StructureKind::HashMap, colliding, mem, o);
    REQUIRE(h.bucket_heads.size() == 4);
    std::size_t non_empty = 0;
    for (auto b : h.bucket_heads) non_empty += b != kNullAddress;
    CHECK(non_empty == 1);
    std::size_t len = 0;
    for (VirtualAddress p = h.bucket_heads[2]; p != kNullAddress; p = mem.read_u64(p + 40)) ++len;
    CHECK(len == 3);
    CHECK(h.height == 3);
    // the bucket array mirrors the heads
    for (std::size_t b = 0; b < 4; ++b) CHECK(mem.read_u64(h.bucket_array + 8 * b) == h.bucket_heads[b]);

    for (std::uint64_t k : {0ull, 1ull, 12345ull, ~0ull}) {
      CHECK(hash_key(k, 97) < 97);
      CHECK(hash_key(k, 97) == hash_key(k, 97));
    }
  }

  TEST_CASE("b+tree shape") {
    MemoryPool mem(1, 1 << 24, AllocationPolicy::Uniform);
    std::mt19937_64 rng(2);
    for (std::size_t n : {1, 8, 9, 72, 73, 648, 649, 1000}) {
      const auto h = build(StructureKind::BTree, random_entries(rng, n, 100000), mem);
      CAPTURE(n);
      CHECK(h.height == btree_height(n));
      // leaf chain yields every key in order
      std::vector<std::uint64_t> keys;
      for (VirtualAddress p = h.leaves.front(); p != kNullAddress; p = mem.read_u64(p + 136)) {
        CHECK(mem.read(p, 1)[0] == 1);
        const auto cnt = mem.read(p + 1, 1)[0];
        CHECK(cnt >= 1);
        CHECK(cnt <= 8);
        for (std::size_t i = 0; i < cnt; ++i) keys.push_back(mem.read_u64(p + 8 + 8 * i));
      }
      CHECK(keys.size() == n);
      CHECK(std::is_sorted(keys.begin(), keys.end()));
    }
    CHECK(btree_height(9) == 2);
  }

  TEST_CASE("binary trees are ordered and balanced") {
    MemoryPool mem(1, 1 << 24, AllocationPolicy::Uniform);
    std::mt19937_64 rng(6);
    for (auto kind : {StructureKind::RbMap, StructureKind::Avl}) {
      const auto h = build(kind, random_entries(rng, 500, 10000), mem);
      const auto& L = h.layout;
      std::vector<std::uint64_t> inorder;
      std::function<int(VirtualAddress)> walk = [&](VirtualAddress p) -> int {
        if (p == kNullAddress) return 0;
        const int lh = walk(mem.read_u64(p + L.off("left")));
        inorder.push_back(mem.read_u64(p + L.off("key")));
        const int rh = walk(mem.read_u64(p + L.off("right")));
        CHECK(std::abs(rh - lh) <= 1);
        if (kind == StructureKind::Avl) CHECK(static_cast<std::int8_t>(mem.read(p + L.off("balance"), 1)[0]) == rh - lh);
        return 1 + std::max(lh, rh);
      };
      const int height = walk(h.root);
      CHECK(inorder.size() == 500);
      CHECK(std::is_sorted(inorder.begin(), inorder.end()));
      CHECK(height == static_cast<int>(h.height));
      CHECK(h.height == 9);  // ceil(log2(501))
    }
  }

  TEST_CASE("empty structures") {
    MemoryPool mem(1, 1 << 20, AllocationPolicy::Uniform);
    for (auto kind : {StructureKind::List, StructureKind::HashMap, StructureKind::BTree}) {
      const auto h = build(kind, {}, mem);
      CHECK(h.root == kNullAddress);
      const auto spec = gen_traversal(h, OpParams::find(5));
      CHECK(spec.trivially_done);
      CHECK(word(spec.init_scratch, 8) == kKeyNotFound);
      Bytes got = spec.init_scratch;
      got.resize(spec.result_bytes);
      CHECK(got == Oracle(h).expect(OpParams::find(5)));
    }
    const auto t = build(StructureKind::Avl, {}, mem);
    CHECK(gen_traversal(t, OpParams::lower_bound(1)).trivially_done);
  }

  TEST_CASE("invalid inputs") {
    MemoryPool mem(1, 1 << 20, AllocationPolicy::Uniform);
    const std::vector<KeyValue> dup = {{1, 1}, {2, 2}, {1, 3}};
    for (auto kind : {StructureKind::HashMap, StructureKind::BTree, StructureKind::RbMap, StructureKind::Avl})
      CHECK_THROWS_AS(build(kind, dup, mem), std::invalid_argument);
    CHECK_THROWS_AS(traversal_program(StructureKind::List, list_layout(), OpParams::lower_bound(1)), UnsupportedOperation);
    CHECK_THROWS_AS(traversal_program(StructureKind::HashMap, hash_layout(), OpParams::scan(0, 1, Aggregate::Sum)),
                    UnsupportedOperation);
    CHECK_THROWS_AS(traversal_program(StructureKind::Avl, avl_layout(), OpParams::find(1)), UnsupportedOperation);
  }

  TEST_CASE("generated program shapes") {
    const auto bt = traversal_program(StructureKind::BTree, btree_layout(), OpParams::find(0));
    CHECK(validate(bt).ok());
    for (std::uint16_t i = 0; i < kNodeValues; ++i) CHECK(reads_data(bt, Opcode::Compare, 8 + 8 * i));
    for (std::uint16_t i = 0; i <= kNodeValues; ++i) CHECK(moves_cur_ptr_from(bt, 72 + 8 * i));

    const auto L = avl_layout();
    const auto avl = traversal_program(StructureKind::Avl, L, OpParams::lower_bound(0));
    CHECK(validate(avl).ok());
    REQUIRE(avl.size() >= 2);
    CHECK(avl.code[0] == ins::compare(Operand::data(L.off("key")), Operand::sp(0)));
    CHECK(avl.code[1].op == Opcode::JumpGe);
    CHECK(moves_cur_ptr_from(avl, L.off("left")));
    CHECK(moves_cur_ptr_from(avl, L.off("right")));
    // the branch taken on key >= search records the node before going left
    const auto take = static_cast<std::size_t>(avl.code[1].imm);
    CHECK(avl.code[take] == ins::move(Operand::sp(8), Operand::cur_ptr()));

    const auto rb = traversal_program(StructureKind::RbMap, rb_layout(), OpParams::lower_bound(0));
    CHECK(rb.code[1].op == Opcode::JumpLt);
    CHECK(rb != avl);

    // parameters only change init state
    CHECK(traversal_program(StructureKind::HashMap, hash_layout(), OpParams::find(1)) ==
          traversal_program(StructureKind::HashMap, hash_layout(), OpParams::find(99)));
  }

  TEST_CASE("cost ratios of the generated programs") {
    const SimConfig cfg;
    auto ratio = [&](StructureKind k, const NodeLayout& l, const OpParams& p) {
      return analyze(traversal_program(k, l, p), cfg.t_i_ns).eta_ratio(ns_to_ps(cfg.t_d_ns));
    };
    const double hash = ratio(StructureKind::HashMap, hash_layout(), OpParams::find(0));
    CHECK(hash >= 0.04);
    CHECK(hash <= 0.08);
    CHECK(ratio(StructureKind::BTree, btree_layout(), OpParams::find(0)) > hash);
    for (auto a : {Aggregate::Sum, Aggregate::Min, Aggregate::Max, Aggregate::Count}) {
      const double r = ratio(StructureKind::BTree, btree_layout(), OpParams::scan(0, 0, a));
      CHECK(r > hash);
      CHECK(r < 1.0);  // still offloadable at eta = 1
    }
  }

  TEST_CASE("edge results through the rack") {
    SimConfig cfg;
    SimKernel kernel;
    Rack rack(kernel, cfg.rack());
    OffloadEngine engine(rack, 0, cfg.offload());
    std::vector<KeyValue> entries;
    for (std::uint64_t k = 10; k <= 500; k += 10) entries.push_back({k, k + 1});

    auto run = [&](const StructureHandle& h, const OpParams& op) {
      const auto spec = gen_traversal(h, op);
      Bytes got = spec.init_scratch;
      if (!spec.trivially_done) {
        const auto ct = compile(spec.program, cfg.offload());
        REQUIRE(ct.decision.offload);
        const auto r = execute_offloaded(engine, ct.prepared, spec.init_cur_ptr, spec.init_scratch);
        REQUIRE(r.ok());
        got = r.scratch;
      }
      got.resize(spec.result_bytes);
      CHECK(got == Oracle(h).expect(op));
      return got;
    };

    for (auto kind : {StructureKind::RbMap, StructureKind::Avl}) {
      const auto h = build(kind, entries, rack.memory());
      auto r = run(h, OpParams::lower_bound(501));
      CHECK(word(r, 8) == kNullAddress);
      r = run(h, OpParams::lower_bound(35));
      CHECK(word(r, 16) == 40);
      CHECK(word(r, 24) == 41);
      CHECK(word(r, 8) == h.node_of_key.at(40));
      r = run(h, OpParams::lower_bound(0));
      CHECK(word(r, 16) == 10);
    }

    const auto bt = build(StructureKind::BTree, entries, rack.memory());
    auto r = run(bt, OpParams::scan(11, 19, Aggregate::Sum));
    CHECK(word(r, 16) == 0);
    CHECK(word(r, 24) == 0);
    r = run(bt, OpParams::scan(600, 900, Aggregate::Sum));
    CHECK(word(r, 24) == 0);
    r = run(bt, OpParams::scan(20, 40, Aggregate::Sum));
    CHECK(word(r, 16) == 21 + 31 + 41);
    CHECK(word(r, 24) == 3);
    r = run(bt, OpParams::scan(0, 1000, Aggregate::Max));
    CHECK(word(r, 16) == 501);
    r = run(bt, OpParams::scan(0, 1000, Aggregate::Min));
    CHECK(word(r, 16) == 11);
    CHECK(word(r, 24) == 50);
    r = run(bt, OpParams::find(250));
    CHECK(word(r, 8) == 251);
    r = run(bt, OpParams::find(255));
    CHECK(word(r, 8) == kKeyNotFound);

    const auto list = build(StructureKind::List, entries, rack.memory());
    r = run(list, OpParams::find(30));
    CHECK(word(r, 8) == list.list_nodes[2]);
  }

  TEST_CASE("partitioned hash lookups never leave their node") {
    SimConfig cfg;
    cfg.nodes = 4;
    cfg.allocation_policy = AllocationPolicy::Partitioned;
    SimKernel kernel;
    Rack rack(kernel, cfg.rack());
    OffloadEngine engine(rack, 0, cfg.offload());
    std::mt19937_64 rng(10);
    const auto h = build(StructureKind::HashMap, random_entries(rng, 4000, 1 << 20), rack.memory());
    const auto ct = compile(gen_traversal(h, OpParams::find(0)).program, cfg.offload());
    std::vector<TraversalJob> jobs;
    for (int i = 0; i < 3000; ++i) {
      const auto spec = gen_traversal(h, OpParams::find(i % 2 ? h.entries[rng() % 4000].key : rng() % (1 << 20)));
      if (!spec.trivially_done) jobs.push_back({ct.prepared, spec.init_cur_ptr, spec.init_scratch, false});
    }
    const auto results = run_batch(engine, jobs, 64);
    for (const auto& r : results) REQUIRE(r.ok());
    std::uint64_t forwarded = 0;
    for (NodeId n = 0; n < 4; ++n) {
      forwarded += rack.accelerator(n).stats().forwarded;
      CHECK(rack.accelerator(n).stats().admitted > 0);
    }
    CHECK(forwarded == 0);
    CHECK(rack.stats().xnode_hops == 0);
  }

  TEST_CASE("offloaded, host and oracle agree") {
    std::mt19937_64 rng(77);
    const struct {
      StructureKind kind;
      Operation op;
      Aggregate agg;
    } cases[] = {
        {StructureKind::List, Operation::Find, Aggregate::Sum},
        {StructureKind::HashMap, Operation::Find, Aggregate::Sum},
        {StructureKind::BTree, Operation::Find, Aggregate::Sum},
        {StructureKind::RbMap, Operation::LowerBound, Aggregate::Sum},
        {StructureKind::Avl, Operation::LowerBound, Aggregate::Sum},
        {StructureKind::BTree, Operation::ScanAgg, Aggregate::Sum},
        {StructureKind::BTree, Operation::ScanAgg, Aggregate::Min},
        {StructureKind::BTree, Operation::ScanAgg, Aggregate::Max},
        {StructureKind::BTree, Operation::ScanAgg, Aggregate::Count},
    };
    for (const auto& c : cases) {
      SimConfig cfg;
      cfg.nodes = 2;
      cfg.allocation_policy = AllocationPolicy::Uniform;
      SimKernel kernel;
      Rack rack(kernel, cfg.rack());
      OffloadEngine engine(rack, 0, cfg.offload());
      const std::size_t n = c.kind == StructureKind::List ? 100 : 1000;
      const auto h = build(c.kind, random_entries(rng, n, 4 * n), rack.memory());
      const Oracle oracle(h);
      std::vector<OpParams> ops;
      for (int i = 0; i < 300; ++i) {
        const std::uint64_t k = rng() % (4 * n + 8);
        if (c.op == Operation::Find) ops.push_back(OpParams::find(k));
        else if (c.op == Operation::LowerBound) ops.push_back(OpParams::lower_bound(k));
        else ops.push_back(OpParams::scan(k, k + rng() % 200, c.agg));
      }
      const auto ct = compile(traversal_program(c.kind, h.layout, ops[0]), cfg.offload());
      REQUIRE(ct.decision.offload);
      for (const auto& op : ops) {
        const auto spec = gen_traversal(h, op);
        Bytes a = spec.init_scratch, b = spec.init_scratch;
        if (!spec.trivially_done) {
          const auto ra = execute_offloaded(engine, ct.prepared, spec.init_cur_ptr, spec.init_scratch);
          const auto rb = execute_host(engine, ct.prepared, spec.init_cur_ptr, spec.init_scratch);
          REQUIRE(ra.ok());
          REQUIRE(rb.ok());
          a = ra.scratch;
          b = rb.scratch;
        }
        a.resize(spec.result_bytes);
        b.resize(spec.result_bytes);
        const Bytes want = oracle.expect(op);
        REQUIRE(a == want);
        REQUIRE(b == want);
      }
    }
  }
}
