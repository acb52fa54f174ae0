#include <random>
#include <sstream>

#include "doctest.h"

#include "pchase/accelerator.hpp"
#include "pchase/assembler.hpp"
#include "pchase/codec.hpp"

using namespace pchase;

namespace {

// value@0 next@8; sums values into sp[0]
const char* kListSum = R"(
  LOAD 0 16
  ADD sp[0] data[0]
  COMPARE 0 data[8]
  JUMP_EQ end
  MOVE cur_ptr data[8]
  NEXT_ITER
end:
  RETURN
)";

struct Emitted {
  SimTime t;
  TraversalPacket p;
};

struct Bench {
  SimKernel kernel;
  MemoryPool pool;
  std::ostringstream trace_text;
  Tracer tracer{&trace_text};
  std::vector<Emitted> out;
  Accelerator acc;

  explicit Bench(const AcceleratorConfig& cfg, std::size_t nodes = 1,
                 AllocationPolicy policy = AllocationPolicy::Partitioned)
      : pool(nodes, 1 << 24, policy),
        acc(0, kernel, pool.node(0), cfg, [this](TraversalPacket&& p) { out.push_back({kernel.now(), std::move(p)}); },
            &tracer) {}

  TraversalPacket request(std::uint64_t id, const Program& prog, VirtualAddress cur, Bytes scratch) {
    TraversalPacket p;
    p.request_id = id;
    p.cur_ptr = cur;
    p.code = encode(prog);
    p.scratch = std::move(scratch);
    return p;
  }
};

AcceleratorConfig one_core(std::uint32_t eta = 1) {
  AcceleratorConfig c;
  c.cores = 1;
  c.core.eta = eta;
  return c;
}

// `n` list nodes; node i gets value i+1 and lives on node owner(i).
std::vector<VirtualAddress> make_list(MemoryPool& pool, std::size_t n, std::function<std::uint32_t(std::size_t)> owner) {
  std::vector<VirtualAddress> a;
  for (std::size_t i = 0; i < n; ++i) a.push_back(pool.allocate(16, owner(i)));
  for (std::size_t i = 0; i < n; ++i) {
    pool.write_u64(a[i], i + 1);
    pool.write_u64(a[i] + 8, i + 1 < n ? a[i + 1] : 0);
  }
  return a;
}

std::uint64_t word(const Bytes& b, std::size_t off) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < 8; ++i) v |= std::uint64_t{b[off + i]} << (8 * i);
  return v;
}

}  // namespace

TEST_SUITE("accelerator") {
  TEST_CASE("three iteration traversal") {
    const auto cfg = one_core();
    Bench b(cfg);
    const auto list = make_list(b.pool, 3, [](std::size_t) { return 0u; });
    const Program prog = assemble(kListSum);
    b.acc.receive(b.request(1, prog, list[0], Bytes(8)));
    b.kernel.run();

    REQUIRE(b.out.size() == 1);
    const auto& r = b.out[0].p;
    CHECK(r.msg_type == MsgType::Done);
    CHECK(word(r.scratch, 0) == 6);
    CHECK(r.scratch.size() == 8);
    CHECK(r.iter_used == 2);  // two NEXT_ITERs
    CHECK(b.acc.stats().mem_slots == 3);
    CHECK(b.acc.stats().logic_slots == 3);
    CHECK(b.acc.stats().iterations == 3);
    // two NEXT_ITER bodies of 5 and a RETURN body of 4 instructions
    const SimTime logic = cfg.core.logic_time(5) * 2 + cfg.core.logic_time(4);
    CHECK(b.out[0].t == 2 * cfg.core.t_sched + 3 * cfg.core.t_d + logic);
    CHECK(b.acc.mem_busy_until(0, b.kernel.now()) == 3 * cfg.core.t_d);
    CHECK(b.acc.logic_busy_until(0, 0, b.kernel.now()) == logic);
  }

  TEST_CASE("first load is dispatched after t_sched") {
    Bench b(one_core());
    const auto list = make_list(b.pool, 1, [](std::size_t) { return 0u; });
    b.kernel.schedule_at(1000, [&] { b.acc.receive(b.request(1, assemble(kListSum), list[0], Bytes(8))); });
    b.kernel.run();
    std::istringstream lines(b.trace_text.str());
    std::string line;
    bool found = false;
    while (std::getline(lines, line))
      if (line.find("\"event\":\"load\"") != std::string::npos) {
        CHECK(line.find("\"t\":5000,") != std::string::npos);
        found = true;
        break;
      }
    CHECK(found);
  }

  TEST_CASE("admission queue holds requests beyond the workspaces") {
    for (std::uint32_t eta = 1; eta <= 3; ++eta) {
      Bench b(one_core(eta));
      const auto list = make_list(b.pool, 4, [](std::size_t) { return 0u; });
      const Program prog = assemble(kListSum);
      for (std::uint64_t id = 1; id <= 2 * eta + 1; ++id) b.acc.receive(b.request(id, prog, list[0], Bytes(8)));
      CHECK(b.acc.busy_workspaces(0) == 2 * eta);
      CHECK(b.acc.queued(0) == 1);
      b.kernel.run();
      CHECK(b.out.size() == 2 * eta + 1);
      CHECK(b.acc.stats().queued == 1);
      for (const auto& e : b.out) CHECK(word(e.p.scratch, 0) == 10);
      // FIFO: the queued request finishes last
      CHECK(b.out.back().p.request_id == 2 * eta + 1);
    }
  }

  TEST_CASE("requests spread over cores") {
    AcceleratorConfig cfg;
    cfg.cores = 2;
    Bench b(cfg);
    const auto list = make_list(b.pool, 4, [](std::size_t) { return 0u; });
    for (std::uint64_t id = 1; id <= 4; ++id) b.acc.receive(b.request(id, assemble(kListSum), list[0], Bytes(8)));
    CHECK(b.acc.busy_workspaces(0) == 2);
    CHECK(b.acc.busy_workspaces(1) == 2);
    CHECK(b.acc.queued(0) + b.acc.queued(1) == 0);
  }

  TEST_CASE("gate rejects bad requests") {
    Bench b(one_core());
    Program source = assemble("RETURN");  // no LOAD
    b.acc.receive(b.request(1, source, partition_base(0), Bytes(8)));
    auto junk = b.request(2, source, partition_base(0), Bytes(8));
    junk.code = Bytes(15, 0xEE);
    b.acc.receive(junk);
    b.acc.receive(b.request(3, assemble(kListSum), partition_base(0), Bytes(kDefaultScratchBytes + 1)));
    b.kernel.run();
    REQUIRE(b.out.size() == 3);
    CHECK(b.out[0].p.msg_type == MsgType::Fault);
    CHECK(b.out[0].p.fault() == FaultKind::InvalidProgram);
    CHECK(b.out[1].p.fault() == FaultKind::InvalidProgram);
    CHECK(b.out[2].p.fault() == FaultKind::ScratchTooLarge);
    CHECK(b.acc.stats().mem_slots == 0);
  }

  TEST_CASE("duplicate request ids are ignored while active") {
    Bench b(one_core());
    const auto list = make_list(b.pool, 3, [](std::size_t) { return 0u; });
    const auto req = b.request(7, assemble(kListSum), list[0], Bytes(8));
    b.acc.receive(req);
    b.acc.receive(req);
    b.kernel.run();
    CHECK(b.out.size() == 1);
    CHECK(b.acc.stats().deduped == 1);
    b.acc.receive(req);  // finished, so a retransmit runs again
    b.kernel.run();
    CHECK(b.out.size() == 2);
  }

  TEST_CASE("iteration limit and resume") {
    auto cfg = one_core();
    cfg.core.max_iter = 2;
    Bench b(cfg);
    const auto list = make_list(b.pool, 5, [](std::size_t) { return 0u; });
    const Program prog = assemble(kListSum);
    const auto ref = reference_run(prog, b.pool, list[0], Bytes(8));
    REQUIRE(ref.status == RunStatus::Done);

    b.acc.receive(b.request(1, prog, list[0], Bytes(8)));
    b.kernel.run();
    REQUIRE(b.out.size() == 1);
    CHECK(b.out[0].p.msg_type == MsgType::IterLimit);
    CHECK(b.out[0].p.iter_used == 2);
    CHECK(b.out[0].p.cur_ptr == list[2]);
    CHECK(b.acc.stats().iterations == 2);

    int limit_rounds = 0;
    while (b.out.back().p.msg_type == MsgType::IterLimit) {
      auto next = b.out.back().p;
      next.msg_type = MsgType::Request;
      next.iter_used = 0;
      b.acc.receive(next);
      b.kernel.run();
      if (b.out.back().p.msg_type == MsgType::IterLimit) ++limit_rounds;
    }
    CHECK(limit_rounds <= 2);
    CHECK(b.out.back().p.msg_type == MsgType::Done);
    CHECK(b.out.back().p.scratch == ref.scratch);
  }

  TEST_CASE("miss forwards the up-to-date scratch pad") {
    Bench b(one_core(), 2);
    // nodes 0..3 local, node 4 on memory node 1: miss when loading iteration 5
    const auto list = make_list(b.pool, 6, [](std::size_t i) { return i < 4 ? 0u : 1u; });
    const Program prog = assemble(kListSum);
    ReferenceMachine ref(prog, b.pool, list[0], Bytes(8));
    for (int i = 0; i < 4; ++i) ref.step();

    b.acc.receive(b.request(9, prog, list[0], Bytes(8)));
    b.kernel.run();
    REQUIRE(b.out.size() == 1);
    const auto& fwd = b.out[0].p;
    CHECK(fwd.msg_type == MsgType::Request);
    CHECK(fwd.request_id == 9);
    CHECK(fwd.cur_ptr == list[4]);
    CHECK(fwd.iter_used == 4);
    CHECK(fwd.code == encode(prog));
    Bytes want = ref.workspace().scratch;
    want.resize(8);
    CHECK(fwd.scratch == want);
    CHECK(word(fwd.scratch, 0) == 1 + 2 + 3 + 4);
    CHECK(b.acc.stats().forwarded == 1);
  }

  TEST_CASE("unmapped address in the own partition is invalid") {
    Bench b(one_core());
    b.acc.receive(b.request(1, assemble(kListSum), partition_base(0) + 0x100000, Bytes(8)));
    b.kernel.run();
    REQUIRE(b.out.size() == 1);
    CHECK(b.out[0].p.msg_type == MsgType::InvalidAddr);
  }

  TEST_CASE("stores") {
    Bench b(one_core());
    const auto list = make_list(b.pool, 3, [](std::size_t) { return 0u; });
    const Program inc = assemble(R"(
      LOAD 0 16
      MOVE sp[8] data[0]
      ADD sp[8] 100
      STORE data[0] sp[8]
      COMPARE 0 data[8]
      JUMP_EQ end
      MOVE cur_ptr data[8]
      NEXT_ITER
    end:
      RETURN
    )");
    b.acc.receive(b.request(1, inc, list[0], Bytes(16)));
    b.kernel.run();
    REQUIRE(b.out.size() == 1);
    CHECK(b.out[0].p.msg_type == MsgType::Done);
    for (std::size_t i = 0; i < 3; ++i) CHECK(b.pool.read_u64(list[i]) == i + 101);
    CHECK(b.acc.stats().mem_slots == 4);  // three loads plus the final flush

    // read-only target
    const VirtualAddress ro = partition_base(0) + (std::uint64_t{1} << 23);
    b.pool.node(0).map({ro, 16, std::uint64_t{1} << 23, kPermRead});
    b.acc.receive(b.request(2, inc, ro, Bytes(16)));
    b.kernel.run();
    CHECK(b.out.back().p.msg_type == MsgType::Fault);
    CHECK(b.out.back().p.fault() == FaultKind::Permission);
  }

  TEST_CASE("division by zero faults the request") {
    Bench b(one_core());
    const auto list = make_list(b.pool, 1, [](std::size_t) { return 0u; });
    b.acc.receive(b.request(1, assemble("LOAD 0 8\nDIV sp[0] 0\nRETURN"), list[0], Bytes(8)));
    b.kernel.run();
    REQUIRE(b.out.size() == 1);
    CHECK(b.out[0].p.fault() == FaultKind::DivByZero);
  }

  TEST_CASE("interleaved traversals keep their own state") {
    auto cfg = one_core(2);
    cfg.core.workspaces_per_logic = 3;
    Bench b(cfg);
    std::mt19937_64 rng(4);
    const Program prog = assemble(kListSum);
    std::vector<std::vector<VirtualAddress>> lists;
    for (int i = 0; i < 12; ++i) lists.push_back(make_list(b.pool, 1 + rng() % 20, [](std::size_t) { return 0u; }));

    std::map<std::uint64_t, Bytes> want;
    for (std::uint64_t id = 0; id < 12; ++id) {
      Bytes sp(24);
      for (std::size_t k = 8; k < 24; ++k) sp[k] = static_cast<std::uint8_t>(0xC0 + id);  // canary
      sp[0] = static_cast<std::uint8_t>(id * 1000 % 256);
      want[id] = reference_run(prog, b.pool, lists[id][0], sp).scratch;
      b.acc.receive(b.request(id, prog, lists[id][0], sp));
    }
    b.kernel.run();
    REQUIRE(b.out.size() == 12);
    for (const auto& e : b.out) CHECK(e.p.scratch == want[e.p.request_id]);
  }

  TEST_CASE("random programs match the reference interpreter") {
    std::mt19937_64 rng(12);
    std::size_t checked = 0;
    for (int trial = 0; trial < 3000; ++trial) {
      auto cfg = one_core(1 + rng() % 2);
      cfg.core.max_iter = 1 + rng() % 40;
      Bench b(cfg);
      std::vector<VirtualAddress> nodes;
      for (int i = 0; i < 8; ++i) nodes.push_back(b.pool.allocate(64, 0));
      for (auto n : nodes)
        for (int w = 0; w < 8; ++w)
          b.pool.write_u64(n + 8 * w, rng() % 3 ? nodes[rng() % nodes.size()] : rng() % 50);

      Program p;
      p.code.push_back(ins::load(0, 64));
      const std::size_t len = 2 + rng() % 10;
      for (std::size_t i = 0; i + 1 < len; ++i) {
        const auto d = Operand::data(static_cast<std::uint16_t>(8 * (rng() % 8)));
        const auto s = Operand::sp(static_cast<std::uint16_t>(8 * (rng() % 4)));
        switch (rng() % 7) {
          case 0: p.code.push_back(ins::move(Operand::cur_ptr(), d)); break;
          case 1: p.code.push_back(ins::alu(Opcode::Add, s, d)); break;
          case 2: p.code.push_back(ins::compare(s, d)); break;
          case 3: p.code.push_back(ins::jump(Opcode::JumpLt, p.size() + 1 + rng() % (len - i))); break;
          case 4: p.code.push_back(ins::store(d, s, 8)); break;
          case 5: p.code.push_back(ins::next_iter()); break;
          default: p.code.push_back(ins::move(s, d, 8)); break;
        }
      }
      p.code.push_back(rng() % 2 ? ins::next_iter() : ins::ret());
      if (!validate(p).ok()) continue;

      Bytes sp(32);
      for (auto& x : sp) x = static_cast<std::uint8_t>(rng());
      // reference first on a copy of memory: stores mutate the image
      std::vector<Bytes> image;
      for (auto n : nodes) image.push_back(b.pool.read(n, 64));
      const auto ref = reference_run(p, b.pool, nodes[0], sp, cfg.core.max_iter);
      std::vector<Bytes> ref_image;
      for (auto n : nodes) ref_image.push_back(b.pool.read(n, 64));
      for (std::size_t i = 0; i < nodes.size(); ++i) b.pool.write(nodes[i], image[i]);

      b.acc.receive(b.request(1, p, nodes[0], sp));
      b.kernel.run();
      REQUIRE(b.out.size() == 1);
      const auto& r = b.out[0].p;
      CAPTURE(disassemble(p));
      switch (ref.status) {
        case RunStatus::Done: CHECK(r.msg_type == MsgType::Done); break;
        case RunStatus::IterLimit: CHECK(r.msg_type == MsgType::IterLimit); break;
        case RunStatus::Fault:
          CHECK(r.msg_type == MsgType::Fault);
          CHECK(r.fault() == ref.fault);
          break;
        default:
          // unowned addresses leave toward the switch, which answers invalid
          CHECK((r.msg_type == MsgType::InvalidAddr || r.msg_type == MsgType::Request));
          break;
      }
      CHECK(r.scratch == ref.scratch);
      CHECK(r.cur_ptr == ref.cur_ptr);
      if (ref.status == RunStatus::Done || ref.status == RunStatus::IterLimit)
        for (std::size_t i = 0; i < nodes.size(); ++i) CHECK(b.pool.read(nodes[i], 64) == ref_image[i]);
      ++checked;
    }
    CHECK(checked > 500);
  }

  TEST_CASE("identical inputs give identical traces") {
    auto run = [] {
      Bench b(one_core());
      const auto list = make_list(b.pool, 7, [](std::size_t) { return 0u; });
      for (std::uint64_t id = 1; id <= 5; ++id) b.acc.receive(b.request(id, assemble(kListSum), list[id], Bytes(8)));
      b.kernel.run();
      return b.trace_text.str();
    };
    const auto a = run();
    CHECK(!a.empty());
    CHECK(a == run());
  }
}
