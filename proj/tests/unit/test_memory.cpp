#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "json.hpp"

#include "pchase/memory.hpp"

using namespace pchase;

namespace {

MemoryError::Kind error_kind(const std::function<void()>& f) {
  try {
    f();
  } catch (const MemoryError& e) {
    return e.kind();
  }
  FAIL("no MemoryError thrown");
  return MemoryError::Kind::BadEntry;
}

}  // namespace

TEST_SUITE("memory") {
  TEST_CASE("range translation") {
    MemoryNodeStore n(0, 1 << 20);
    n.map({0x1000, 4096, 0x200, kPermRead});

    auto t = n.translate(0x1010, 48, Access::Read);
    REQUIRE(t.hit());
    CHECK(t.offset == 0x200 + 0x10);

    t = n.translate(0x1010, 48, Access::Write);
    CHECK(t.status == Translation::Status::Fault);
    CHECK(t.reason == Translation::FaultReason::Permission);

    CHECK(n.translate(0x9000, 8, Access::Read).status == Translation::Status::Miss);
    CHECK(n.translate(0xFFF, 8, Access::Read).status == Translation::Status::Miss);

    t = n.translate(0x1000 + 4096 - 8, 16, Access::Read);
    CHECK(t.status == Translation::Status::Fault);
    CHECK(t.reason == Translation::FaultReason::Straddle);
    CHECK(n.translate(0x1000 + 4096 - 8, 8, Access::Read).hit());
    CHECK(n.translate(0x1000 + 4096, 8, Access::Read).status == Translation::Status::Miss);
  }

  TEST_CASE("entries are checked on insertion") {
    MemoryNodeStore n(0, 4096);
    n.map({0x1000, 256, 0, kPermRW});
    CHECK(error_kind([&] { n.map({0x10F8, 16, 512, kPermRW}); }) == MemoryError::Kind::Overlap);
    CHECK(error_kind([&] { n.map({0x0F00, 0x101, 512, kPermRW}); }) == MemoryError::Kind::Overlap);
    CHECK(error_kind([&] { n.map({0x2000, 0, 0, kPermRW}); }) == MemoryError::Kind::BadEntry);
    CHECK(error_kind([&] { n.map({0x2000, 16, 4090, kPermRW}); }) == MemoryError::Kind::BadEntry);
    n.map({0x1100, 16, 256, kPermRW});  // adjacent is fine
    CHECK(n.table().size() == 2);
  }

  TEST_CASE("physical store") {
    MemoryNodeStore n(0, 1024);
    Bytes data(48);
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<std::uint8_t>(i * 7 + 1);
    n.write(0, data);
    CHECK(n.read(0, 48) == data);
    CHECK(n.read(48, 8) == Bytes(8, 0));  // untouched bytes read as zero
    CHECK(n.read(1000, 24) == Bytes(24, 0));
    CHECK(n.read(0, 0).empty());
    CHECK(error_kind([&] { n.read(1024, 1); }) == MemoryError::Kind::OutOfBounds);
    CHECK(error_kind([&] { n.read(1020, 8); }) == MemoryError::Kind::OutOfBounds);
    CHECK(error_kind([&] { n.write(1020, data); }) == MemoryError::Kind::OutOfBounds);
    const Bytes before = n.read(0, 48);
    CHECK(n.read(0, 48) == before);
  }

  TEST_CASE("allocation policies") {
    MemoryPool uni(2, 1 << 20, AllocationPolicy::Uniform);
    const auto a = uni.allocate(48);
    const auto b = uni.allocate(48);
    CHECK(uni.owner(a) != uni.owner(b));

    MemoryPool part(2, 1 << 20, AllocationPolicy::Partitioned);
    for (int i = 0; i < 10; ++i) CHECK(part.owner(part.allocate(48, 0)) == NodeId{0});
    CHECK(part.owner(part.allocate(48, 1)) == NodeId{1});

    MemoryPool small(1, 4096, AllocationPolicy::Uniform);
    CHECK(error_kind([&] { small.allocate(4097); }) == MemoryError::Kind::OutOfCapacity);
    CHECK_THROWS_AS(small.allocate(0), std::invalid_argument);
    small.allocate(4096);
    CHECK(error_kind([&] { small.allocate(8); }) == MemoryError::Kind::OutOfCapacity);
  }

  TEST_CASE("null address never maps") {
    MemoryPool pool(3, 1 << 20, AllocationPolicy::Uniform);
    for (int i = 0; i < 30; ++i) pool.allocate(64);
    CHECK_FALSE(pool.owner(kNullAddress).has_value());
    CHECK(pool.translate(kNullAddress, 8, Access::Read).status == Translation::Status::Miss);
    CHECK(error_kind([&] { pool.read(kNullAddress, 8); }) == MemoryError::Kind::Unmapped);
  }

  TEST_CASE("random allocations are disjoint and readable") {
    std::mt19937_64 rng(3);
    for (int round = 0; round < 20; ++round) {
      const std::size_t nodes = 1 + rng() % 4;
      const auto policy = rng() % 2 ? AllocationPolicy::Partitioned : AllocationPolicy::Uniform;
      MemoryPool pool(nodes, 1 << 20, policy);
      std::vector<std::pair<VirtualAddress, std::uint64_t>> ranges;
      for (int i = 0; i < 300; ++i) {
        const std::uint64_t size = 1 + rng() % 300;
        std::optional<std::uint32_t> hint;
        if (rng() % 2) hint = static_cast<std::uint32_t>(rng() % nodes);
        const auto a = pool.allocate(size, hint);
        if (policy == AllocationPolicy::Partitioned && hint) CHECK(pool.owner(a) == NodeId(*hint));
        ranges.push_back({a, size});
      }
      std::sort(ranges.begin(), ranges.end());
      for (std::size_t i = 1; i < ranges.size(); ++i)
        REQUIRE(ranges[i - 1].first + ranges[i - 1].second <= ranges[i].first);
      for (const auto& [a, size] : ranges) {
        const std::uint64_t off = rng() % size;
        const std::uint64_t len = 1 + rng() % (size - off);
        const auto t = pool.translate(a + off, len, Access::Read);
        REQUIRE(t.hit());
        // exactly one node can hit
        int hits = 0;
        for (std::size_t n = 0; n < nodes; ++n)
          hits += pool.node(static_cast<NodeId>(n)).translate(a + off, len, Access::Read).hit();
        REQUIRE(hits == 1);
      }
    }
  }

  TEST_CASE("partitioned allocation keeps each hint on its node") {
    MemoryPool pool(4, 1 << 20, AllocationPolicy::Partitioned);
    for (std::uint32_t h = 0; h < 4; ++h)
      for (int i = 0; i < 20; ++i) {
        const auto a = pool.allocate(40, h);
        for (NodeId n = 0; n < 4; ++n) CHECK(pool.node(n).translate(a, 40, Access::Read).hit() == (n == h));
      }
  }

  TEST_CASE("translation outcomes are total") {
    std::mt19937_64 rng(5);
    MemoryNodeStore n(0, 1 << 16);
    n.map({0x1000, 100, 0, kPermRead});
    n.map({0x2000, 300, 128, kPermRW});
    for (int i = 0; i < 5000; ++i) {
      const VirtualAddress a = 0xF00 + rng() % 0x1300;
      const std::uint64_t len = 1 + rng() % 64;
      const auto acc = rng() % 2 ? Access::Read : Access::Write;
      const auto t = n.translate(a, len, acc);
      const bool in1 = a >= 0x1000 && a < 0x1064, in2 = a >= 0x2000 && a < 0x212C;
      if (!in1 && !in2) {
        CHECK(t.status == Translation::Status::Miss);
      } else if (t.hit()) {
        const VirtualAddress end = in1 ? 0x1064 : 0x212C;
        CHECK(a + len <= end);
        CHECK((in2 || acc == Access::Read));
      } else {
        CHECK(t.status == Translation::Status::Fault);
      }
    }
  }

  TEST_CASE("pool read/write and dump") {
    MemoryPool pool(2, 1 << 20, AllocationPolicy::Uniform);
    const auto a = pool.allocate(64);
    const auto b = pool.allocate(16);
    pool.write_u64(a + 8, 0x1122334455667788ULL);
    pool.write_u64(b, 42);
    CHECK(pool.read_u64(a + 8) == 0x1122334455667788ULL);
    CHECK(pool.read(a + 8, 1) == Bytes{0x88});
    CHECK(pool.read_u64(b) == 42);
    CHECK_THROWS_AS(pool.write_u64(b + 12, 1), MemoryError);

    const auto dir = std::filesystem::temp_directory_path() / "pchase_dump_test";
    std::filesystem::create_directories(dir);
    pool.node(0).dump(dir / "node0");
    std::ifstream side(dir / "node0.json");
    const auto j = nlohmann::json::parse(side);
    CHECK(j["node"] == 0);
    REQUIRE(j["entries"].size() == 1);
    CHECK(j["entries"][0]["vbase"] == a);
    CHECK(j["entries"][0]["length"] == 64);
    CHECK(j["entries"][0]["perms"] == "RW");
    CHECK(std::filesystem::file_size(dir / "node0.bin") >= 16);
    std::filesystem::remove_all(dir);
  }
}
