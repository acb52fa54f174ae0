#include <sstream>

#include "doctest.h"

#include "pchase/harness.hpp"

using namespace pchase;

TEST_SUITE("harness") {
  TEST_CASE("config parsing") {
    const auto c = SimConfig::parse(R"({"nodes": 3, "link_ns": 5000, "allocation_policy": "partitioned", "eta": 2})");
    CHECK(c.nodes == 3);
    CHECK(c.cpu_switch_ns == 5000);
    CHECK(c.switch_node_ns == 5000);
    CHECK(c.eta == 2);
    CHECK(c.allocation_policy == AllocationPolicy::Partitioned);
    CHECK(c.t_d_ns == 120);

    const auto split = SimConfig::parse(R"({"link_ns": {"cpu_switch": 100, "switch_node": 200}})");
    CHECK(split.cpu_switch_ns == 100);
    CHECK(split.switch_node_ns == 200);

    CHECK_THROWS_AS(SimConfig::parse(R"({"nodez": 2})"), ConfigError);
    CHECK_THROWS_AS(SimConfig::parse(R"({"nodes": 0})"), ConfigError);
    CHECK_THROWS_AS(SimConfig::parse(R"({"drop_prob": 1.5})"), ConfigError);
    CHECK_THROWS_AS(SimConfig::parse(R"({"nodes": "two"})"), ConfigError);
    CHECK_THROWS_AS(SimConfig::parse("[1]"), ConfigError);
    CHECK_THROWS_AS(SimConfig::parse("{"), ConfigError);

    // serialised form parses back to the same thing
    SimConfig d;
    d.nodes = 4;
    d.drop_prob = 0.25;
    d.chase_acc = true;
    CHECK(SimConfig::parse(d.to_json()).to_json() == d.to_json());
  }

  TEST_CASE("workload parsing") {
    const auto w = WorkloadSpec::parse(R"({"kind": "tsv", "dataset": 1000, "window_leaves": 4, "aggregate": "avg"})");
    CHECK(w.kind == WorkloadKind::Tsv);
    CHECK(w.average);
    CHECK(w.aggregate == Aggregate::Sum);
    CHECK_THROWS_AS(WorkloadSpec::parse(R"({"kind": "upc", "colour": 1})"), ConfigError);
    CHECK_THROWS_AS(WorkloadSpec::parse(R"({"kind": "scan"})"), ConfigError);
    CHECK_THROWS_AS(WorkloadSpec::parse(R"({"requests": 100001})"), ConfigError);
    CHECK_THROWS_AS(WorkloadSpec::parse(R"({"dataset": 1000001})"), ConfigError);
    CHECK_THROWS_AS(WorkloadSpec::parse(R"({"kind": "tc", "dataset": 10, "scan_length": 11})"), ConfigError);
    CHECK(parse_mode("chase-acc") == Mode::ChaseAcc);
    CHECK_THROWS_AS(parse_mode("fast"), ConfigError);
  }

  TEST_CASE("csv layout") {
    CHECK(csv_header() ==
          "workload,mode,nodes,eta,seed,requests,mean_ns,p50_ns,p99_ns,throughput_rps,mem_util,logic_util,"
          "xnode_hops,retransmits");
    RunMetrics m;
    m.workload = "upc";
    m.mode = "chase";
    m.nodes = 2;
    m.eta = 1;
    m.seed = 7;
    m.requests = 10;
    m.mean_ns = 1.5;
    m.xnode_hops = 3;
    const auto row = csv_row(m);
    const auto header = csv_header();
    CHECK(std::count(row.begin(), row.end(), ',') == std::count(header.begin(), header.end(), ','));
    CHECK(row.rfind("upc,chase,2,1,7,10,1.500,", 0) == 0);
  }

  TEST_CASE("list walk latency is linear in its length") {
    SimConfig cfg;
    WorkloadSpec w;
    w.kind = WorkloadKind::ListWalk;
    w.requests = 50;
    w.concurrency = 1;
    std::vector<double> lat;
    for (std::size_t len : {10, 20, 40}) {
      w.chain_length = len;
      const auto m = run_workload(cfg, w, Mode::Chase);
      CHECK(m.mismatches == 0);
      CHECK(m.completed == 50);
      lat.push_back(m.mean_ns);
    }
    // the line through the two shorter walks predicts the longest
    const double slope = (lat[1] - lat[0]) / 10;
    const double predicted = lat[0] + 30 * slope;
    CHECK(std::abs(lat[2] - predicted) <= 0.02 * lat[2]);
    // the per-node cost is one memory access plus the walk body
    CHECK(slope >= cfg.t_d_ns);
    CHECK(slope < cfg.t_d_ns * 1.2);
  }

  TEST_CASE("host lookups cost several round trips") {
    SimConfig cfg;
    WorkloadSpec w;
    w.kind = WorkloadKind::Upc;
    w.dataset = 20000;
    w.requests = 2000;
    w.load_factor = 10;
    const auto chase = run_workload(cfg, w, Mode::Chase);
    const auto host = run_workload(cfg, w, Mode::Host);
    CHECK(chase.offloaded);
    CHECK_FALSE(host.offloaded);
    CHECK(chase.mismatches == 0);
    CHECK(host.mismatches == 0);
    CHECK(host.mean_ns >= 5 * chase.mean_ns);
    CHECK(host.iterations == chase.iterations);
  }

  TEST_CASE("partitioned scans beat uniform placement") {
    SimConfig cfg;
    cfg.nodes = 2;
    WorkloadSpec w;
    w.kind = WorkloadKind::Tc;
    w.dataset = 10000;
    w.requests = 300;
    w.scan_length = 128;
    cfg.allocation_policy = AllocationPolicy::Partitioned;
    const auto part = run_workload(cfg, w, Mode::Chase);
    cfg.allocation_policy = AllocationPolicy::Uniform;
    const auto uni = run_workload(cfg, w, Mode::Chase);
    CHECK(part.mismatches == 0);
    CHECK(uni.mismatches == 0);
    CHECK(uni.xnode_hops > part.xnode_hops);
    CHECK(uni.mean_ns >= 2 * part.mean_ns);
  }

  TEST_CASE("pipeline utilisation") {
    CHECK(utilization_experiment(2, 2, 64).mem_util >= 0.99);
    CHECK(utilization_experiment(2, 1, 64).mem_util == doctest::Approx(2.0 / 3).epsilon(0.015));
    CHECK(utilization_experiment(2, 2, 1).mem_util == doctest::Approx(1.0 / 3).epsilon(0.03));
    for (std::uint32_t eta : {1u, 3u}) {
      const auto r = utilization_experiment(eta, 1, 64);
      CHECK(r.mem_util == doctest::Approx(eta / (eta + 1.0)).epsilon(0.015));
      CHECK(r.logic_util <= 1.0);
    }
  }

  TEST_CASE("metric conservation") {
    SimConfig cfg;
    cfg.nodes = 2;
    cfg.allocation_policy = AllocationPolicy::Partitioned;
    WorkloadSpec w;
    w.kind = WorkloadKind::Upc;
    w.dataset = 20000;
    w.requests = 5000;
    const auto m = run_workload(cfg, w, Mode::Chase);
    REQUIRE(m.completed == w.requests);
    for (double u : m.core_mem_util) CHECK(u <= 1.0);
    for (double u : m.core_logic_util) CHECK(u <= 1.0);
    CHECK(m.core_mem_util.size() == cfg.nodes * cfg.cores_per_node);
    // memory slots cost t_d each and cannot exceed core time
    CHECK(m.mem_slots * ns_to_ps(cfg.t_d_ns) <=
          static_cast<double>(cfg.nodes * cfg.cores_per_node) * m.sim_seconds * 1e12);
    // Little's law: outstanding = rate x time in system
    const double little = m.throughput_rps * m.mean_ns * 1e-9;
    CHECK(little == doctest::Approx(m.mean_concurrency).epsilon(0.05));
    CHECK(m.p50_ns <= m.p99_ns);
    CHECK(m.xnode_hops == 0);
  }

  TEST_CASE("throughput scales with partitioned nodes") {
    SimConfig cfg;
    cfg.allocation_policy = AllocationPolicy::Partitioned;
    WorkloadSpec w;
    w.kind = WorkloadKind::Upc;
    w.dataset = 40000;
    w.requests = 20000;
    double single = 0;
    for (std::size_t n : {1, 2, 4}) {
      cfg.nodes = n;
      const auto m = run_workload(cfg, w, Mode::Chase);
      CHECK(m.mismatches == 0);
      if (n == 1) single = m.throughput_rps;
      CAPTURE(n);
      CHECK(m.throughput_rps == doctest::Approx(n * single).epsilon(0.10));
    }
  }

  TEST_CASE("runs are deterministic") {
    SimConfig cfg;
    cfg.nodes = 2;
    cfg.drop_prob = 0.01;
    cfg.seed = 42;
    WorkloadSpec w;
    w.kind = WorkloadKind::Tsv;
    w.dataset = 5000;
    w.requests = 100;
    w.window_leaves = 8;
    w.average = true;
    std::ostringstream t1, t2;
    const auto a = run_workload(cfg, w, Mode::Chase, {&t1});
    const auto b = run_workload(cfg, w, Mode::Chase, {&t2});
    CHECK(csv_row(a) == csv_row(b));
    CHECK(a.latencies == b.latencies);
    CHECK(t1.str() == t2.str());
    CHECK_FALSE(t1.str().empty());
    CHECK(a.mismatches == 0);
    cfg.seed = 43;
    CHECK(csv_row(run_workload(cfg, w, Mode::Chase)) != csv_row(a));
  }

  TEST_CASE("sweeps keep their nesting order") {
    auto s = SweepSpec::parse(R"({
      "workload": {"kind": "upc", "dataset": 2000, "requests": 200},
      "modes": ["chase", "host"], "nodes": [1, 2], "seeds": [1, 2], "threads": 4})");
    const auto rows = run_sweep(s);
    REQUIRE(rows.size() == 8);
    CHECK(rows[0].mode == "chase");
    CHECK(rows[0].nodes == 1);
    CHECK(rows[1].seed == 2);
    CHECK(rows[2].nodes == 2);
    CHECK(rows[4].mode == "host");
    s.threads = 1;
    const auto serial = run_sweep(s);
    for (std::size_t i = 0; i < rows.size(); ++i) CHECK(csv_row(rows[i]) == csv_row(serial[i]));
    CHECK_THROWS_AS(SweepSpec::parse(R"({"grid": []})"), ConfigError);
  }
}
