#include "pchase/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "json.hpp"

#include "pchase/detail/endian.hpp"

namespace pchase {

using nlohmann::json;

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_object(const std::string& text, const char* what) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
  return j;
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* what) {
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; }))
      throw ConfigError(std::string(what) + ": unknown key \"" + key + "\"");
  }
}

template <typename T>
void get(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for \"") + key + "\": " + e.what());
  }
}

std::string lower_case(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

AllocationPolicy parse_policy(const std::string& s) {
  const auto v = lower_case(s);
  if (v == "uniform") return AllocationPolicy::Uniform;
  if (v == "partitioned") return AllocationPolicy::Partitioned;
  throw ConfigError("allocation_policy must be uniform or partitioned, got " + s);
}

WorkloadKind parse_kind(const std::string& s) {
  const auto v = lower_case(s);
  if (v == "upc") return WorkloadKind::Upc;
  if (v == "tc") return WorkloadKind::Tc;
  if (v == "tsv") return WorkloadKind::Tsv;
  if (v == "listwalk") return WorkloadKind::ListWalk;
  throw ConfigError("unknown workload kind " + s);
}

std::string fmt(double v, int prec) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

}  // namespace

// --- config -----------------------------------------------------------------

void SimConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(nodes >= 1 && nodes <= 4096, "nodes must be in [1, 4096]");
  need(cores_per_node >= 1, "cores_per_node must be >= 1");
  need(eta >= 1 && eta <= 64, "eta must be in [1, 64]");
  need(workspaces_per_logic >= 1, "workspaces_per_logic must be >= 1");
  need(t_d_ns > 0, "t_d_ns must be positive");
  need(t_i_ns > 0, "t_i_ns must be positive");
  need(max_iter >= 1 && max_iter <= 0xFFFF, "max_iter must be in [1, 65535]");
  need(scratch_pad_bytes >= 8 && scratch_pad_bytes <= 0xFFFF, "scratch_pad_bytes must be in [8, 65535]");
  need(cpu_switch_ns >= 0 && switch_node_ns >= 0 && stack_ns >= 0, "latencies must be non-negative");
  need(sched_ns >= 0 && cpu_processing_ns >= 0 && host_instruction_ns >= 0, "latencies must be non-negative");
  need(drop_prob >= 0 && drop_prob <= 1, "drop_prob must be in [0, 1]");
  need(timeout_ns >= 0, "timeout_ns must be non-negative");
  need(node_capacity >= 4096, "node_capacity too small");
}

RackConfig SimConfig::rack() const {
  RackConfig r;
  r.nodes = nodes;
  r.accel.cores = cores_per_node;
  r.accel.core.eta = eta;
  r.accel.core.t_d = ns_to_ps(t_d_ns);
  r.accel.core.t_i_ns = t_i_ns;
  r.accel.core.max_iter = max_iter;
  r.accel.core.workspaces_per_logic = workspaces_per_logic;
  r.accel.core.scratch_bytes = scratch_pad_bytes;
  r.accel.core.t_sched = ns_to_ps(sched_ns);
  r.link.cpu_switch = ns_to_ps(cpu_switch_ns);
  r.link.switch_node = ns_to_ps(switch_node_ns);
  r.link.stack = ns_to_ps(stack_ns);
  r.link.drop_prob = drop_prob;
  r.link.seed = seed;
  r.node_capacity = node_capacity;
  r.policy = allocation_policy;
  r.chase_acc = chase_acc;
  r.cpu_processing = ns_to_ps(cpu_processing_ns);
  return r;
}

OffloadConfig SimConfig::offload() const {
  OffloadConfig o;
  o.eta = eta;
  o.t_d = ns_to_ps(t_d_ns);
  o.t_i_ns = t_i_ns;
  o.max_iter = max_iter;
  o.timeout = ns_to_ps(timeout_ns);
  o.max_retransmits = max_retransmits;
  o.scratch_bytes = scratch_pad_bytes;
  o.host_instruction_ns = host_instruction_ns;
  o.t_sched = ns_to_ps(sched_ns);
  return o;
}

SimConfig SimConfig::parse(const std::string& text) {
  const json j = parse_object(text, "config");
  reject_unknown(j,
                 {"nodes", "cores_per_node", "eta", "t_d_ns", "t_i_ns", "max_iter", "scratch_pad_bytes",
                  "link_ns", "cpu_switch_ns", "switch_node_ns", "stack_ns", "drop_prob", "seed", "chase_acc",
                  "allocation_policy", "workspaces_per_logic", "sched_ns", "cpu_processing_ns",
                  "host_instruction_ns", "max_retransmits", "timeout_ns", "node_capacity"},
                 "config");
  SimConfig c;
  get(j, "nodes", c.nodes);
  get(j, "cores_per_node", c.cores_per_node);
  get(j, "eta", c.eta);
  get(j, "t_d_ns", c.t_d_ns);
  get(j, "t_i_ns", c.t_i_ns);
  get(j, "max_iter", c.max_iter);
  get(j, "scratch_pad_bytes", c.scratch_pad_bytes);
  if (j.contains("link_ns")) {
    const json& l = j["link_ns"];
    if (l.is_number()) {
      c.cpu_switch_ns = c.switch_node_ns = l.get<double>();
    } else if (l.is_object()) {
      reject_unknown(l, {"cpu_switch", "switch_node"}, "link_ns");
      get(l, "cpu_switch", c.cpu_switch_ns);
      get(l, "switch_node", c.switch_node_ns);
    } else {
      throw ConfigError("link_ns must be a number or {cpu_switch, switch_node}");
    }
  }
  get(j, "cpu_switch_ns", c.cpu_switch_ns);
  get(j, "switch_node_ns", c.switch_node_ns);
  get(j, "stack_ns", c.stack_ns);
  get(j, "drop_prob", c.drop_prob);
  get(j, "seed", c.seed);
  get(j, "chase_acc", c.chase_acc);
  if (j.contains("allocation_policy")) {
    std::string p;
    get(j, "allocation_policy", p);
    c.allocation_policy = parse_policy(p);
  }
  get(j, "workspaces_per_logic", c.workspaces_per_logic);
  get(j, "sched_ns", c.sched_ns);
  get(j, "cpu_processing_ns", c.cpu_processing_ns);
  get(j, "host_instruction_ns", c.host_instruction_ns);
  get(j, "max_retransmits", c.max_retransmits);
  get(j, "timeout_ns", c.timeout_ns);
  get(j, "node_capacity", c.node_capacity);
  c.validate();
  return c;
}

SimConfig SimConfig::load(const std::filesystem::path& path) { return parse(read_file(path)); }

std::string SimConfig::to_json() const {
  nlohmann::ordered_json j;
  j["nodes"] = nodes;
  j["cores_per_node"] = cores_per_node;
  j["eta"] = eta;
  j["t_d_ns"] = t_d_ns;
  j["t_i_ns"] = t_i_ns;
  j["max_iter"] = max_iter;
  j["scratch_pad_bytes"] = scratch_pad_bytes;
  j["link_ns"] = {{"cpu_switch", cpu_switch_ns}, {"switch_node", switch_node_ns}};
  j["stack_ns"] = stack_ns;
  j["drop_prob"] = drop_prob;
  j["seed"] = seed;
  j["chase_acc"] = chase_acc;
  j["allocation_policy"] = allocation_policy == AllocationPolicy::Partitioned ? "partitioned" : "uniform";
  j["workspaces_per_logic"] = workspaces_per_logic;
  j["sched_ns"] = sched_ns;
  j["cpu_processing_ns"] = cpu_processing_ns;
  j["host_instruction_ns"] = host_instruction_ns;
  j["max_retransmits"] = max_retransmits;
  j["timeout_ns"] = timeout_ns;
  j["node_capacity"] = node_capacity;
  return j.dump(2);
}

// --- workload spec ------------------------------------------------------------

std::string_view workload_name(WorkloadKind k) {
  switch (k) {
    case WorkloadKind::Upc: return "upc";
    case WorkloadKind::Tc: return "tc";
    case WorkloadKind::Tsv: return "tsv";
    case WorkloadKind::ListWalk: return "listwalk";
  }
  return "?";
}

std::string_view mode_name(Mode m) {
  switch (m) {
    case Mode::Chase: return "chase";
    case Mode::ChaseAcc: return "chase-acc";
    case Mode::Host: return "host";
  }
  return "?";
}

Mode parse_mode(std::string_view s) {
  const auto v = lower_case(std::string(s));
  if (v == "chase") return Mode::Chase;
  if (v == "chase-acc" || v == "chase_acc") return Mode::ChaseAcc;
  if (v == "host") return Mode::Host;
  throw ConfigError("mode must be chase, chase-acc or host, got " + std::string(s));
}

void WorkloadSpec::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(requests >= 1 && requests <= 100000, "requests must be in [1, 100000]");
  need(kind == WorkloadKind::ListWalk || (dataset >= 1 && dataset <= 1000000), "dataset must be in [1, 1000000]");
  need(kind != WorkloadKind::Tc || (scan_length >= 1 && scan_length <= dataset), "scan_length must be in [1, dataset]");
  need(kind != WorkloadKind::Tsv || window_leaves >= 1, "window_leaves must be >= 1");
  need(kind != WorkloadKind::ListWalk || (chain_length >= 1 && chain_length <= 1000000),
       "chain_length must be in [1, 1000000]");
  need(load_factor >= 1, "load_factor must be >= 1");
  need(value_bytes >= 8, "value_bytes must be >= 8");
}

WorkloadSpec WorkloadSpec::parse(const std::string& text) {
  const json j = parse_object(text, "workload");
  reject_unknown(j,
                 {"kind", "dataset", "requests", "scan_length", "window_leaves", "aggregate", "chain_length",
                  "concurrency", "load_factor", "value_bytes", "leaves_per_partition", "verify"},
                 "workload");
  WorkloadSpec w;
  std::string kind = "upc";
  get(j, "kind", kind);
  w.kind = parse_kind(kind);
  get(j, "dataset", w.dataset);
  get(j, "requests", w.requests);
  get(j, "scan_length", w.scan_length);
  get(j, "window_leaves", w.window_leaves);
  if (j.contains("aggregate")) {
    std::string a;
    get(j, "aggregate", a);
    a = lower_case(a);
    if (a == "sum") w.aggregate = Aggregate::Sum;
    else if (a == "min") w.aggregate = Aggregate::Min;
    else if (a == "max") w.aggregate = Aggregate::Max;
    else if (a == "count") w.aggregate = Aggregate::Count;
    else if (a == "avg" || a == "average") {
      w.aggregate = Aggregate::Sum;
      w.average = true;
    } else {
      throw ConfigError("aggregate must be sum, min, max, count or avg");
    }
  }
  get(j, "chain_length", w.chain_length);
  get(j, "concurrency", w.concurrency);
  get(j, "load_factor", w.load_factor);
  get(j, "value_bytes", w.value_bytes);
  get(j, "leaves_per_partition", w.leaves_per_partition);
  get(j, "verify", w.verify);
  w.validate();
  return w;
}

WorkloadSpec WorkloadSpec::load(const std::filesystem::path& path) { return parse(read_file(path)); }

// --- metrics -----------------------------------------------------------------

double RunMetrics::cross_node_fraction() const {
  if (iterations <= rounds) return 0;
  return static_cast<double>(xnode_hops + acc_detours) / static_cast<double>(iterations - rounds);
}

std::string csv_header() {
  return "workload,mode,nodes,eta,seed,requests,mean_ns,p50_ns,p99_ns,throughput_rps,mem_util,logic_util,"
         "xnode_hops,retransmits";
}

std::string csv_row(const RunMetrics& m) {
  std::string s;
  s += m.workload + ',' + m.mode + ',' + std::to_string(m.nodes) + ',' + std::to_string(m.eta) + ',' +
       std::to_string(m.seed) + ',' + std::to_string(m.requests) + ',';
  s += fmt(m.mean_ns, 3) + ',' + fmt(m.p50_ns, 3) + ',' + fmt(m.p99_ns, 3) + ',' + fmt(m.throughput_rps, 1) + ',';
  s += fmt(m.mem_util, 6) + ',' + fmt(m.logic_util, 6) + ',' + std::to_string(m.xnode_hops) + ',' +
       std::to_string(m.retransmits);
  return s;
}

// --- execution ----------------------------------------------------------------

CompiledTraversal compile(const Program& source, const OffloadConfig& cfg) {
  CompiledTraversal c;
  c.analysis = analyze(source, cfg.t_i_ns);
  c.decision = decide(c.analysis, cfg);
  // host fallback runs the same lowered program, so lower whenever the window allows it
  if (c.analysis.window_fits) c.prepared = prepare(lower(source, c.analysis), cfg.t_i_ns);
  return c;
}

std::vector<JobResult> run_batch(OffloadEngine& engine, const std::vector<TraversalJob>& jobs,
                                 std::size_t concurrency, BatchStats* stats) {
  std::vector<JobResult> out(jobs.size());
  if (jobs.empty()) return out;
  SimKernel& k = engine.rack().kernel();

  std::size_t next = 0;
  std::size_t finished = 0;
  std::size_t outstanding = 0;
  const SimTime start = k.now();
  SimTime last = start;
  SimTime end = start;
  long double area = 0;
  auto account = [&] {
    area += static_cast<long double>(outstanding) * static_cast<long double>(k.now() - last);
    last = k.now();
  };

  std::function<void()> issue = [&] {
    const std::size_t i = next++;
    const TraversalJob& job = jobs[i];
    account();
    ++outstanding;
    auto done = [&, i](const JobResult& r) {
      out[i] = r;
      account();
      --outstanding;
      ++finished;
      end = k.now();
      if (next < jobs.size()) issue();
    };
    if (job.host)
      engine.submit_host(job.program, job.cur_ptr, job.scratch, done);
    else
      engine.submit_offloaded(job.program, job.cur_ptr, job.scratch, done);
  };

  const std::size_t initial = std::min(std::max<std::size_t>(1, concurrency), jobs.size());
  for (std::size_t i = 0; i < initial; ++i) issue();
  while (finished < jobs.size() && k.step()) {
  }
  if (finished < jobs.size()) throw std::logic_error("simulation drained with jobs outstanding");

  if (stats) {
    stats->start = start;
    stats->end = end;
    stats->mean_outstanding = end > start ? static_cast<double>(area / static_cast<long double>(end - start)) : 0;
  }
  return out;
}

namespace {

// Distinct keys, never the not-found sentinel.
std::vector<std::uint64_t> unique_keys(std::mt19937_64& rng, std::size_t n) {
  std::unordered_set<std::uint64_t> seen;
  std::vector<std::uint64_t> keys;
  keys.reserve(n);
  while (keys.size() < n) {
    const std::uint64_t k = rng() >> 1;
    if (seen.insert(k).second) keys.push_back(k);
  }
  return keys;
}

std::size_t pick(std::mt19937_64& rng, std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }

struct Prepared {
  StructureHandle handle;
  std::vector<OpParams> ops;
  Program source;
};

Prepared build_workload(const WorkloadSpec& w, MemoryPool& mem, std::mt19937_64& rng) {
  Prepared p;
  BuildOptions opts;
  opts.leaves_per_partition = w.leaves_per_partition;
  switch (w.kind) {
    case WorkloadKind::Upc: {
      opts.load_factor = w.load_factor;
      opts.hash_value_bytes = w.value_bytes;
      const auto keys = unique_keys(rng, w.dataset);
      std::vector<KeyValue> entries;
      for (auto k : keys) entries.push_back({k, rng()});
      p.handle = build(StructureKind::HashMap, entries, mem, opts);
      for (std::size_t i = 0; i < w.requests; ++i) p.ops.push_back(OpParams::find(keys[pick(rng, keys.size())]));
      break;
    }
    case WorkloadKind::Tc: {
      const auto keys = unique_keys(rng, w.dataset);
      std::vector<KeyValue> entries;
      for (auto k : keys) entries.push_back({k, rng()});
      p.handle = build(StructureKind::BTree, entries, mem, opts);
      const auto& sorted = p.handle.entries;
      for (std::size_t i = 0; i < w.requests; ++i) {
        const std::size_t at = pick(rng, sorted.size() - w.scan_length + 1);
        p.ops.push_back(OpParams::scan(sorted[at].key, sorted[at + w.scan_length - 1].key, Aggregate::Count));
      }
      break;
    }
    case WorkloadKind::Tsv: {
      // time-ordered readings: strictly increasing timestamps with jitter
      std::vector<KeyValue> entries;
      std::uint64_t t = 1'000'000;
      for (std::size_t i = 0; i < w.dataset; ++i) {
        t += 1000 + rng() % 1000;
        entries.push_back({t, rng() % 1'000'000});
      }
      p.handle = build(StructureKind::BTree, entries, mem, opts);
      const auto& sorted = p.handle.entries;
      const std::size_t window = std::min(sorted.size(), w.window_leaves * kNodeValues);
      for (std::size_t i = 0; i < w.requests; ++i) {
        const std::size_t at = pick(rng, sorted.size() - window + 1);
        p.ops.push_back(OpParams::scan(sorted[at].key, sorted[at + window - 1].key, w.aggregate));
      }
      break;
    }
    case WorkloadKind::ListWalk: {
      std::vector<KeyValue> entries;
      for (std::size_t i = 0; i < w.chain_length; ++i) entries.push_back({i, 0});
      p.handle = build(StructureKind::List, entries, mem, opts);
      p.ops.assign(w.requests, OpParams::find(w.chain_length - 1));
      break;
    }
  }
  p.source = traversal_program(p.handle.kind, p.handle.layout, p.ops.front());
  return p;
}

double percentile(const std::vector<SimTime>& sorted, double q) {
  if (sorted.empty()) return 0;
  std::size_t rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(sorted.size())));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return ps_to_ns(sorted[rank - 1]);
}

}  // namespace

RunMetrics run_workload(const SimConfig& cfg, const WorkloadSpec& spec, Mode mode, const RunOptions& opts) {
  cfg.validate();
  spec.validate();

  SimKernel kernel;
  Tracer tracer(opts.trace);
  RackConfig rc = cfg.rack();
  rc.chase_acc = mode == Mode::ChaseAcc;
  Rack rack(kernel, rc, opts.trace ? &tracer : nullptr);
  const OffloadConfig oc = cfg.offload();
  OffloadEngine engine(rack, 0, oc);

  std::mt19937_64 rng(cfg.seed);
  Prepared w = build_workload(spec, rack.memory(), rng);
  const CompiledTraversal ct = compile(w.source, oc);
  const bool offload = mode != Mode::Host && ct.decision.offload;
  if (!ct.prepared) throw ConfigError("workload program cannot be lowered: load window exceeds 256 bytes");

  std::vector<TraversalJob> jobs;
  std::vector<std::size_t> job_of(w.ops.size(), SIZE_MAX);
  std::vector<TraversalSpec> specs;
  specs.reserve(w.ops.size());
  for (std::size_t i = 0; i < w.ops.size(); ++i) {
    specs.push_back(gen_traversal(w.handle, w.ops[i]));
    if (specs.back().trivially_done) continue;
    job_of[i] = jobs.size();
    jobs.push_back({ct.prepared, specs.back().init_cur_ptr, specs.back().init_scratch, !offload});
  }

  const std::size_t workspaces = cfg.nodes * cfg.cores_per_node * cfg.eta * cfg.workspaces_per_logic;
  const std::size_t concurrency = spec.concurrency ? spec.concurrency : 4 * workspaces;
  BatchStats bs;
  const auto results = run_batch(engine, jobs, concurrency, &bs);

  RunMetrics m;
  m.workload = std::string(workload_name(spec.kind));
  m.mode = std::string(mode_name(mode));
  m.nodes = cfg.nodes;
  m.eta = cfg.eta;
  m.seed = cfg.seed;
  m.requests = w.ops.size();
  m.offloaded = offload;
  m.eta_measured = ct.analysis.eta_ratio(oc.t_d);

  std::unique_ptr<Oracle> oracle;
  if (spec.verify) oracle = std::make_unique<Oracle>(w.handle);

  long double sum = 0;
  for (std::size_t i = 0; i < w.ops.size(); ++i) {
    SimTime lat = 0;
    bool ok = true;
    Bytes got;
    if (job_of[i] == SIZE_MAX) {
      got = specs[i].init_scratch;
    } else {
      const JobResult& r = results[job_of[i]];
      lat = r.latency();
      ok = r.ok();
      got = r.scratch;
      m.retransmits += r.retransmits;
      m.cpu_sends += r.cpu_sends;
      m.cpu_receives += r.cpu_receives;
      m.rounds += r.rounds;
      m.iterations += r.iterations;
    }
    m.latencies.push_back(lat);
    sum += lat;
    if (!ok) {
      ++m.failed;
      continue;
    }
    ++m.completed;
    if (oracle) {
      got.resize(specs[i].result_bytes);
      if (got != oracle->expect(w.ops[i])) ++m.mismatches;
    }
  }

  auto sorted = m.latencies;
  std::sort(sorted.begin(), sorted.end());
  m.mean_ns = static_cast<double>(sum / m.latencies.size()) / kPsPerNs;
  m.p50_ns = percentile(sorted, 0.50);
  m.p99_ns = percentile(sorted, 0.99);

  const SimTime span = bs.end - bs.start;
  m.sim_seconds = static_cast<double>(span) * 1e-12;
  m.throughput_rps = span > 0 ? static_cast<double>(m.completed) / m.sim_seconds : 0;
  m.mean_concurrency = bs.mean_outstanding;

  if (span > 0) {
    double mem = 0, logic = 0;
    for (std::size_t n = 0; n < rack.node_count(); ++n) {
      Accelerator& acc = rack.accelerator(static_cast<NodeId>(n));
      m.mem_slots += acc.stats().mem_slots;
      for (std::size_t c = 0; c < acc.core_count(); ++c) {
        const double mu = static_cast<double>(acc.mem_busy_until(c, bs.end)) / static_cast<double>(span);
        SimTime lb = 0;
        for (std::size_t l = 0; l < cfg.eta; ++l) lb += acc.logic_busy_until(c, l, bs.end);
        const double lu = static_cast<double>(lb) / (static_cast<double>(span) * cfg.eta);
        m.core_mem_util.push_back(mu);
        m.core_logic_util.push_back(lu);
        mem += mu;
        logic += lu;
      }
    }
    m.mem_util = mem / static_cast<double>(m.core_mem_util.size());
    m.logic_util = logic / static_cast<double>(m.core_logic_util.size());
  }

  const FabricStats& fs = rack.stats();
  m.xnode_hops = fs.xnode_hops;
  m.acc_detours = fs.acc_detours;
  m.net_bytes = fs.bytes;
  return m;
}

UtilizationResult utilization_experiment(std::uint32_t eta, std::uint32_t workspaces_per_logic,
                                         std::size_t resident, double t_d_ns) {
  AcceleratorConfig ac;
  ac.cores = 1;
  ac.core.eta = eta;
  ac.core.t_d = ns_to_ps(t_d_ns);
  ac.core.t_i_ns = eta * t_d_ns / 2;  // two-instruction body: t_c = eta * t_d
  ac.core.max_iter = 0xFFFF;
  ac.core.workspaces_per_logic = workspaces_per_logic;
  ac.core.scratch_bytes = 16;

  SimKernel kernel;
  MemoryNodeStore store(0, 1 << 20);
  const VirtualAddress base = partition_base(0);
  store.map({base, 64 * resident, 0, kPermRW});
  for (std::size_t i = 0; i < resident; ++i) {
    std::uint8_t self[8];
    detail::store_word(self, base + 64 * i, 8);
    store.write(64 * i, self);
  }
  Accelerator acc(0, kernel, store, ac, [](TraversalPacket&&) {});

  Program chase;
  chase.code = {ins::move(Operand::cur_ptr(), Operand::data(0)), ins::next_iter()};
  const Bytes code = prepare(lower(chase, analyze(chase, ac.core.t_i_ns)), ac.core.t_i_ns)->code;
  for (std::size_t i = 0; i < resident; ++i) {
    TraversalPacket p;
    p.request_id = make_request_id(0, i + 1);
    p.cur_ptr = base + 64 * i;
    p.code = code;
    p.scratch.assign(16, 0);
    acc.receive(std::move(p));
  }

  const SimTime cycle = static_cast<SimTime>(1 + eta) * ac.core.t_d;
  const SimTime warm = 50 * cycle;
  UtilizationResult r;
  r.window = 2000 * cycle;
  kernel.run_until(warm);
  const SimTime m0 = acc.mem_busy_until(0, warm);
  SimTime l0 = 0;
  for (std::uint32_t l = 0; l < eta; ++l) l0 += acc.logic_busy_until(0, l, warm);
  kernel.run_until(warm + r.window);
  const SimTime m1 = acc.mem_busy_until(0, warm + r.window);
  SimTime l1 = 0;
  for (std::uint32_t l = 0; l < eta; ++l) l1 += acc.logic_busy_until(0, l, warm + r.window);
  r.mem_util = static_cast<double>(m1 - m0) / static_cast<double>(r.window);
  r.logic_util = static_cast<double>(l1 - l0) / (static_cast<double>(r.window) * eta);
  return r;
}

SweepSpec SweepSpec::parse(const std::string& text) {
  const json j = parse_object(text, "sweep");
  reject_unknown(j, {"config", "workload", "modes", "nodes", "etas", "seeds", "threads"}, "sweep");
  SweepSpec s;
  if (j.contains("config")) s.base = SimConfig::parse(j["config"].dump());
  if (j.contains("workload")) s.workload = WorkloadSpec::parse(j["workload"].dump());
  if (j.contains("modes")) {
    s.modes.clear();
    std::vector<std::string> modes;
    get(j, "modes", modes);
    for (const auto& m : modes) s.modes.push_back(parse_mode(m));
  }
  get(j, "nodes", s.nodes);
  get(j, "etas", s.etas);
  get(j, "seeds", s.seeds);
  get(j, "threads", s.threads);
  return s;
}

std::vector<RunMetrics> run_sweep(const SweepSpec& spec) {
  struct Point {
    SimConfig cfg;
    Mode mode;
  };
  const auto nodes = spec.nodes.empty() ? std::vector<std::size_t>{spec.base.nodes} : spec.nodes;
  const auto etas = spec.etas.empty() ? std::vector<std::uint32_t>{spec.base.eta} : spec.etas;
  const auto seeds = spec.seeds.empty() ? std::vector<std::uint64_t>{spec.base.seed} : spec.seeds;

  std::vector<Point> points;
  for (Mode m : spec.modes)
    for (auto n : nodes)
      for (auto e : etas)
        for (auto s : seeds) {
          SimConfig c = spec.base;
          c.nodes = n;
          c.eta = e;
          c.seed = s;
          c.validate();
          points.push_back({c, m});
        }

  std::vector<RunMetrics> out(points.size());
  std::vector<std::exception_ptr> errors(points.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < points.size();) {
      try {
        out[i] = run_workload(points[i].cfg, spec.workload, points[i].mode);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  unsigned threads = spec.threads ? spec.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, points.size()));
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace pchase
