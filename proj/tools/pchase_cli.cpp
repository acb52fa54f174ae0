#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "pchase/assembler.hpp"
#include "pchase/codec.hpp"
#include "pchase/harness.hpp"

using namespace pchase;

namespace {

// Input problems (bad files, configs, programs) exit 2 like usage errors.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Bytes parse_hex(std::string s) {
  if (s.rfind("0x", 0) == 0) s = s.substr(2);
  if (s.size() % 2) throw InputError("hex string has odd length");
  Bytes out;
  for (std::size_t i = 0; i < s.size(); i += 2) {
    unsigned v = 0;
    if (std::sscanf(s.c_str() + i, "%2x", &v) != 1) throw InputError("bad hex at offset " + std::to_string(i));
    out.push_back(static_cast<std::uint8_t>(v));
  }
  return out;
}

std::string to_hex(const Bytes& b) {
  std::string s;
  char buf[3];
  for (auto x : b) {
    std::snprintf(buf, sizeof buf, "%02x", x);
    s += buf;
  }
  return s;
}

Program load_program(const std::string& path) {
  const std::string text = slurp(path);
  Program p;
  try {
    p = assemble(text);
  } catch (const AsmError& e) {
    throw InputError(path + ":" + e.what());
  }
  const auto report = validate(p);
  if (!report.ok()) throw InputError(path + ": " + report.to_string());
  return p;
}

StructureKind parse_structure(const std::string& s) {
  if (s == "list") return StructureKind::List;
  if (s == "hash") return StructureKind::HashMap;
  if (s == "btree") return StructureKind::BTree;
  if (s == "map") return StructureKind::RbMap;
  if (s == "avl") return StructureKind::Avl;
  throw InputError("unknown structure " + s);
}

int cmd_assemble(const std::string& in, const std::string& out) {
  const Bytes code = encode(load_program(in));
  std::ofstream os(out, std::ios::binary);
  if (!os) throw InputError("cannot write " + out);
  os.write(reinterpret_cast<const char*>(code.data()), static_cast<std::streamsize>(code.size()));
  return 0;
}

int cmd_disasm(const std::string& in) {
  const std::string raw = slurp(in);
  Program p;
  try {
    p = decode(std::span(reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size()));
  } catch (const DecodeError& e) {
    throw InputError(in + ": " + e.what());
  }
  std::cout << disassemble(p);
  return 0;
}

struct RunArgs {
  std::string config, program, scratch, dataset, trace, dump_dir;
  std::string cur_ptr;
  std::optional<std::uint64_t> key;
  bool host = false;
};

int cmd_run(const RunArgs& a) {
  const SimConfig cfg = a.config.empty() ? SimConfig{} : SimConfig::load(a.config);
  std::ofstream trace_out;
  if (!a.trace.empty()) {
    trace_out.open(a.trace);
    if (!trace_out) throw InputError("cannot write " + a.trace);
  }
  Tracer tracer(a.trace.empty() ? nullptr : &trace_out);
  SimKernel kernel;
  Rack rack(kernel, cfg.rack(), a.trace.empty() ? nullptr : &tracer);
  OffloadEngine engine(rack, 0, cfg.offload());

  std::optional<StructureHandle> handle;
  if (!a.dataset.empty()) {
    nlohmann::json d;
    try {
      d = nlohmann::json::parse(slurp(a.dataset));
      BuildOptions opts;
      opts.buckets = d.value("buckets", 0u);
      opts.load_factor = d.value("load_factor", 4u);
      opts.hash_value_bytes = d.value("value_bytes", std::uint16_t{32});
      std::vector<KeyValue> entries;
      for (const auto& e : d.at("entries")) entries.push_back({e.at(0).get<std::uint64_t>(), e.at(1).get<std::uint64_t>()});
      handle = build(parse_structure(d.at("structure").get<std::string>()), entries, rack.memory(), opts);
    } catch (const nlohmann::json::exception& e) {
      throw InputError(a.dataset + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      throw InputError(a.dataset + ": " + e.what());
    }
  }

  Program source;
  VirtualAddress cur_ptr = 0;
  Bytes scratch;
  if (a.key) {
    if (!handle) throw InputError("--key needs --dataset");
    const bool ordered = handle->kind == StructureKind::RbMap || handle->kind == StructureKind::Avl;
    const TraversalSpec t =
        gen_traversal(*handle, ordered ? OpParams::lower_bound(*a.key) : OpParams::find(*a.key));
    source = t.program;
    cur_ptr = t.init_cur_ptr;
    scratch = t.init_scratch;
  }
  if (!a.program.empty()) source = load_program(a.program);
  if (source.empty()) throw InputError("nothing to run: give --program or --dataset with --key");
  if (!a.cur_ptr.empty()) {
    try {
      std::size_t used = 0;
      cur_ptr = std::stoull(a.cur_ptr, &used, 0);
      if (used != a.cur_ptr.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::logic_error&) {
      throw InputError("bad --cur-ptr " + a.cur_ptr);
    }
  }
  if (!a.scratch.empty()) scratch = parse_hex(a.scratch);
  CompiledTraversal ct;
  if (source.form() == ProgramForm::Deployable) {
    // already lowered: no gate, the caller chose the window
    ct.decision.offload = true;
    ct.prepared = prepare(source, cfg.t_i_ns);
  } else {
    ct = compile(source, cfg.offload());
  }
  if (!ct.prepared) throw InputError("load window exceeds 256 bytes");
  const bool host = a.host || !ct.decision.offload;
  const JobResult r = host ? execute_host(engine, ct.prepared, cur_ptr, scratch)
                           : execute_offloaded(engine, ct.prepared, cur_ptr, scratch);

  std::cout << "mode " << (host ? "host" : "offload");
  if (!ct.decision.offload) std::cout << " (" << ct.decision.reason << ")";
  std::cout << "\nstatus " << job_status_name(r.status) << "\nlatency_ns " << ps_to_ns(r.latency())
            << "\niterations " << r.iterations << "\nrounds " << r.rounds << "\nretransmits " << r.retransmits
            << "\ncur_ptr 0x" << std::hex << r.cur_ptr << std::dec << "\nscratch " << to_hex(r.scratch) << "\n";

  if (!a.dump_dir.empty()) {
    std::filesystem::create_directories(a.dump_dir);
    for (std::size_t n = 0; n < rack.memory().node_count(); ++n)
      rack.memory().node(static_cast<NodeId>(n)).dump(std::filesystem::path(a.dump_dir) / ("node" + std::to_string(n)));
  }

  switch (r.status) {
    case JobStatus::Done: return 0;
    case JobStatus::Fault: std::cerr << "fault: " << fault_name(r.fault) << "\n"; return 1;
    case JobStatus::InvalidAddr: std::cerr << "fault: invalid-addr\n"; return 1;
    default: std::cerr << "fault: " << job_status_name(r.status) << "\n"; return 1;
  }
}

void write_csv(const std::string& path, const std::vector<RunMetrics>& rows) {
  std::ostream* os = &std::cout;
  std::ofstream file;
  if (!path.empty() && path != "-") {
    file.open(path);
    if (!file) throw InputError("cannot write " + path);
    os = &file;
  }
  *os << csv_header() << "\n";
  for (const auto& m : rows) *os << csv_row(m) << "\n";
}

int cmd_bench(const std::string& config, const std::string& workload, const std::string& mode,
              const std::string& out, const std::string& trace) {
  const SimConfig cfg = config.empty() ? SimConfig{} : SimConfig::load(config);
  const WorkloadSpec w = WorkloadSpec::load(workload);
  std::ofstream trace_out;
  RunOptions opts;
  if (!trace.empty()) {
    trace_out.open(trace);
    if (!trace_out) throw InputError("cannot write " + trace);
    opts.trace = &trace_out;
  }
  const RunMetrics m = run_workload(cfg, w, parse_mode(mode), opts);
  write_csv(out, {m});
  if (m.failed || m.mismatches) {
    std::cerr << m.failed << " requests failed, " << m.mismatches << " results differ from the oracle\n";
    return 1;
  }
  return 0;
}

int cmd_sweep(const std::string& spec, const std::string& out, unsigned threads) {
  SweepSpec s = SweepSpec::parse(slurp(spec));
  if (threads) s.threads = threads;
  write_csv(out, run_sweep(s));
  return 0;
}

int cmd_utilization(std::uint32_t eta, std::uint32_t workspaces, std::size_t resident, double t_d) {
  const UtilizationResult r = utilization_experiment(eta, workspaces, resident, t_d);
  std::printf("eta %u workspaces_per_logic %u resident %zu mem_util %.4f logic_util %.4f\n", eta, workspaces,
              resident, r.mem_util, r.logic_util);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pointer-chasing offload simulator"};
  app.require_subcommand(1);

  std::string in, out;
  auto* assemble_cmd = app.add_subcommand("assemble", "Assemble a program to its binary encoding");
  assemble_cmd->add_option("input", in, "assembly file")->required();
  assemble_cmd->add_option("output", out, "binary output")->required();

  std::string disasm_in;
  auto* disasm_cmd = app.add_subcommand("disasm", "Disassemble a binary program");
  disasm_cmd->add_option("input", disasm_in, "binary file")->required();

  RunArgs run;
  std::uint64_t key = 0;
  auto* run_cmd = app.add_subcommand("run", "Run one traversal and report its simulated latency");
  run_cmd->add_option("--config", run.config, "config JSON");
  run_cmd->add_option("--program", run.program, "source-form assembly");
  run_cmd->add_option("--cur-ptr", run.cur_ptr, "initial cur_ptr (decimal or 0x hex)");
  run_cmd->add_option("--scratch", run.scratch, "initial scratch pad as hex");
  run_cmd->add_option("--dataset", run.dataset, "structure to build before running (JSON)");
  auto* key_opt = run_cmd->add_option("--key", key, "generate program and init state for this key");
  run_cmd->add_option("--trace", run.trace, "JSON-lines trace output");
  run_cmd->add_option("--dump-dir", run.dump_dir, "write memory node images here");
  run_cmd->add_flag("--host", run.host, "force host execution");

  std::string config, workload, mode = "chase", csv = "-", trace;
  auto* bench_cmd = app.add_subcommand("bench", "Run a workload and write a metrics CSV");
  bench_cmd->add_option("--config", config, "config JSON");
  bench_cmd->add_option("--workload", workload, "workload JSON")->required();
  bench_cmd->add_option("--mode", mode, "chase | chase-acc | host");
  bench_cmd->add_option("--out", csv, "CSV output (- for stdout)");
  bench_cmd->add_option("--trace", trace, "JSON-lines trace output");

  std::string sweep_spec, sweep_out = "-";
  unsigned threads = 0;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a cartesian parameter sweep");
  sweep_cmd->add_option("--spec", sweep_spec, "sweep JSON")->required();
  sweep_cmd->add_option("--out", sweep_out, "CSV output (- for stdout)");
  sweep_cmd->add_option("--threads", threads, "worker threads (default: all cores)");

  std::uint32_t eta = 1, workspaces = 2;
  std::size_t resident = 2;
  double t_d = 120;
  auto* util_cmd = app.add_subcommand("utilization", "Pipeline utilisation for synthetic t_c = eta*t_d chases");
  util_cmd->add_option("--eta", eta)->check(CLI::Range(1, 64));
  util_cmd->add_option("--workspaces", workspaces, "workspaces per logic pipeline")->check(CLI::Range(1, 64));
  util_cmd->add_option("--resident", resident, "concurrent traversals")->check(CLI::Range(1, 4096));
  util_cmd->add_option("--t-d", t_d, "memory access time in ns");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*assemble_cmd) return cmd_assemble(in, out);
    if (*disasm_cmd) return cmd_disasm(disasm_in);
    if (*run_cmd) {
      if (*key_opt) run.key = key;
      return cmd_run(run);
    }
    if (*bench_cmd) return cmd_bench(config, workload, mode, csv, trace);
    if (*sweep_cmd) return cmd_sweep(sweep_spec, sweep_out, threads);
    if (*util_cmd) return cmd_utilization(eta, workspaces, resident, t_d);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
