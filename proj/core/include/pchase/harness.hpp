#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pchase/datastructs.hpp"
#include "pchase/offload.hpp"
#include "pchase/rack.hpp"

namespace pchase {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Topology and timing for one simulation, as read from a config JSON file.
struct SimConfig {
  std::size_t nodes = 1;
  std::uint32_t cores_per_node = 2;
  std::uint32_t eta = 1;
  double t_d_ns = 120;
  double t_i_ns = 7.0 / 6.0;
  std::uint32_t max_iter = 512;
  std::size_t scratch_pad_bytes = kDefaultScratchBytes;
  double cpu_switch_ns = 2285;  // "link_ns" sets both links
  double switch_node_ns = 2285;
  double stack_ns = 430;
  double drop_prob = 0;
  std::uint64_t seed = 1;
  bool chase_acc = false;
  AllocationPolicy allocation_policy = AllocationPolicy::Uniform;

  std::uint32_t workspaces_per_logic = 2;
  double sched_ns = 4;
  double cpu_processing_ns = 1000;
  double host_instruction_ns = 0.2;
  std::uint32_t max_retransmits = 3;
  double timeout_ns = 0;  // 0: derived per program
  std::uint64_t node_capacity = std::uint64_t{1} << 34;

  void validate() const;
  RackConfig rack() const;
  OffloadConfig offload() const;

  static SimConfig parse(const std::string& json_text);
  static SimConfig load(const std::filesystem::path& path);
  std::string to_json() const;
};

enum class WorkloadKind { Upc, Tc, Tsv, ListWalk };
enum class Mode { Chase, ChaseAcc, Host };

std::string_view workload_name(WorkloadKind k);
std::string_view mode_name(Mode m);
Mode parse_mode(std::string_view s);  // chase | chase-acc | host

struct WorkloadSpec {
  WorkloadKind kind = WorkloadKind::Upc;
  std::size_t dataset = 10000;
  std::size_t requests = 1000;
  std::size_t scan_length = 64;     // TC: entries per scan
  std::size_t window_leaves = 64;   // TSV: leaves per window
  Aggregate aggregate = Aggregate::Sum;
  bool average = false;             // TSV: report sum/count, finalised on the host
  std::size_t chain_length = 16;    // LISTWALK
  std::size_t concurrency = 0;      // 0: 4x total workspaces
  std::uint32_t load_factor = 4;    // UPC
  std::uint16_t value_bytes = 32;   // UPC
  std::uint32_t leaves_per_partition = 0;
  bool verify = true;               // compare every result with the oracle

  void validate() const;
  static WorkloadSpec parse(const std::string& json_text);
  static WorkloadSpec load(const std::filesystem::path& path);
};

struct RunMetrics {
  std::string workload;
  std::string mode;
  std::size_t nodes = 0;
  std::uint32_t eta = 0;
  std::uint64_t seed = 0;
  std::size_t requests = 0;
  std::size_t completed = 0;  // finished with status Done
  std::size_t failed = 0;
  std::size_t mismatches = 0;
  double mean_ns = 0;
  double p50_ns = 0;
  double p99_ns = 0;
  double throughput_rps = 0;
  double mem_util = 0;
  double logic_util = 0;
  std::vector<double> core_mem_util;  // node-major
  std::vector<double> core_logic_util;
  std::uint64_t xnode_hops = 0;
  std::uint64_t acc_detours = 0;
  std::uint64_t retransmits = 0;
  std::uint64_t net_bytes = 0;
  std::uint64_t cpu_sends = 0;
  std::uint64_t cpu_receives = 0;
  std::uint64_t rounds = 0;
  std::uint64_t iterations = 0;
  std::uint64_t mem_slots = 0;
  double mean_concurrency = 0;  // time-averaged outstanding requests
  double sim_seconds = 0;
  double eta_measured = 0;      // t_c / t_d of the workload's program(s)
  bool offloaded = true;
  std::vector<SimTime> latencies;  // ps, per request in issue order

  /// Share of pointer hops (iterations after the first of each round) that
  /// crossed to another memory node.
  double cross_node_fraction() const;
};

std::string csv_header();
std::string csv_row(const RunMetrics& m);

/// A SOURCE program compiled for a configuration.
struct CompiledTraversal {
  OffloadAnalysis analysis;
  Decision decision;
  std::shared_ptr<const PreparedProgram> prepared;
};

CompiledTraversal compile(const Program& source, const OffloadConfig& cfg);

struct TraversalJob {
  std::shared_ptr<const PreparedProgram> program;
  VirtualAddress cur_ptr = kNullAddress;
  Bytes scratch;
  bool host = false;
};

struct BatchStats {
  SimTime start = 0;
  SimTime end = 0;
  double mean_outstanding = 0;  // time-averaged
};

/// Runs jobs closed-loop with at most `concurrency` outstanding. Results are
/// indexed like `jobs`.
std::vector<JobResult> run_batch(OffloadEngine& engine, const std::vector<TraversalJob>& jobs,
                                 std::size_t concurrency, BatchStats* stats = nullptr);

struct RunOptions {
  std::ostream* trace = nullptr;
};

RunMetrics run_workload(const SimConfig& cfg, const WorkloadSpec& spec, Mode mode, const RunOptions& opts = {});

struct UtilizationResult {
  double mem_util = 0;
  double logic_util = 0;  // mean over logic pipelines
  SimTime window = 0;
};

/// One core fed `resident` endless pointer chases whose per-iteration logic
/// time is exactly eta * t_d; utilizations measured after warm-up.
UtilizationResult utilization_experiment(std::uint32_t eta, std::uint32_t workspaces_per_logic,
                                         std::size_t resident, double t_d_ns = 120);

struct SweepSpec {
  SimConfig base;
  WorkloadSpec workload;
  std::vector<Mode> modes{Mode::Chase};
  std::vector<std::size_t> nodes;
  std::vector<std::uint32_t> etas;
  std::vector<std::uint64_t> seeds;
  unsigned threads = 0;  // 0: hardware concurrency

  static SweepSpec parse(const std::string& json_text);
};

/// Cartesian product over modes x nodes x etas x seeds. Rows come back in
/// that nesting order no matter how many threads ran them.
std::vector<RunMetrics> run_sweep(const SweepSpec& spec);

}  // namespace pchase
