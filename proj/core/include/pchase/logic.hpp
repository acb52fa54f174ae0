#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "pchase/fault.hpp"
#include "pchase/isa.hpp"
#include "pchase/memory.hpp"

namespace pchase {

enum class Cond : std::uint8_t { Lt, Eq, Gt };

struct PendingStore {
  VirtualAddress addr;
  std::uint8_t width;
  std::uint64_t value;
};

/// Register file of one in-flight traversal.
struct Workspace {
  VirtualAddress cur_ptr = 0;
  Bytes scratch;
  std::array<std::uint8_t, kMaxLoadWindow> data{};
  VirtualAddress data_base = 0;  // cur_ptr the window was loaded from
  std::uint16_t window_start = 0;
  std::uint16_t window_len = 0;
  Cond cond = Cond::Eq;
  std::vector<PendingStore> store_buffer;

  /// Clears every register; scratch is resized to `scratch_bytes` and
  /// initialised from `init` (zero padded).
  void reset(VirtualAddress ptr, std::span<const std::uint8_t> init, std::size_t scratch_bytes);
};

struct LogicOutcome {
  enum class Kind { NextIter, Return, Fault };
  Kind kind = Kind::Return;
  FaultKind fault = FaultKind::None;
  std::size_t executed = 0;
};

/// Runs one iteration body of a deployable program against the loaded data
/// window. DATA reads outside the window fault; STOREs go to the store buffer.
LogicOutcome logic_step(Workspace& ws, const Program& program);

/// Loads `window` bytes into ws.data at [start, start+len) and records the base.
void fill_window(Workspace& ws, VirtualAddress base, std::uint16_t start, std::span<const std::uint8_t> window);

// ---------------------------------------------------------------------------
// Untimed sequential reference interpreter.

enum class RunStatus { Running, Done, IterLimit, Fault, InvalidAddr };

std::string_view run_status_name(RunStatus s);

struct ReferenceResult {
  RunStatus status = RunStatus::Running;
  FaultKind fault = FaultKind::None;
  VirtualAddress cur_ptr = 0;
  Bytes scratch;
  std::uint64_t iterations = 0;
  std::uint64_t instructions = 0;
};

/// Interprets SOURCE programs with per-field memory reads and DEPLOYABLE programs
/// through their LOAD window. Stores are deferred to the end of the iteration
/// in both forms and must target the node the iteration read from.
class ReferenceMachine {
 public:
  /// max_iter == 0 means unlimited. iter_used counts iterations already spent
  /// against max_iter. The scratch pad has `scratch_bytes` capacity (0: the
  /// size of `scratch`); results report the first scratch.size() bytes, the
  /// same prefix a response packet carries.
  ReferenceMachine(const Program& program, MemoryPool& mem, VirtualAddress cur_ptr,
                   std::span<const std::uint8_t> scratch, std::uint32_t max_iter = 0,
                   std::uint32_t iter_used = 0, std::size_t scratch_bytes = 0);

  struct Step {
    bool flushed = false;        // stores flushed before the load
    bool final_flush = false;    // stores flushed after the terminal
    std::size_t instructions = 0;
  };

  /// Executes one iteration. Returns the status after it.
  RunStatus step(Step* info = nullptr);
  RunStatus run();

  RunStatus status() const { return status_; }
  FaultKind fault() const { return fault_; }
  const Workspace& workspace() const { return ws_; }
  std::uint64_t iterations() const { return iterations_; }
  std::uint64_t instructions() const { return instructions_; }
  ReferenceResult result() const;

 private:
  bool flush(std::optional<NodeId> node);
  RunStatus finish(RunStatus s, FaultKind f = FaultKind::None);

  const Program& program_;
  MemoryPool& mem_;
  Workspace ws_;
  std::size_t reported_bytes_;
  std::uint32_t max_iter_;
  std::uint32_t counter_;
  std::optional<NodeId> iter_node_;
  RunStatus status_ = RunStatus::Running;
  FaultKind fault_ = FaultKind::None;
  std::uint64_t iterations_ = 0;
  std::uint64_t instructions_ = 0;
};

ReferenceResult reference_run(const Program& program, MemoryPool& mem, VirtualAddress cur_ptr,
                              std::span<const std::uint8_t> scratch, std::uint32_t max_iter = 0,
                              std::size_t scratch_bytes = 0);

}  // namespace pchase
