#pragma once

#include <cstdint>
#include <ostream>
#include <string_view>

#include "pchase/sim_kernel.hpp"

namespace pchase {

inline constexpr int kTraceCpu = -1;
inline constexpr int kTraceSwitch = -2;

/// JSON-lines event sink. One object per line:
/// {"t": ps, "node": n, "core": c, "unit": u, "event": e, "request_id": id, "iteration": i}
/// node is -1 for the CPU endpoint and -2 for the switch.
class Tracer {
 public:
  explicit Tracer(std::ostream* out = nullptr) : out_(out) {}

  bool enabled() const { return out_ != nullptr; }
  void set_output(std::ostream* out) { out_ = out; }
  std::uint64_t lines() const { return lines_; }

  void event(SimTime t, int node, int core, std::string_view unit, std::string_view event,
             std::uint64_t request_id, std::uint64_t iteration);

 private:
  std::ostream* out_;
  std::uint64_t lines_ = 0;
};

}  // namespace pchase
