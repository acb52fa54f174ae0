#include "pchase/trace.hpp"

#include "json.hpp"

namespace pchase {

void Tracer::event(SimTime t, int node, int core, std::string_view unit, std::string_view event,
                   std::uint64_t request_id, std::uint64_t iteration) {
  if (!out_) return;
  nlohmann::ordered_json j;
  j["t"] = t;
  j["node"] = node;
  j["core"] = core;
  j["unit"] = unit;
  j["event"] = event;
  j["request_id"] = request_id;
  j["iteration"] = iteration;
  *out_ << j.dump() << '\n';
  ++lines_;
}

}  // namespace pchase
