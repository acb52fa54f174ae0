#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

namespace pchase {

/// Simulated time in picoseconds.
using SimTime = std::int64_t;

inline constexpr SimTime kPsPerNs = 1000;

inline SimTime ns_to_ps(double ns) { return static_cast<SimTime>(std::llround(ns * kPsPerNs)); }
inline double ps_to_ns(SimTime ps) { return static_cast<double>(ps) / kPsPerNs; }

/// Single-threaded event queue. Events run in (time, insertion sequence) order.
class SimKernel {
 public:
  using Action = std::function<void()>;

  SimTime now() const { return now_; }

  void schedule_at(SimTime t, Action a) {
    if (t < now_) throw std::logic_error("event scheduled in the past");
    heap_.push_back(Event{t, seq_++, std::move(a)});
    std::push_heap(heap_.begin(), heap_.end(), Later{});
  }
  void schedule_after(SimTime delay, Action a) { schedule_at(now_ + delay, std::move(a)); }

  bool empty() const { return heap_.empty(); }
  std::size_t pending() const { return heap_.size(); }
  std::uint64_t executed() const { return executed_; }
  SimTime next_time() const { return heap_.empty() ? now_ : heap_.front().time; }

  /// Runs one event; false if the queue was empty.
  bool step() {
    if (heap_.empty()) return false;
    std::pop_heap(heap_.begin(), heap_.end(), Later{});
    Event ev = std::move(heap_.back());
    heap_.pop_back();
    now_ = ev.time;
    ++executed_;
    ev.action();
    return true;
  }

  std::size_t run() {
    std::size_t n = 0;
    while (step()) ++n;
    return n;
  }

  /// Runs every event with time <= t_end. The clock stays at the last executed event.
  std::size_t run_until(SimTime t_end) {
    std::size_t n = 0;
    while (!heap_.empty() && heap_.front().time <= t_end) {
      step();
      ++n;
    }
    return n;
  }

 private:
  struct Event {
    SimTime time;
    std::uint64_t seq;
    Action action;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
  };

  SimTime now_ = 0;
  std::uint64_t seq_ = 0;
  std::uint64_t executed_ = 0;
  std::vector<Event> heap_;
};

}  // namespace pchase
