#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace attnkit {

enum class Resource { Cube, Vector, Dma, Link, CpuPool };

const char* resource_name(Resource r);

struct TimelineEvent {
  Resource resource = Resource::Cube;
  int link_index = 0;  // meaningful for Resource::Link only
  std::string label;
  double start = 0.0;
  double end = 0.0;
  std::int64_t bytes = 0;
  std::int64_t flops = 0;
  std::vector<std::int32_t> deps;  // indices of prerequisite events
};

// Ordered event trace produced by the simulators. Immutable once built.
struct Timeline {
  std::vector<TimelineEvent> events;

  double makespan() const;
  // Number of Cube<->Vector handoffs (each emits a stall event on both units).
  std::int64_t sync_count() const;
  // Checks that events on one resource never overlap and that every event
  // starts at or after all of its dependencies end. Throws on violation.
  void validate() const;
  std::string to_json() const;
};

// Greedy list scheduler: tasks are placed in call order, each starting at
// the max of its resources' free times and its dependencies' end times.
// Durations only ever delay later events, so makespans are monotone in
// every rate parameter.
class TimelineBuilder {
 public:
  // Returns the event index usable as a dependency handle.
  std::int32_t add(Resource r, int link_index, std::string label, double duration,
                   std::span<const std::int32_t> deps, std::int64_t bytes = 0,
                   std::int64_t flops = 0);

  // A handoff stall occupying both Cube and Vector for `duration`. Emits two
  // events with an identical span; the returned index is valid for deps.
  std::int32_t add_sync(double duration, std::span<const std::int32_t> deps);

  double event_end(std::int32_t index) const { return timeline_.events[index].end; }
  Timeline finish() { return std::move(timeline_); }

 private:
  double ready_time(Resource r, int link_index,
                    std::span<const std::int32_t> deps) const;
  double& free_slot(Resource r, int link_index);

  Timeline timeline_;
  double cube_free_ = 0.0;
  double vector_free_ = 0.0;
  double dma_free_ = 0.0;
  double cpu_free_ = 0.0;
  std::vector<double> link_free_;
};

}  // namespace attnkit
