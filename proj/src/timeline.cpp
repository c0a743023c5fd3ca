#include "attnkit/timeline.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "attnkit/io.hpp"

namespace attnkit {

const char* resource_name(Resource r) {
  switch (r) {
    case Resource::Cube: return "Cube";
    case Resource::Vector: return "Vector";
    case Resource::Dma: return "Dma";
    case Resource::Link: return "Link";
    case Resource::CpuPool: return "CpuPool";
  }
  return "?";
}

double Timeline::makespan() const {
  double end = 0.0;
  for (const auto& e : events) end = std::max(end, e.end);
  return end;
}

std::int64_t Timeline::sync_count() const {
  std::int64_t n = 0;
  for (const auto& e : events)
    if (e.label == "sync" && e.resource == Resource::Cube) ++n;
  return n;
}

void Timeline::validate() const {
  std::map<std::pair<Resource, int>, std::vector<std::pair<double, double>>> spans;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    if (e.end < e.start) throw std::logic_error("timeline: event ends before it starts");
    spans[{e.resource, e.resource == Resource::Link ? e.link_index : 0}].push_back(
        {e.start, e.end});
    for (std::int32_t dep : e.deps) {
      if (dep < 0 || static_cast<std::size_t>(dep) >= i)
        throw std::logic_error("timeline: dependency must precede the event");
      if (events[dep].end > e.start)
        throw std::logic_error("timeline: event starts before its dependency ends");
    }
  }
  for (auto& [key, list] : spans) {
    std::sort(list.begin(), list.end());
    for (std::size_t i = 1; i < list.size(); ++i) {
      if (list[i].first < list[i - 1].second)
        throw std::logic_error(std::string("timeline: overlapping events on ") +
                               resource_name(key.first));
    }
  }
}

std::string Timeline::to_json() const {
  nlohmann::json out;
  out["schema_version"] = 1;
  out["makespan_s"] = makespan();
  out["sync_count"] = sync_count();
  auto& ev = out["events"];
  ev = nlohmann::json::array();
  for (const auto& e : events) {
    nlohmann::json je;
    je["resource"] = resource_name(e.resource);
    if (e.resource == Resource::Link) je["link"] = e.link_index;
    je["label"] = e.label;
    je["start_s"] = e.start;
    je["end_s"] = e.end;
    if (e.bytes) je["bytes"] = e.bytes;
    if (e.flops) je["flops"] = e.flops;
    je["deps"] = e.deps;
    ev.push_back(std::move(je));
  }
  return out.dump(2) + "\n";
}

double& TimelineBuilder::free_slot(Resource r, int link_index) {
  switch (r) {
    case Resource::Cube: return cube_free_;
    case Resource::Vector: return vector_free_;
    case Resource::Dma: return dma_free_;
    case Resource::CpuPool: return cpu_free_;
    case Resource::Link:
      if (link_index < 0) throw std::invalid_argument("timeline: bad link index");
      if (static_cast<std::size_t>(link_index) >= link_free_.size())
        link_free_.resize(link_index + 1, 0.0);
      return link_free_[link_index];
  }
  throw std::invalid_argument("timeline: bad resource");
}

double TimelineBuilder::ready_time(Resource r, int link_index,
                                   std::span<const std::int32_t> deps) const {
  double t = 0.0;
  switch (r) {
    case Resource::Cube: t = cube_free_; break;
    case Resource::Vector: t = vector_free_; break;
    case Resource::Dma: t = dma_free_; break;
    case Resource::CpuPool: t = cpu_free_; break;
    case Resource::Link:
      t = static_cast<std::size_t>(link_index) < link_free_.size() ? link_free_[link_index]
                                                                   : 0.0;
      break;
  }
  for (std::int32_t dep : deps) t = std::max(t, timeline_.events[dep].end);
  return t;
}

std::int32_t TimelineBuilder::add(Resource r, int link_index, std::string label,
                                  double duration, std::span<const std::int32_t> deps,
                                  std::int64_t bytes, std::int64_t flops) {
  if (duration < 0) throw std::invalid_argument("timeline: negative duration");
  const double start = ready_time(r, link_index, deps);
  const double end = start + duration;
  free_slot(r, link_index) = end;
  timeline_.events.push_back(TimelineEvent{r, link_index, std::move(label), start, end,
                                           bytes, flops,
                                           {deps.begin(), deps.end()}});
  return static_cast<std::int32_t>(timeline_.events.size() - 1);
}

std::int32_t TimelineBuilder::add_sync(double duration,
                                       std::span<const std::int32_t> deps) {
  double start = std::max(cube_free_, vector_free_);
  for (std::int32_t dep : deps) start = std::max(start, timeline_.events[dep].end);
  const double end = start + duration;
  cube_free_ = vector_free_ = end;
  timeline_.events.push_back(TimelineEvent{Resource::Cube, 0, "sync", start, end, 0, 0,
                                           {deps.begin(), deps.end()}});
  const auto idx = static_cast<std::int32_t>(timeline_.events.size() - 1);
  timeline_.events.push_back(TimelineEvent{Resource::Vector, 0, "sync", start, end, 0, 0,
                                           {deps.begin(), deps.end()}});
  return idx;
}

}  // namespace attnkit
