#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "attnkit/hardware.hpp"
#include "attnkit/timeline.hpp"

namespace attnkit {

struct AttnShape {
  std::int64_t batch = 1;
  std::int64_t seq = 1024;
  std::int64_t heads = 1;
  std::int64_t head_dim = 128;
};

// Cost-model simulators for blocked attention on a decoupled matrix/vector
// architecture. Each level-2 block runs three timed stages - QK on Cube,
// exp + softmax-factor update on Vector, PV on Cube - and every handoff
// between the units stalls both of them for sync_latency. The unified
// scheme hands off per level-2 block (2 syncs each); the two-level scheme
// hands off per level-1 block and streams level-2 chunks through
// double-buffered DMA transfers instead, so transfers overlap compute.
// Stored elements are 2 bytes wide in the capacity and transfer accounting.

Timeline simulate_unified(const AttnShape& shape, std::int64_t b_q, std::int64_t b_kv,
                          const HardwareModel& hw);

Timeline simulate_two_level(const AttnShape& shape, std::int64_t b_q, std::int64_t b_kv1,
                            std::int64_t b_kv2, const HardwareModel& hw);

struct TilingComparison {
  std::int64_t seq = 0;
  double unified_makespan = 0.0;
  double two_level_makespan = 0.0;
  double reduction_pct = 0.0;  // 100 * (1 - two_level / unified)
  std::int64_t unified_syncs = 0;
  std::int64_t two_level_syncs = 0;
};

std::vector<TilingComparison> compare_tilings(std::span<const std::int64_t> seqs,
                                              const AttnShape& base, std::int64_t b_q,
                                              std::int64_t b_kv1, std::int64_t b_kv2,
                                              const HardwareModel& hw);

}  // namespace attnkit
