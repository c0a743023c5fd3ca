#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "attnkit/hardware.hpp"
#include "attnkit/tensor.hpp"
#include "attnkit/timeline.hpp"

namespace attnkit {

// Tensor-parallel layout: heads are sharded across `devices`; the fused
// attention+linear output is summed with per-block AllReduce operations
// overlapped with the next block's compute. block_rows partitions the
// B*S rows; the first block is never larger than the others.
struct ClusterConfig {
  int devices = 1;
  std::vector<std::int64_t> block_rows;

  void validate(std::int64_t total_rows) const;
};

// Ring AllReduce cost for `bytes` per device. Infinite bandwidth models free
// communication and costs exactly zero. Single device: no communication.
double ring_allreduce_seconds(std::int64_t bytes, int devices, const HardwareModel& hw);

// Per-device partial outputs: device d computes attention over its head
// shard followed by its W_O row-shard, yielding a full [B*S, H1] partial.
std::vector<TensorD> tp_partial_outputs(const TensorD& q, const TensorD& k,
                                        const TensorD& v, const TensorD& w_o,
                                        int devices);

// AllReduce-sum of the partials in fixed device order 0..n-1; equals the
// unsharded attention-then-linear result up to accumulation rounding.
TensorD tp_attention_linear(const TensorD& q, const TensorD& k, const TensorD& v,
                            const TensorD& w_o, int devices);

struct AllReduceRun {
  Timeline timeline;
  TensorD result;  // [rows, H1]
};

// Blocked schedule: per block, a compute event then a B-allreduce on a Link;
// link traffic overlaps the next block's compute. The numeric reduction is
// per-element over devices in order 0..n-1, so the result is bitwise equal
// to a monolithic AllReduce of the same partials.
AllReduceRun tiled_allreduce(const std::vector<TensorD>& partials,
                             const ClusterConfig& cluster, const HardwareModel& hw,
                             std::int64_t flops_per_row);

AllReduceRun monolithic_allreduce(const std::vector<TensorD>& partials, int devices,
                                  const HardwareModel& hw, std::int64_t flops_per_row);

// Cost-only variants used for shape sweeps (no tensors materialized).
Timeline tiled_allreduce_timeline(std::span<const std::int64_t> block_rows,
                                  std::int64_t flops_per_row, std::int64_t bytes_per_row,
                                  int devices, const HardwareModel& hw);
Timeline monolithic_allreduce_timeline(std::int64_t rows, std::int64_t flops_per_row,
                                       std::int64_t bytes_per_row, int devices,
                                       const HardwareModel& hw);

// Splits total_rows into n_blocks so the first block's AllReduce hides under
// one even block's compute; the rest is split evenly. All blocks >= 1 row
// and the first block never exceeds the even share.
std::vector<std::int64_t> choose_block_rows(std::int64_t total_rows, int n_blocks,
                                            std::int64_t flops_per_row,
                                            std::int64_t bytes_per_row, int devices,
                                            const HardwareModel& hw);

struct AllReduceComparison {
  std::int64_t seq = 0;
  double baseline_ms = 0.0;
  double tiled_ms = 0.0;
  double speedup = 0.0;
};

// Fused attention+linear cost sweep across sequence lengths. Per-device
// work: 4*S*D*(N/n) attention FLOPs plus 2*(H1/n)*H1 linear FLOPs per row;
// each row contributes H1 2-byte elements to the AllReduce payload.
std::vector<AllReduceComparison> compare_allreduce(std::span<const std::int64_t> seqs,
                                                   std::int64_t batch, std::int64_t heads,
                                                   std::int64_t head_dim, int devices,
                                                   int n_blocks, const HardwareModel& hw);

}  // namespace attnkit
