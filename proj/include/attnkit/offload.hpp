#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "attnkit/hardware.hpp"
#include "attnkit/tensor.hpp"
#include "attnkit/timeline.hpp"

namespace attnkit {

// Model dimensions for the memory planner; scalars are stored 2 bytes wide.
struct ModelConfig {
  std::int64_t layers = 40;       // L
  std::int64_t hidden = 5120;     // H1 = heads * head_dim
  std::int64_t mlp_hidden = 20480;// H2
  std::int64_t heads = 40;        // N
  std::int64_t head_dim = 128;    // D
  std::int64_t vocab = 40000;     // V
  std::int64_t batch = 1;         // B
  std::int64_t prompt_len = 4096; // S
  std::int64_t output_len = 64;   // O
  std::int64_t bytes_per_scalar = 2;

  void validate() const;
};

ModelConfig load_model_config(const std::filesystem::path& json_path);

// Host/device split of the per-layer KV cache: the first l_cpu layers keep
// their KV on the host, the remaining l_gpu layers on the device.
struct MemoryPlan {
  std::int64_t l_gpu = 0;
  std::int64_t l_cpu = 0;
  std::int64_t formula_l_gpu = 0;    // unclamped quotient, may be < 0 or > L
  std::int64_t weight_bytes = 0;     // M_w  = L(8 H1^2 + 4 H1 H2)
  std::int64_t kv_bytes_per_layer = 0;  // M_kv = 4 B H1 (S+O) / n (per device)
  std::int64_t mid_bytes = 0;        // M_mid = 6 B S H1 / n (per device)
  std::int64_t vocab_bytes = 0;      // M_vocab = V H1 (per device, literal)
  std::int64_t vocab_bytes_widened = 0;  // V H1 * bytes_per_scalar, reported only
  std::int64_t cpu_kv_bytes = 0;     // l_cpu * 4 B H1 (S+O), host total
  bool feasible = false;

  std::string to_json() const;
};

// Splits the KV cache between host and device memory. l_gpu comes from
//   floor((n M_GPU - L(8H1^2+4H1H2) - 6BSH1 - nVH1) / (4BH1(S+O)))
// clamped to [0, L]; the plan is feasible when the unclamped quotient is
// non-negative and the host share fits M_CPU.
MemoryPlan plan(const ModelConfig& model, std::int64_t m_gpu_bytes,
                std::int64_t m_cpu_bytes, int devices);

// Decode attention of a single query per (batch, head) against a cache
// slice stored as [B, S_cached, H1]. Work is partitioned over (batch, head)
// pairs across workers with a fixed per-head reduction order, so the result
// is bitwise independent of the worker count.
TensorD cpu_decode_attention(const TensorD& q, const TensorD& cache_k,
                             const TensorD& cache_v, int workers);

// One row of the per-layer decode-latency table.
struct DecodeLatencyRow {
  std::int64_t seq = 0;
  bool offload = false;          // false: neither column offloads ("-")
  double classical_upload = 0.0; // per-layer KV bytes / pcie_bw
  double gpu_calc = 0.0;         // decode attention on the device
  double classical_total = 0.0;
  double cpu_calc = 0.0;         // decode attention on the host
  double off_upload = 0.0;       // QKV down + result up, 4*B*H1 scalars
  double cooperative_total = 0.0;
};

// Classical KV-upload offloading vs the cooperative host-compute strategy,
// per layer and per-device quantities, swept over context lengths. Rows
// where the planner keeps every layer on the device report no-offload.
std::vector<DecodeLatencyRow> decode_latency_compare(const ModelConfig& model,
                                                     std::span<const std::int64_t> seqs,
                                                     std::int64_t m_gpu_bytes,
                                                     std::int64_t m_cpu_bytes, int devices,
                                                     const HardwareModel& hw);

struct PrefillOverlapReport {
  Timeline timeline;
  double added_latency = 0.0;  // sum over layers of max(0, offload_end - layer_end)
};

// Prefill with asynchronous KV offloading for the first l_cpu layers: each
// layer's KV transfer starts once its K/V projections finish and overlaps
// the remaining compute of the layer; compute only stalls when a transfer
// outlives it.
PrefillOverlapReport prefill_offload_overlap(const ModelConfig& model,
                                             std::int64_t l_cpu, int devices,
                                             const HardwareModel& hw);

}  // namespace attnkit
