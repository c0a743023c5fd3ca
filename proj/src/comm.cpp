#include "attnkit/comm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "attnkit/attention_ref.hpp"

namespace attnkit {

namespace {
constexpr std::int64_t kBytesPerElem = 2;
}

void ClusterConfig::validate(std::int64_t total_rows) const {
  if (devices < 1) throw std::invalid_argument("cluster: devices must be >= 1");
  if (block_rows.empty()) throw std::invalid_argument("cluster: empty block list");
  std::int64_t sum = 0;
  for (std::int64_t r : block_rows) {
    if (r < 1) throw std::invalid_argument("cluster: blocks must have >= 1 row");
    sum += r;
  }
  if (sum != total_rows) throw std::invalid_argument("cluster: block rows must sum to B*S");
  for (std::size_t i = 1; i < block_rows.size(); ++i)
    if (block_rows[0] > block_rows[i])
      throw std::invalid_argument("cluster: first block must be the smallest");
}

double ring_allreduce_seconds(std::int64_t bytes, int devices, const HardwareModel& hw) {
  if (devices <= 1 || bytes == 0) return 0.0;
  if (std::isinf(hw.interconnect_bw)) return 0.0;
  const double n = static_cast<double>(devices);
  return 2.0 * (n - 1.0) / n * static_cast<double>(bytes) / hw.interconnect_bw +
         2.0 * (n - 1.0) * hw.interconnect_latency;
}

std::vector<TensorD> tp_partial_outputs(const TensorD& q, const TensorD& k,
                                        const TensorD& v, const TensorD& w_o,
                                        int devices) {
  if (q.rank() != 4 || !q.same_shape(k) || !q.same_shape(v))
    throw ShapeError("tp_attention_linear: [B,S,N,D] operands required");
  const std::int64_t b = q.extent(0), s = q.extent(1), n = q.extent(2), d = q.extent(3);
  const std::int64_t h1 = n * d;
  if (w_o.rank() != 2 || w_o.extent(0) != h1 || w_o.extent(1) != h1)
    throw ShapeError("tp_attention_linear: W_O must be [H1,H1]");
  if (devices < 1 || n % devices != 0)
    throw ShapeError("tp_attention_linear: devices must divide the head count");

  const std::int64_t heads_per_dev = n / devices;
  std::vector<TensorD> partials;
  partials.reserve(devices);
  for (int dev = 0; dev < devices; ++dev) {
    const std::int64_t n0 = dev * heads_per_dev;
    const TensorD q_d = block_view(q, {0, 0, n0, 0}, {b, s, heads_per_dev, d}).to_tensor();
    const TensorD k_d = block_view(k, {0, 0, n0, 0}, {b, s, heads_per_dev, d}).to_tensor();
    const TensorD v_d = block_view(v, {0, 0, n0, 0}, {b, s, heads_per_dev, d}).to_tensor();
    const TensorD attn =
        std_attention(q_d, k_d, v_d, /*causal=*/false).reshaped({b * s, heads_per_dev * d});
    const TensorD w_shard =
        block_view(w_o, {n0 * d, 0}, {heads_per_dev * d, h1}).to_tensor();
    partials.push_back(matmul(attn, w_shard));
  }
  return partials;
}

namespace {

// Fixed-order sum over devices; identical per-element order for the tiled
// and the monolithic path is what makes them bitwise equal.
TensorD reduce_rows(const std::vector<TensorD>& partials, std::int64_t row0,
                    std::int64_t rows) {
  const std::int64_t h1 = partials[0].extent(1);
  TensorD out({rows, h1});
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < h1; ++c) {
      double acc = 0.0;
      for (const TensorD& p : partials) acc += p(row0 + r, c);
      out(r, c) = acc;
    }
  return out;
}

void copy_rows(TensorD& dst, const TensorD& src, std::int64_t row0) {
  const std::int64_t h1 = src.extent(1);
  for (std::int64_t r = 0; r < src.extent(0); ++r)
    for (std::int64_t c = 0; c < h1; ++c) dst(row0 + r, c) = src(r, c);
}

}  // namespace

TensorD tp_attention_linear(const TensorD& q, const TensorD& k, const TensorD& v,
                            const TensorD& w_o, int devices) {
  const auto partials = tp_partial_outputs(q, k, v, w_o, devices);
  return reduce_rows(partials, 0, partials[0].extent(0));
}

Timeline tiled_allreduce_timeline(std::span<const std::int64_t> block_rows,
                                  std::int64_t flops_per_row, std::int64_t bytes_per_row,
                                  int devices, const HardwareModel& hw) {
  if (block_rows.empty()) throw std::invalid_argument("tiled_allreduce: empty block list");
  hw.validate();
  Timeline tl;
  // Compute event ends come from exact integer FLOP prefix sums, so the last
  // end equals the monolithic single-event end bit for bit.
  std::int64_t prefix_flops = 0;
  double prev_compute_end = 0.0;
  int link = 0;
  const int channels = std::max(1, hw.sdma_channels);
  std::vector<double> link_free(static_cast<std::size_t>(channels), 0.0);
  std::vector<std::int32_t> link_last(static_cast<std::size_t>(channels), -1);
  std::int32_t compute_idx = -1;
  for (std::int64_t rows : block_rows) {
    const std::int64_t flops = rows * flops_per_row;
    prefix_flops += flops;
    TimelineEvent compute;
    compute.resource = Resource::Cube;
    compute.label = "attn_linear";
    compute.start = prev_compute_end;
    compute.end = static_cast<double>(prefix_flops) / hw.cube_rate;
    compute.flops = flops;
    if (compute_idx >= 0) compute.deps = {compute_idx};
    prev_compute_end = compute.end;
    tl.events.push_back(compute);
    compute_idx = static_cast<std::int32_t>(tl.events.size() - 1);

    const std::int64_t bytes = rows * bytes_per_row;
    TimelineEvent comm;
    comm.resource = Resource::Link;
    comm.link_index = link;
    comm.label = "b_allreduce";
    comm.start = std::max(compute.end, link_free[link]);
    comm.end = comm.start + ring_allreduce_seconds(bytes, devices, hw);
    comm.bytes = bytes;
    comm.deps = {compute_idx};
    if (link_last[link] >= 0) comm.deps.push_back(link_last[link]);
    link_free[link] = comm.end;
    tl.events.push_back(comm);
    link_last[link] = static_cast<std::int32_t>(tl.events.size() - 1);
    link = (link + 1) % channels;
  }
  return tl;
}

Timeline monolithic_allreduce_timeline(std::int64_t rows, std::int64_t flops_per_row,
                                       std::int64_t bytes_per_row, int devices,
                                       const HardwareModel& hw) {
  hw.validate();
  Timeline tl;
  TimelineEvent compute;
  compute.resource = Resource::Cube;
  compute.label = "attn_linear";
  compute.start = 0.0;
  compute.end = static_cast<double>(rows * flops_per_row) / hw.cube_rate;
  compute.flops = rows * flops_per_row;
  tl.events.push_back(compute);
  TimelineEvent comm;
  comm.resource = Resource::Link;
  comm.label = "allreduce";
  comm.start = compute.end;
  comm.end = comm.start + ring_allreduce_seconds(rows * bytes_per_row, devices, hw);
  comm.bytes = rows * bytes_per_row;
  comm.deps = {0};
  tl.events.push_back(comm);
  return tl;
}

AllReduceRun tiled_allreduce(const std::vector<TensorD>& partials,
                             const ClusterConfig& cluster, const HardwareModel& hw,
                             std::int64_t flops_per_row) {
  if (partials.empty() || partials[0].rank() != 2)
    throw ShapeError("tiled_allreduce: [rows,H1] partials required");
  const std::int64_t rows = partials[0].extent(0);
  const std::int64_t h1 = partials[0].extent(1);
  for (const auto& p : partials)
    if (!p.same_shape(partials[0])) throw ShapeError("tiled_allreduce: partial shape drift");
  cluster.validate(rows);
  if (static_cast<int>(partials.size()) != cluster.devices)
    throw ShapeError("tiled_allreduce: one partial per device required");

  AllReduceRun run;
  run.result = TensorD({rows, h1});
  std::int64_t row0 = 0;
  for (std::int64_t block : cluster.block_rows) {
    copy_rows(run.result, reduce_rows(partials, row0, block), row0);
    row0 += block;
  }
  run.timeline = tiled_allreduce_timeline(cluster.block_rows, flops_per_row,
                                          h1 * kBytesPerElem, cluster.devices, hw);
  return run;
}

AllReduceRun monolithic_allreduce(const std::vector<TensorD>& partials, int devices,
                                  const HardwareModel& hw, std::int64_t flops_per_row) {
  if (partials.empty() || partials[0].rank() != 2)
    throw ShapeError("monolithic_allreduce: [rows,H1] partials required");
  const std::int64_t rows = partials[0].extent(0);
  AllReduceRun run;
  run.result = reduce_rows(partials, 0, rows);
  run.timeline = monolithic_allreduce_timeline(
      rows, flops_per_row, partials[0].extent(1) * kBytesPerElem, devices, hw);
  return run;
}

std::vector<std::int64_t> choose_block_rows(std::int64_t total_rows, int n_blocks,
                                            std::int64_t flops_per_row,
                                            std::int64_t bytes_per_row, int devices,
                                            const HardwareModel& hw) {
  if (n_blocks < 1) throw std::invalid_argument("choose_block_rows: n_blocks must be >= 1");
  if (total_rows < n_blocks)
    throw std::invalid_argument("choose_block_rows: fewer rows than blocks");
  if (n_blocks == 1) return {total_rows};

  // Balance comm(first) ~= compute(even block): the first B-allreduce is the
  // only one that cannot hide under earlier communication, so size it to
  // finish just as the next block's compute does.
  const double t_row = static_cast<double>(flops_per_row) / hw.cube_rate;
  const double n = static_cast<double>(devices);
  double beta = 0.0;  // comm seconds per row
  if (devices > 1 && !std::isinf(hw.interconnect_bw))
    beta = 2.0 * (n - 1.0) / n * static_cast<double>(bytes_per_row) / hw.interconnect_bw;
  const double gamma = devices > 1 ? 2.0 * (n - 1.0) * hw.interconnect_latency : 0.0;

  const double k1 = static_cast<double>(n_blocks - 1);
  const std::int64_t even = total_rows / n_blocks;
  std::int64_t first = even;
  if (beta > 0.0 || gamma > 0.0) {
    // Solve beta*r1 + gamma = t_row * (total - r1) / (n_blocks - 1).
    const double denom = beta + t_row / k1;
    if (denom > 0.0) {
      const double r1 = (t_row * static_cast<double>(total_rows) / k1 - gamma) / denom;
      first = std::llround(r1);
    }
  }
  first = std::clamp<std::int64_t>(first, 1, even);

  std::vector<std::int64_t> blocks(static_cast<std::size_t>(n_blocks));
  blocks[0] = first;
  const std::int64_t rest = total_rows - first;
  const std::int64_t base = rest / (n_blocks - 1);
  std::int64_t extra = rest % (n_blocks - 1);
  for (int i = 1; i < n_blocks; ++i)
    blocks[static_cast<std::size_t>(i)] = base + (i > n_blocks - 1 - extra ? 1 : 0);
  return blocks;
}

std::vector<AllReduceComparison> compare_allreduce(std::span<const std::int64_t> seqs,
                                                   std::int64_t batch, std::int64_t heads,
                                                   std::int64_t head_dim, int devices,
                                                   int n_blocks, const HardwareModel& hw) {
  if (heads % devices != 0)
    throw std::invalid_argument("compare_allreduce: devices must divide heads");
  std::vector<AllReduceComparison> rows;
  const std::int64_t h1 = heads * head_dim;
  for (std::int64_t s : seqs) {
    const std::int64_t total_rows = batch * s;
    const std::int64_t flops_per_row =
        4 * s * head_dim * (heads / devices) + 2 * (h1 / devices) * h1;
    const std::int64_t bytes_per_row = h1 * kBytesPerElem;
    const auto blocks =
        choose_block_rows(total_rows, n_blocks, flops_per_row, bytes_per_row, devices, hw);
    const Timeline tiled =
        tiled_allreduce_timeline(blocks, flops_per_row, bytes_per_row, devices, hw);
    const Timeline base = monolithic_allreduce_timeline(total_rows, flops_per_row,
                                                        bytes_per_row, devices, hw);
    AllReduceComparison row;
    row.seq = s;
    row.baseline_ms = base.makespan() * 1e3;
    row.tiled_ms = tiled.makespan() * 1e3;
    row.speedup = base.makespan() / tiled.makespan();
    rows.push_back(row);
  }
  return rows;
}

}  // namespace attnkit
