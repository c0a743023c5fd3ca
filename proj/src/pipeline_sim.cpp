#include "attnkit/pipeline_sim.hpp"

#include <algorithm>
#include <array>
#include <deque>
#include <stdexcept>

#include "attnkit/common.hpp"

namespace attnkit {

namespace {

constexpr std::int64_t kBytesPerElem = 2;

struct Block {
  std::int64_t rows, cols;
};

void check_shape(const AttnShape& shape, std::int64_t b_q, std::int64_t b_kv) {
  if (shape.batch < 1 || shape.seq < 1 || shape.heads < 1 || shape.head_dim < 1)
    throw std::invalid_argument("pipeline_sim: shape extents must be >= 1");
  if (b_q < 1 || b_kv < 1)
    throw std::invalid_argument("pipeline_sim: block sizes must be >= 1");
}

// Q tile + K/V tiles + score strip, in stored (2-byte) elements.
std::int64_t working_set_bytes(std::int64_t b_q, std::int64_t b_kv, std::int64_t d) {
  return kBytesPerElem * (b_q * d + 2 * b_kv * d + b_q * b_kv);
}

double qk_seconds(const Block& b, std::int64_t d, const HardwareModel& hw) {
  return 2.0 * static_cast<double>(b.rows * b.cols * d) / hw.cube_rate;
}
double exp_seconds(std::int64_t elems, const HardwareModel& hw) {
  return static_cast<double>(elems) / hw.vector_rate;
}
double pv_seconds(const Block& b, std::int64_t d, const HardwareModel& hw) {
  return 2.0 * static_cast<double>(b.rows * b.cols * d) / hw.cube_rate;
}

// Flattened (batch, head, q-block) rows; each yields ceil(S/b_kv) KV blocks.
std::vector<Block> level2_blocks(const AttnShape& shape, std::int64_t b_q,
                                 std::int64_t b_kv) {
  std::vector<Block> blocks;
  const std::int64_t nq = (shape.seq + b_q - 1) / b_q;
  const std::int64_t nk = (shape.seq + b_kv - 1) / b_kv;
  blocks.reserve(static_cast<std::size_t>(shape.batch * shape.heads * nq * nk));
  for (std::int64_t t = 0; t < shape.batch * shape.heads * nq; ++t) {
    const std::int64_t qi = t % nq;
    const std::int64_t rows = std::min(b_q, shape.seq - qi * b_q);
    for (std::int64_t j = 0; j < nk; ++j)
      blocks.push_back({rows, std::min(b_kv, shape.seq - j * b_kv)});
  }
  return blocks;
}

}  // namespace

Timeline simulate_unified(const AttnShape& shape, std::int64_t b_q, std::int64_t b_kv,
                          const HardwareModel& hw) {
  check_shape(shape, b_q, b_kv);
  hw.validate();
  if (working_set_bytes(b_q, b_kv, shape.head_dim) > hw.l1_capacity)
    throw InfeasibleConfigError("L1", "unified tiling: block working set exceeds L1");

  const auto blocks = level2_blocks(shape, b_q, b_kv);
  const std::int64_t d = shape.head_dim;
  TimelineBuilder tb;

  // Cube order: qk[0], then per block k: sync, exp, qk[k+1], sync, pv[k].
  // Issuing the next block's QK during this block's Vector stage is what
  // lets the units overlap (the qk event has no cross-unit dependency).
  std::int32_t qk = tb.add(Resource::Cube, 0, "qk", qk_seconds(blocks[0], d, hw), {},
                           0, 2 * blocks[0].rows * blocks[0].cols * d);
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const std::array<std::int32_t, 1> dep_qk{qk};
    const std::int32_t sync_a = tb.add_sync(hw.sync_latency, dep_qk);
    const std::array<std::int32_t, 1> dep_sa{sync_a};
    const std::int32_t exp = tb.add(Resource::Vector, 0, "exp_update",
                                    exp_seconds(blocks[k].rows * blocks[k].cols, hw),
                                    dep_sa);
    if (k + 1 < blocks.size())
      qk = tb.add(Resource::Cube, 0, "qk", qk_seconds(blocks[k + 1], d, hw), {}, 0,
                  2 * blocks[k + 1].rows * blocks[k + 1].cols * d);
    const std::array<std::int32_t, 1> dep_exp{exp};
    const std::int32_t sync_b = tb.add_sync(hw.sync_latency, dep_exp);
    const std::array<std::int32_t, 1> dep_sb{sync_b};
    tb.add(Resource::Cube, 0, "pv", pv_seconds(blocks[k], d, hw), dep_sb, 0,
           2 * blocks[k].rows * blocks[k].cols * d);
  }
  return tb.finish();
}

Timeline simulate_two_level(const AttnShape& shape, std::int64_t b_q, std::int64_t b_kv1,
                            std::int64_t b_kv2, const HardwareModel& hw) {
  check_shape(shape, b_q, b_kv2);
  hw.validate();
  if (b_kv1 < b_kv2 || b_kv1 % b_kv2 != 0)
    throw std::invalid_argument("pipeline_sim: b_kv2 must divide b_kv1");
  if (working_set_bytes(b_q, b_kv2, shape.head_dim) > hw.l0_capacity)
    throw InfeasibleConfigError("L0", "two-level tiling: level-2 working set exceeds L0");
  if (working_set_bytes(b_q, b_kv1, shape.head_dim) > hw.l1_capacity)
    throw InfeasibleConfigError("L1", "two-level tiling: level-1 block exceeds L1");

  const std::int64_t d = shape.head_dim;
  const std::int64_t nq = (shape.seq + b_q - 1) / b_q;
  const std::int64_t n_l1 = (shape.seq + b_kv1 - 1) / b_kv1;

  // Per level-1 group: a list of level-2 chunks.
  struct Group {
    std::vector<Block> chunks;
    std::int64_t elems = 0;
  };
  std::vector<Group> groups;
  for (std::int64_t t = 0; t < shape.batch * shape.heads * nq; ++t) {
    const std::int64_t qi = t % nq;
    const std::int64_t rows = std::min(b_q, shape.seq - qi * b_q);
    for (std::int64_t g = 0; g < n_l1; ++g) {
      Group grp;
      const std::int64_t col0 = g * b_kv1;
      const std::int64_t cols = std::min(b_kv1, shape.seq - col0);
      for (std::int64_t c = 0; c < cols; c += b_kv2)
        grp.chunks.push_back({rows, std::min(b_kv2, cols - c)});
      grp.elems = rows * cols;
      groups.push_back(std::move(grp));
    }
  }

  TimelineBuilder tb;
  // Double-buffered chunk transfers: a DMA may start once the chunk two
  // slots earlier has been consumed.
  std::deque<std::int32_t> buffer_consumers;
  const auto dma_then = [&](const Block& chunk, const char* label,
                            std::int32_t extra_dep) {
    std::vector<std::int32_t> deps;
    if (buffer_consumers.size() >= 2)
      deps.push_back(buffer_consumers[buffer_consumers.size() - 2]);
    const std::int64_t bytes = chunk.cols * d * kBytesPerElem;  // one K or V chunk
    const std::int32_t dma =
        tb.add(Resource::Dma, 0, label, static_cast<double>(bytes) / hw.gm_bw, deps, bytes);
    std::vector<std::int32_t> cdeps{dma};
    if (extra_dep >= 0) cdeps.push_back(extra_dep);
    return cdeps;
  };

  const auto add_qk_chunks = [&](const Group& grp) {
    std::int32_t last = -1;
    for (const Block& chunk : grp.chunks) {
      const auto deps = dma_then(chunk, "dma_k", -1);
      last = tb.add(Resource::Cube, 0, "qk", qk_seconds(chunk, d, hw), deps, 0,
                    2 * chunk.rows * chunk.cols * d);
      buffer_consumers.push_back(last);
    }
    return last;
  };

  std::int32_t last_qk = add_qk_chunks(groups[0]);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const std::array<std::int32_t, 1> dep_qk{last_qk};
    const std::int32_t sync_a = tb.add_sync(hw.sync_latency, dep_qk);
    const std::array<std::int32_t, 1> dep_sa{sync_a};
    const std::int32_t exp = tb.add(Resource::Vector, 0, "exp_update",
                                    exp_seconds(groups[g].elems, hw), dep_sa);
    if (g + 1 < groups.size()) last_qk = add_qk_chunks(groups[g + 1]);
    const std::array<std::int32_t, 1> dep_exp{exp};
    const std::int32_t sync_b = tb.add_sync(hw.sync_latency, dep_exp);
    for (const Block& chunk : groups[g].chunks) {
      const auto deps = dma_then(chunk, "dma_v", sync_b);
      const std::int32_t pv = tb.add(Resource::Cube, 0, "pv", pv_seconds(chunk, d, hw),
                                     deps, 0, 2 * chunk.rows * chunk.cols * d);
      buffer_consumers.push_back(pv);
    }
  }
  return tb.finish();
}

std::vector<TilingComparison> compare_tilings(std::span<const std::int64_t> seqs,
                                              const AttnShape& base, std::int64_t b_q,
                                              std::int64_t b_kv1, std::int64_t b_kv2,
                                              const HardwareModel& hw) {
  std::vector<TilingComparison> rows;
  for (std::int64_t s : seqs) {
    AttnShape shape = base;
    shape.seq = s;
    const Timeline uni = simulate_unified(shape, b_q, b_kv2, hw);
    const Timeline two = simulate_two_level(shape, b_q, b_kv1, b_kv2, hw);
    TilingComparison row;
    row.seq = s;
    row.unified_makespan = uni.makespan();
    row.two_level_makespan = two.makespan();
    row.reduction_pct = 100.0 * (1.0 - row.two_level_makespan / row.unified_makespan);
    row.unified_syncs = uni.sync_count();
    row.two_level_syncs = two.sync_count();
    rows.push_back(row);
  }
  return rows;
}

}  // namespace attnkit
