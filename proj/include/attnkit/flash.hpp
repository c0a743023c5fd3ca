#pragma once

#include <cmath>
#include <limits>

#include "attnkit/attention_ref.hpp"
#include "attnkit/tensor.hpp"
#include "attnkit/tiling_mask.hpp"

namespace attnkit {

// Two-level blocking parameters. Level-1 picks the KV stride at which
// state handoffs happen; level-2 blocks are the numeric unit, so the result
// depends on b_kv2 order only and level-1 grouping never changes it.
struct TileConfig {
  std::int64_t b_q = 128;
  std::int64_t b_kv1 = 512;
  std::int64_t b_kv2 = 128;
  bool causal = false;
  std::int64_t mask_block_max = 512;  // M of the mask generator

  void validate() const {
    if (b_q < 1 || b_kv1 < 1 || b_kv2 < 1 || mask_block_max < 1)
      throw std::invalid_argument("tile_config: block sizes must be >= 1");
    if (b_kv1 % b_kv2 != 0)
      throw std::invalid_argument("tile_config: b_kv2 must divide b_kv1");
    if (b_q > mask_block_max || b_kv2 > mask_block_max)
      throw std::invalid_argument("tile_config: b_q and b_kv2 must be <= M");
  }
};

struct SkipStats {
  std::int64_t empty = 0;
  std::int64_t full = 0;
  std::int64_t partial = 0;
};

// Level-2 block census over one S x S score grid.
SkipStats skip_stats(std::int64_t s, const TileConfig& cfg);

// Blocked attention with the online-softmax recurrence. Per (batch, head,
// q-block) a running rowmax m, rowsum l and un-normalized accumulator are
// maintained; each level-2 KV block updates them as
//   m' = max(m, rowmax(S_blk)),  l' = e^(m-m') l + rowsum(e^(S_blk-m')),
//   acc' = e^(m-m') acc + e^(S_blk-m') V_blk,
// and the final output is acc/l. Causal runs skip Empty blocks, apply the
// extracted B-mask to Partial blocks and leave Full blocks untouched (the
// Full path is bit-identical to a Partial pass with an all-ones mask).
// Workers partition (batch, head, q-block) triples; tiles are disjoint, so
// any worker count gives the sequential result.
template <std::floating_point T>
Tensor<T> flash_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                          const TileConfig& cfg, int workers = 1) {
  cfg.validate();
  if (q.rank() != 4) throw ShapeError("flash_attention: [B,S,N,D] operands required");
  if (!q.same_shape(k) || !q.same_shape(v))
    throw ShapeError("flash_attention: Q/K/V shape mismatch");
  const std::int64_t b = q.extent(0), s = q.extent(1), n = q.extent(2), d = q.extent(3);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  const MMask mmask = cfg.causal ? build_mmask(cfg.mask_block_max) : MMask{};
  const std::int64_t nq = (s + cfg.b_q - 1) / cfg.b_q;
  const std::int64_t n_l1 = (s + cfg.b_kv1 - 1) / cfg.b_kv1;

  Tensor<T> out({b, s, n, d});
  const auto run_tile = [&](std::int64_t task) {
    const std::int64_t qi = task % nq;
    const std::int64_t ni = (task / nq) % n;
    const std::int64_t bi = task / (nq * n);
    const std::int64_t row0 = qi * cfg.b_q;
    const std::int64_t rows = std::min(cfg.b_q, s - row0);

    std::vector<T> m(rows, -std::numeric_limits<T>::infinity());
    std::vector<T> l(rows, T{0});
    std::vector<T> acc(static_cast<std::size_t>(rows * d), T{0});
    std::vector<T> s_blk(static_cast<std::size_t>(rows * cfg.b_kv2));
    std::vector<T> p_blk(static_cast<std::size_t>(rows * cfg.b_kv2));

    for (std::int64_t j1 = 0; j1 < n_l1; ++j1) {
      const std::int64_t l1_col0 = j1 * cfg.b_kv1;
      const std::int64_t l1_cols = std::min(cfg.b_kv1, s - l1_col0);
      const std::int64_t n_l2 = (l1_cols + cfg.b_kv2 - 1) / cfg.b_kv2;
      for (std::int64_t j2 = 0; j2 < n_l2; ++j2) {
        const std::int64_t j = j1 * (cfg.b_kv1 / cfg.b_kv2) + j2;
        const std::int64_t col0 = l1_col0 + j2 * cfg.b_kv2;
        const std::int64_t cols = std::min(cfg.b_kv2, l1_col0 + l1_cols - col0);

        BlockClass cls{BlockKind::Full, 0};
        if (cfg.causal) cls = classify_block(qi, j, cfg.b_q, cfg.b_kv2, s);
        if (cls.kind == BlockKind::Empty) continue;

        for (std::int64_t r = 0; r < rows; ++r) {
          for (std::int64_t c = 0; c < cols; ++c) {
            double dot = 0.0;
            for (std::int64_t di = 0; di < d; ++di)
              dot += static_cast<double>(q(bi, row0 + r, ni, di)) *
                     static_cast<double>(k(bi, col0 + c, ni, di));
            s_blk[static_cast<std::size_t>(r * cols + c)] =
                static_cast<T>(dot * inv_sqrt_d);
          }
        }
        if (cls.kind == BlockKind::Partial) {
          const auto bmask = extract_bmask(mmask, cls.offset, rows, cols);
          for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t c = 0; c < cols; ++c)
              if (!bmask[static_cast<std::size_t>(r * cols + c)])
                s_blk[static_cast<std::size_t>(r * cols + c)] =
                    static_cast<T>(static_cast<double>(
                                       s_blk[static_cast<std::size_t>(r * cols + c)]) +
                                   kMaskValue);
        }

        for (std::int64_t r = 0; r < rows; ++r) {
          T row_max = s_blk[static_cast<std::size_t>(r * cols)];
          for (std::int64_t c = 1; c < cols; ++c)
            row_max = std::max(row_max, s_blk[static_cast<std::size_t>(r * cols + c)]);
          const T m_new = std::max(m[r], row_max);
          // exp(-inf - m_new) == 0 covers the first block without a special case.
          const T scale = static_cast<T>(
              std::exp(static_cast<double>(m[r]) - static_cast<double>(m_new)));
          double row_sum = 0.0;
          for (std::int64_t c = 0; c < cols; ++c) {
            const T e = static_cast<T>(
                std::exp(static_cast<double>(s_blk[static_cast<std::size_t>(r * cols + c)]) -
                         static_cast<double>(m_new)));
            p_blk[static_cast<std::size_t>(r * cols + c)] = e;
            row_sum += static_cast<double>(e);
          }
          l[r] = static_cast<T>(static_cast<double>(scale) * static_cast<double>(l[r]) +
                                row_sum);
          for (std::int64_t di = 0; di < d; ++di) {
            double a = static_cast<double>(scale) *
                       static_cast<double>(acc[static_cast<std::size_t>(r * d + di)]);
            for (std::int64_t c = 0; c < cols; ++c)
              a += static_cast<double>(p_blk[static_cast<std::size_t>(r * cols + c)]) *
                   static_cast<double>(v(bi, col0 + c, ni, di));
            acc[static_cast<std::size_t>(r * d + di)] = static_cast<T>(a);
          }
          m[r] = m_new;
        }
      }
    }

    for (std::int64_t r = 0; r < rows; ++r) {
      const double l_r = static_cast<double>(l[r]);
      for (std::int64_t di = 0; di < d; ++di)
        out(bi, row0 + r, ni, di) =
            l_r > 0.0 ? static_cast<T>(
                            static_cast<double>(acc[static_cast<std::size_t>(r * d + di)]) /
                            l_r)
                      : T{0};
    }
  };

  parallel_for(b * n * nq, workers, run_tile);
  return out;
}

}  // namespace attnkit
