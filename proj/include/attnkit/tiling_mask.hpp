#pragma once

#include <cstdint>
#include <vector>

#include "attnkit/common.hpp"

namespace attnkit {

// (2M)x(2M) lower-triangular generator matrix. The causal mask of any
// attention-score block with extents <= M is a shifted window of it, so the
// full S x S mask never has to be materialized.
struct MMask {
  std::int64_t m = 0;             // maximal block size
  std::vector<std::uint8_t> bits; // (2M)x(2M), bit[x][y] = 1 iff x >= y

  std::int64_t side() const { return 2 * m; }
  bool bit(std::int64_t x, std::int64_t y) const {
    return bits[static_cast<std::size_t>(x * side() + y)] != 0;
  }
};

enum class BlockKind { Empty, Full, Partial };

// Classification of one score block; `offset` is meaningful only for
// Partial and equals (first global column - first global row).
struct BlockClass {
  BlockKind kind = BlockKind::Empty;
  std::int64_t offset = 0;

  bool operator==(const BlockClass&) const = default;
};

MMask build_mmask(std::int64_t m);

// Classifies the causal-mask content of the block at (q-block i, kv-block j)
// with nominal extents b_r x b_c over an S x S score matrix. Blocks at the
// ragged edge are clamped to their true extents before classification.
BlockClass classify_block(std::int64_t i, std::int64_t j, std::int64_t b_r,
                          std::int64_t b_c, std::int64_t s);

// Extracts a b_r x b_c B-mask with diagonal offset d from the generator.
// The window origin is (max(0,-d), max(0,d)); the result satisfies
// B[r][c] = 1 iff r - c >= d. Row-major b_r*b_c bytes.
std::vector<std::uint8_t> extract_bmask(const MMask& m, std::int64_t d,
                                        std::int64_t b_r, std::int64_t b_c);

struct MaskMemory {
  std::uint64_t full_bytes = 0;   // S*S*bytes_per_element
  std::uint64_t mmask_bytes = 0;  // (2M)*(2M)*bytes_per_element
};

MaskMemory mask_memory_bytes(std::uint64_t s, std::uint64_t m,
                             std::uint64_t bytes_per_element);

}  // namespace attnkit
