#include "attnkit/tiling_mask.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace attnkit {

MMask build_mmask(std::int64_t m) {
  if (m < 1) throw std::invalid_argument("build_mmask: M must be >= 1");
  MMask mask;
  mask.m = m;
  const std::int64_t side = 2 * m;
  mask.bits.assign(static_cast<std::size_t>(side * side), 0);
  for (std::int64_t x = 0; x < side; ++x)
    for (std::int64_t y = 0; y <= x; ++y)
      mask.bits[static_cast<std::size_t>(x * side + y)] = 1;
  return mask;
}

BlockClass classify_block(std::int64_t i, std::int64_t j, std::int64_t b_r,
                          std::int64_t b_c, std::int64_t s) {
  if (b_r < 1 || b_c < 1) throw std::invalid_argument("classify_block: extents must be >= 1");
  if (s < 1) throw std::invalid_argument("classify_block: S must be >= 1");
  const std::int64_t row0 = i * b_r;
  const std::int64_t col0 = j * b_c;
  if (i < 0 || j < 0 || row0 >= s || col0 >= s)
    throw std::invalid_argument("classify_block: block outside [0,S)");
  // Clamp ragged edge blocks to their true index ranges.
  const std::int64_t rows = std::min(b_r, s - row0);
  const std::int64_t cols = std::min(b_c, s - col0);
  const std::int64_t row_last = row0 + rows - 1;
  const std::int64_t col_last = col0 + cols - 1;
  if (col_last <= row0) return {BlockKind::Full, 0};
  if (col0 > row_last) return {BlockKind::Empty, 0};
  return {BlockKind::Partial, col0 - row0};
}

std::vector<std::uint8_t> extract_bmask(const MMask& m, std::int64_t d,
                                        std::int64_t b_r, std::int64_t b_c) {
  if (b_r < 1 || b_c < 1 || b_r > m.m || b_c > m.m)
    throw std::invalid_argument("extract_bmask: extents must be in [1, M]");
  // Square blocks admit offsets in [-(b-1), b-1]; rectangular blocks widen
  // the band to whatever classify_block can emit for a non-Empty, non-Full
  // block. Either way the window stays inside the 2M x 2M generator.
  const std::int64_t lo = std::min<std::int64_t>(-(b_r - 1), 2 - b_c);
  const std::int64_t hi = std::max<std::int64_t>(b_c - 1, b_r - 1);
  if (d < lo || d > hi)
    throw std::out_of_range("extract_bmask: offset outside the Partial range");
  const std::int64_t r0 = std::max<std::int64_t>(0, -d);
  const std::int64_t c0 = std::max<std::int64_t>(0, d);
  std::vector<std::uint8_t> out(static_cast<std::size_t>(b_r * b_c));
  for (std::int64_t r = 0; r < b_r; ++r)
    for (std::int64_t c = 0; c < b_c; ++c)
      out[static_cast<std::size_t>(r * b_c + c)] = m.bit(r0 + r, c0 + c) ? 1 : 0;
  return out;
}

namespace {

std::uint64_t checked_square_times(std::uint64_t side, std::uint64_t bpe) {
  const unsigned __int128 v =
      static_cast<unsigned __int128>(side) * side * bpe;
  if (v > std::numeric_limits<std::uint64_t>::max())
    throw std::overflow_error("mask_memory_bytes: byte count exceeds 64 bits");
  return static_cast<std::uint64_t>(v);
}

}  // namespace

MaskMemory mask_memory_bytes(std::uint64_t s, std::uint64_t m,
                             std::uint64_t bytes_per_element) {
  if (s == 0 || m == 0 || bytes_per_element == 0)
    throw std::invalid_argument("mask_memory_bytes: positive arguments required");
  return {checked_square_times(s, bytes_per_element),
          checked_square_times(2 * m, bytes_per_element)};
}

}  // namespace attnkit
