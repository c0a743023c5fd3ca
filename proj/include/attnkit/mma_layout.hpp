#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace attnkit {

// (Shape, Stride) layout: maps a coordinate within Shape to a flat index
// via the dot product with Stride.
struct Layout {
  std::vector<std::int64_t> shape;
  std::vector<std::int64_t> stride;

  std::int64_t operator()(std::span<const std::int64_t> coord) const;
  std::int64_t size() const;
};

enum class MmaInstr { m16n8k16, m8n8k4_f32acc, m8n8k4_f16acc };
enum class MatrixRole { A, B, C };

MmaInstr parse_instr(const std::string& name);
const char* instr_name(MmaInstr instr);

struct Coord {
  std::int64_t row = 0;
  std::int64_t col = 0;
  bool operator==(const Coord&) const = default;
  auto operator<=>(const Coord&) const = default;
};

// Per-thread element ownership for one MMA instruction. Tiles: A is MxK,
// B is KxN, C is MxN. The two Volta instructions are quadpair-scoped: the
// eight threads of QP0 (warp lanes 0-3 and 16-19) partition the 8x8x4
// tile; the remaining lanes own nothing. m16n8k16 spans the full warp.
struct FragmentMap {
  static constexpr int kWarp = 32;

  MmaInstr instr = MmaInstr::m16n8k16;
  std::int64_t m = 0, n = 0, k = 0;
  // owners[role][thread] -> owned coordinates, in register order.
  std::array<std::array<std::vector<Coord>, kWarp>, 3> owners;

  std::span<const Coord> role_thread(MatrixRole role, int thread) const {
    return owners[static_cast<std::size_t>(role)][static_cast<std::size_t>(thread)];
  }
  std::int64_t tile_rows(MatrixRole role) const;
  std::int64_t tile_cols(MatrixRole role) const;

  // True when every tile element of every role is owned by exactly one
  // thread and listed exactly once.
  bool partitions_exactly() const;
};

// Canonical maps derived from the published instruction semantics.
FragmentMap canonical_fragment_map(MmaInstr instr);

FragmentMap load_fragment_map(const std::filesystem::path& json_path);
std::string fragment_map_to_json(const FragmentMap& map);

struct B2bReport {
  bool compatible = false;
  // Elements a thread holds after the first multiply that it does not need
  // for the second one, summed over threads and A tiles.
  std::int64_t exchanges_needed = 0;
};

// Re-interprets the C tile(s) of one multiply as the A tile(s) of the next
// (C tiles concatenated along columns, then re-split into MxK windows) and
// checks whether every thread already owns exactly its A fragment.
B2bReport check_b2b_compat(const FragmentMap& map);

// One A-shaped tile worth of per-thread coordinates.
struct ThreadTile {
  std::array<std::vector<Coord>, FragmentMap::kWarp> owners;
};

struct OwnershipMove {
  int tile = 0;
  Coord coord;
  int from_thread = 0;
  int to_thread = 0;
};

struct ConvertResult {
  std::vector<ThreadTile> a_tiles;          // ownership induced by C residency
  std::vector<OwnershipMove> permutation;   // empty iff compatible
};

// Splits `c_tile_count` C tiles (concatenated along N) into A-shaped tiles
// and returns the induced per-thread A maps plus the ownership moves needed
// to reach the canonical A fragments. m16n8k16 consumes C tiles in pairs,
// so its tile count must be even.
ConvertResult convert_layout_acc_aregs(const FragmentMap& map, int c_tile_count);

// Inverse re-indexing: A-shaped tiles back to C-shaped ones. Feeding the
// output of convert_layout_acc_aregs through this reproduces the C map.
std::vector<ThreadTile> convert_aregs_to_acc(const FragmentMap& map,
                                             const std::vector<ThreadTile>& a_tiles);

}  // namespace attnkit
