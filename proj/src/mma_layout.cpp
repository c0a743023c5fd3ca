#include "attnkit/mma_layout.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "attnkit/io.hpp"

namespace attnkit {

std::int64_t Layout::operator()(std::span<const std::int64_t> coord) const {
  if (shape.size() != stride.size())
    throw std::invalid_argument("layout: shape/stride arity mismatch");
  if (coord.size() != shape.size())
    throw std::invalid_argument("layout: coordinate arity mismatch");
  std::int64_t index = 0;
  for (std::size_t d = 0; d < coord.size(); ++d) {
    if (coord[d] < 0 || coord[d] >= shape[d])
      throw std::out_of_range("layout: coordinate outside shape");
    index += coord[d] * stride[d];
  }
  return index;
}

std::int64_t Layout::size() const {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1},
                         std::multiplies<>());
}

MmaInstr parse_instr(const std::string& name) {
  if (name == "m16n8k16") return MmaInstr::m16n8k16;
  if (name == "m8n8k4_f32acc") return MmaInstr::m8n8k4_f32acc;
  if (name == "m8n8k4_f16acc") return MmaInstr::m8n8k4_f16acc;
  throw std::invalid_argument("unknown MMA instruction: " + name);
}

const char* instr_name(MmaInstr instr) {
  switch (instr) {
    case MmaInstr::m16n8k16: return "m16n8k16";
    case MmaInstr::m8n8k4_f32acc: return "m8n8k4_f32acc";
    case MmaInstr::m8n8k4_f16acc: return "m8n8k4_f16acc";
  }
  return "?";
}

std::int64_t FragmentMap::tile_rows(MatrixRole role) const {
  switch (role) {
    case MatrixRole::A: return m;
    case MatrixRole::B: return k;
    case MatrixRole::C: return m;
  }
  return 0;
}

std::int64_t FragmentMap::tile_cols(MatrixRole role) const {
  switch (role) {
    case MatrixRole::A: return k;
    case MatrixRole::B: return n;
    case MatrixRole::C: return n;
  }
  return 0;
}

bool FragmentMap::partitions_exactly() const {
  for (MatrixRole role : {MatrixRole::A, MatrixRole::B, MatrixRole::C}) {
    const std::int64_t rows = tile_rows(role), cols = tile_cols(role);
    std::vector<int> seen(static_cast<std::size_t>(rows * cols), 0);
    for (int t = 0; t < kWarp; ++t) {
      for (const Coord& c : role_thread(role, t)) {
        if (c.row < 0 || c.row >= rows || c.col < 0 || c.col >= cols) return false;
        ++seen[static_cast<std::size_t>(c.row * cols + c.col)];
      }
    }
    for (int count : seen)
      if (count != 1) return false;
  }
  return true;
}

namespace {

// Quadpair 0 of a warp: lanes 0-3 and 16-19.
constexpr std::array<int, 8> kQuadpairLanes = {0, 1, 2, 3, 16, 17, 18, 19};

FragmentMap make_m16n8k16() {
  FragmentMap map;
  map.instr = MmaInstr::m16n8k16;
  map.m = 16;
  map.n = 8;
  map.k = 16;
  auto& a = map.owners[static_cast<std::size_t>(MatrixRole::A)];
  auto& b = map.owners[static_cast<std::size_t>(MatrixRole::B)];
  auto& c = map.owners[static_cast<std::size_t>(MatrixRole::C)];
  for (int lane = 0; lane < FragmentMap::kWarp; ++lane) {
    const std::int64_t g = lane / 4;   // group of four lanes -> row
    const std::int64_t t = lane % 4;   // lane within group -> column pair
    a[lane] = {{g, 2 * t},     {g, 2 * t + 1},     {g + 8, 2 * t},     {g + 8, 2 * t + 1},
               {g, 2 * t + 8}, {g, 2 * t + 9},     {g + 8, 2 * t + 8}, {g + 8, 2 * t + 9}};
    b[lane] = {{2 * t, g}, {2 * t + 1, g}, {2 * t + 8, g}, {2 * t + 9, g}};
    c[lane] = {{g, 2 * t}, {g, 2 * t + 1}, {g + 8, 2 * t}, {g + 8, 2 * t + 1}};
  }
  return map;
}

FragmentMap make_m8n8k4(bool f32acc) {
  FragmentMap map;
  map.instr = f32acc ? MmaInstr::m8n8k4_f32acc : MmaInstr::m8n8k4_f16acc;
  map.m = 8;
  map.n = 8;
  map.k = 4;
  auto& a = map.owners[static_cast<std::size_t>(MatrixRole::A)];
  auto& b = map.owners[static_cast<std::size_t>(MatrixRole::B)];
  auto& c = map.owners[static_cast<std::size_t>(MatrixRole::C)];
  for (int qt = 0; qt < 8; ++qt) {
    const int lane = kQuadpairLanes[static_cast<std::size_t>(qt)];
    // Row-major A: one full row per thread. Column-major B: one full column.
    a[lane] = {{qt, 0}, {qt, 1}, {qt, 2}, {qt, 3}};
    b[lane] = {{0, qt}, {1, qt}, {2, qt}, {3, qt}};
    if (f32acc) {
      // FP32 accumulators interleave column pairs: a thread covers two rows
      // and the columns {cb, cb+1, cb+4, cb+5}.
      const std::int64_t rb = (qt / 2) * 2;
      const std::int64_t cb = (qt % 2) * 2;
      c[lane] = {{rb, cb},     {rb, cb + 1},     {rb + 1, cb},     {rb + 1, cb + 1},
                 {rb, cb + 4}, {rb, cb + 5},     {rb + 1, cb + 4}, {rb + 1, cb + 5}};
    } else {
      // FP16 accumulators keep a full C row per thread, aligned with A.
      c[lane] = {{qt, 0}, {qt, 1}, {qt, 2}, {qt, 3}, {qt, 4}, {qt, 5}, {qt, 6}, {qt, 7}};
    }
  }
  return map;
}

}  // namespace

FragmentMap canonical_fragment_map(MmaInstr instr) {
  switch (instr) {
    case MmaInstr::m16n8k16: return make_m16n8k16();
    case MmaInstr::m8n8k4_f32acc: return make_m8n8k4(true);
    case MmaInstr::m8n8k4_f16acc: return make_m8n8k4(false);
  }
  throw std::invalid_argument("unknown MMA instruction");
}

std::string fragment_map_to_json(const FragmentMap& map) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["instr"] = instr_name(map.instr);
  j["tile"] = {{"m", map.m}, {"n", map.n}, {"k", map.k}};
  const char* role_names[3] = {"A", "B", "C"};
  for (int r = 0; r < 3; ++r) {
    nlohmann::json threads;
    for (int t = 0; t < FragmentMap::kWarp; ++t) {
      const auto& coords = map.owners[r][t];
      if (coords.empty()) continue;
      nlohmann::json list = nlohmann::json::array();
      for (const Coord& c : coords) list.push_back({c.row, c.col});
      threads[std::to_string(t)] = std::move(list);
    }
    j["roles"][role_names[r]]["threads"] = std::move(threads);
  }
  return j.dump(2) + "\n";
}

FragmentMap load_fragment_map(const std::filesystem::path& json_path) {
  const auto j = nlohmann::json::parse(io::read_file(json_path));
  for (const auto& [key, _] : j.items()) {
    static const std::set<std::string> known = {"schema_version", "instr", "tile",
                                                "roles", "comment"};
    if (!known.count(key))
      throw std::invalid_argument("fragment map: unknown key '" + key + "'");
  }
  if (j.at("schema_version").get<int>() != 1)
    throw std::invalid_argument("fragment map: unsupported schema_version");
  FragmentMap map;
  map.instr = parse_instr(j.at("instr").get<std::string>());
  map.m = j.at("tile").at("m").get<std::int64_t>();
  map.n = j.at("tile").at("n").get<std::int64_t>();
  map.k = j.at("tile").at("k").get<std::int64_t>();
  const FragmentMap canonical = canonical_fragment_map(map.instr);
  if (map.m != canonical.m || map.n != canonical.n || map.k != canonical.k)
    throw std::invalid_argument("fragment map: tile does not match the instruction");
  const char* role_names[3] = {"A", "B", "C"};
  for (int r = 0; r < 3; ++r) {
    const auto& threads = j.at("roles").at(role_names[r]).at("threads");
    for (const auto& [tid, list] : threads.items()) {
      const int t = std::stoi(tid);
      if (t < 0 || t >= FragmentMap::kWarp)
        throw std::invalid_argument("fragment map: thread id out of range");
      for (const auto& pair : list)
        map.owners[r][t].push_back({pair.at(0).get<std::int64_t>(),
                                    pair.at(1).get<std::int64_t>()});
    }
  }
  return map;
}

namespace {

std::int64_t lcm64(std::int64_t a, std::int64_t b) { return std::lcm(a, b); }

// Ownership of the concatenated-C strip re-split into A-shaped windows.
std::vector<ThreadTile> c_as_a_tiles(const FragmentMap& map, int c_tile_count) {
  const std::int64_t width = c_tile_count * map.n;
  if (width % map.k != 0)
    throw std::invalid_argument("convert: C tiling does not cover whole A tiles");
  const auto n_a = static_cast<std::size_t>(width / map.k);
  std::vector<ThreadTile> tiles(n_a);
  for (int t = 0; t < FragmentMap::kWarp; ++t) {
    for (int tc = 0; tc < c_tile_count; ++tc) {
      for (const Coord& c : map.role_thread(MatrixRole::C, t)) {
        const std::int64_t gcol = tc * map.n + c.col;
        tiles[static_cast<std::size_t>(gcol / map.k)].owners[t].push_back(
            {c.row, gcol % map.k});
      }
    }
  }
  return tiles;
}

}  // namespace

B2bReport check_b2b_compat(const FragmentMap& map) {
  const int c_tiles = static_cast<int>(lcm64(map.n, map.k) / map.n);
  const auto tiles = c_as_a_tiles(map, c_tiles);
  B2bReport report;
  report.compatible = true;
  for (const ThreadTile& tile : tiles) {
    for (int t = 0; t < FragmentMap::kWarp; ++t) {
      std::vector<Coord> held = tile.owners[t];
      std::vector<Coord> needed(map.role_thread(MatrixRole::A, t).begin(),
                                map.role_thread(MatrixRole::A, t).end());
      std::sort(held.begin(), held.end());
      std::sort(needed.begin(), needed.end());
      if (held != needed) report.compatible = false;
      std::vector<Coord> extra;
      std::set_difference(held.begin(), held.end(), needed.begin(), needed.end(),
                          std::back_inserter(extra));
      report.exchanges_needed += static_cast<std::int64_t>(extra.size());
    }
  }
  return report;
}

ConvertResult convert_layout_acc_aregs(const FragmentMap& map, int c_tile_count) {
  if (c_tile_count < 1)
    throw std::invalid_argument("convert: at least one C tile required");
  if (map.k > map.n && c_tile_count % static_cast<int>(map.k / map.n) != 0)
    throw std::invalid_argument("convert: N tiling must be even for this instruction");
  ConvertResult result;
  result.a_tiles = c_as_a_tiles(map, c_tile_count);

  for (std::size_t tile = 0; tile < result.a_tiles.size(); ++tile) {
    std::map<Coord, int> induced;
    for (int t = 0; t < FragmentMap::kWarp; ++t)
      for (const Coord& c : result.a_tiles[tile].owners[t]) induced[c] = t;
    for (int t = 0; t < FragmentMap::kWarp; ++t) {
      for (const Coord& c : map.role_thread(MatrixRole::A, t)) {
        const auto it = induced.find(c);
        if (it == induced.end())
          throw std::logic_error("convert: A coordinate missing from C residency");
        if (it->second != t)
          result.permutation.push_back({static_cast<int>(tile), c, it->second, t});
      }
    }
  }
  return result;
}

std::vector<ThreadTile> convert_aregs_to_acc(const FragmentMap& map,
                                             const std::vector<ThreadTile>& a_tiles) {
  const std::int64_t width = static_cast<std::int64_t>(a_tiles.size()) * map.k;
  if (width % map.n != 0)
    throw std::invalid_argument("convert: A tiling does not cover whole C tiles");
  std::vector<ThreadTile> c_tiles(static_cast<std::size_t>(width / map.n));
  for (std::size_t ta = 0; ta < a_tiles.size(); ++ta) {
    for (int t = 0; t < FragmentMap::kWarp; ++t) {
      for (const Coord& c : a_tiles[ta].owners[t]) {
        const std::int64_t gcol = static_cast<std::int64_t>(ta) * map.k + c.col;
        c_tiles[static_cast<std::size_t>(gcol / map.n)].owners[t].push_back(
            {c.row, gcol % map.n});
      }
    }
  }
  return c_tiles;
}

}  // namespace attnkit
