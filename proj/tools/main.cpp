// attnkit command-line harness: deterministic, seeded experiments emitting
// CSV tables and JSON traces. Every subcommand writes complete files only
// and exits non-zero if one of its embedded assertions fails.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "attnkit/attention_ref.hpp"
#include "attnkit/comm.hpp"
#include "attnkit/flash.hpp"
#include "attnkit/hardware.hpp"
#include "attnkit/io.hpp"
#include "attnkit/mma_layout.hpp"
#include "attnkit/offload.hpp"
#include "attnkit/pipeline_sim.hpp"
#include "attnkit/tiling_mask.hpp"

namespace fs = std::filesystem;
using namespace attnkit;

namespace {

int g_workers = 1;

struct Failure {
  std::vector<std::string> messages;
  void require(bool ok, const std::string& what) {
    if (!ok) messages.push_back(what);
  }
  int finish(const std::string& name) const {
    if (messages.empty()) return 0;
    for (const auto& m : messages) std::cerr << name << ": assertion failed: " << m << "\n";
    return 1;
  }
};

nlohmann::json parse_config(const std::string& path,
                            const std::set<std::string>& known) {
  if (path.empty()) return nlohmann::json::object();
  const auto j = nlohmann::json::parse(io::read_file(path));
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key))
      throw std::invalid_argument("config " + path + ": unknown key '" + key + "'");
  }
  if (j.contains("schema_version") && j.at("schema_version").get<int>() != 1)
    throw std::invalid_argument("config " + path + ": unsupported schema_version");
  return j;
}

std::vector<std::int64_t> seq_list(const nlohmann::json& j, const char* key,
                                   std::vector<std::int64_t> fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<std::vector<std::int64_t>>();
}

// Built-in defaults mirror the shipped profile files; an explicit --profile
// always wins.
HardwareModel profile_or(const std::string& path, const HardwareModel& fallback) {
  if (!path.empty()) return load_hardware_model(path);
  return fallback;
}

HardwareModel default_npu_core() {
  HardwareModel hw;
  hw.name = "npu-core-sim";
  hw.cube_rate = 1e12;
  hw.vector_rate = 2e10;
  hw.sync_latency = 3.5e-6;
  hw.gm_bw = 4e11;
  hw.l2_bw = 1e12;
  hw.l1_bw = 2e12;
  hw.l1_capacity = 1 << 20;
  hw.l0_capacity = 1 << 18;
  hw.interconnect_bw = 1.7e10;
  hw.interconnect_latency = 5e-6;
  hw.pcie_bw = 1.2e10;
  hw.cpu_rate = 1.6e10;
  return hw;
}

HardwareModel default_cluster() {
  HardwareModel hw = default_npu_core();
  hw.name = "cluster-sim";
  hw.cube_rate = 5e13;
  hw.interconnect_bw = 7e9;
  hw.interconnect_latency = 0.0;
  return hw;
}

HardwareModel default_v100ish() {
  HardwareModel hw = default_npu_core();
  hw.name = "pcie-bound-gpu";
  hw.cube_rate = 1.4e13;
  return hw;
}

ModelConfig default_pangu38b() {
  ModelConfig m;
  m.layers = 40;
  m.heads = 40;
  m.head_dim = 128;
  m.hidden = 5120;
  m.mlp_hidden = 20480;
  m.vocab = 40000;
  m.batch = 1;
  m.prompt_len = 262144;
  m.output_len = 64;
  return m;
}

std::string dash_or(double v, bool present) {
  return present ? io::format_double(v) : "-";
}

// ---------------------------------------------------------------------------

int run_attn_check(const std::string& config_path, std::uint64_t seed,
                   const fs::path& out_dir) {
  const auto cfg = parse_config(config_path, {"schema_version", "cases", "max_seq",
                                              "tolerance", "comment"});
  const int cases = cfg.value("cases", 200);
  const std::int64_t max_seq = cfg.value("max_seq", std::int64_t{256});
  const double tolerance = cfg.value("tolerance", 1e-12);

  std::mt19937_64 rng(seed);
  auto pick = [&](std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
  };
  const std::int64_t dims[3] = {16, 32, 64};

  io::CsvTable csv({"case", "batch", "seq", "heads", "head_dim", "causal", "b_q",
                    "b_kv1", "b_kv2", "max_abs_err", "pass"});
  Failure fail;
  for (int i = 0; i < cases; ++i) {
    const std::int64_t b = pick(1, 2), s = pick(1, max_seq), n = pick(1, 4);
    const std::int64_t d = dims[pick(0, 2)];
    TileConfig tile;
    tile.b_q = pick(1, 64);
    tile.b_kv2 = pick(1, 64);
    tile.b_kv1 = tile.b_kv2 * pick(1, 4);
    tile.causal = pick(0, 1) == 1;
    tile.mask_block_max = 64;
    const std::uint64_t case_seed = rng();
    const TensorD q = TensorD::random_uniform({b, s, n, d}, case_seed + 1);
    const TensorD k = TensorD::random_uniform({b, s, n, d}, case_seed + 2);
    const TensorD v = TensorD::random_uniform({b, s, n, d}, case_seed + 3);
    const double err = max_abs_diff(flash_attention(q, k, v, tile, g_workers),
                                    std_attention(q, k, v, tile.causal));
    const bool ok = err <= tolerance;
    fail.require(ok, "case " + std::to_string(i) + " exceeded tolerance");
    csv.add_row({io::cell(std::int64_t(i)), io::cell(b), io::cell(s), io::cell(n),
                 io::cell(d), io::cell(std::int64_t(tile.causal)), io::cell(tile.b_q),
                 io::cell(tile.b_kv1), io::cell(tile.b_kv2), io::cell(err),
                 io::cell(std::string(ok ? "1" : "0"))});
  }
  io::write_file_atomic(out_dir / "attn_check.csv", csv.str());
  std::cout << "attn-check: " << cases << " cases -> " << (out_dir / "attn_check.csv")
            << "\n";
  return fail.finish("attn-check");
}

int run_mask_demo(const std::string& config_path, const fs::path& out_dir) {
  const auto cfg = parse_config(
      config_path, {"schema_version", "seq", "block", "mask_block_max",
                    "bytes_per_element", "comment"});
  const std::int64_t s = cfg.value("seq", std::int64_t{64});
  const std::int64_t b = cfg.value("block", std::int64_t{8});
  const std::int64_t m = cfg.value("mask_block_max", std::int64_t{32});
  const auto widths =
      seq_list(cfg, "bytes_per_element", std::vector<std::int64_t>{1, 2, 4});

  Failure fail;
  const MMask mask = build_mmask(m);
  io::CsvTable grid({"q_block", "kv_block", "kind", "offset"});
  for (std::int64_t i = 0; i * b < s; ++i) {
    for (std::int64_t j = 0; j * b < s; ++j) {
      const BlockClass cls = classify_block(i, j, b, b, s);
      const char* kind = cls.kind == BlockKind::Full    ? "full"
                         : cls.kind == BlockKind::Empty ? "empty"
                                                        : "partial";
      grid.add_row({io::cell(i), io::cell(j), io::cell(std::string(kind)),
                    io::cell(cls.kind == BlockKind::Partial ? cls.offset : 0)});
      // Embedded assertion: extracted B-masks agree with the global mask.
      if (cls.kind == BlockKind::Partial) {
        const std::int64_t rows = std::min(b, s - i * b), cols = std::min(b, s - j * b);
        const auto bits = extract_bmask(mask, cls.offset, rows, cols);
        for (std::int64_t r = 0; r < rows; ++r)
          for (std::int64_t c = 0; c < cols; ++c)
            fail.require((bits[r * cols + c] != 0) == (j * b + c <= i * b + r),
                         "B-mask mismatch");
      }
    }
  }

  io::CsvTable mem({"seq", "mask_block_max", "bytes_per_element", "full_mask_bytes",
                    "mmask_bytes"});
  for (std::int64_t bpe : widths) {
    for (std::int64_t seq : {s, std::int64_t{65536}}) {
      const MaskMemory mm = mask_memory_bytes(seq, m, bpe);
      mem.add_row({io::cell(seq), io::cell(m), io::cell(bpe), io::cell(mm.full_bytes),
                   io::cell(mm.mmask_bytes)});
    }
  }
  io::write_file_atomic(out_dir / "mask_grid.csv", grid.str());
  io::write_file_atomic(out_dir / "mask_memory.csv", mem.str());
  std::cout << grid.str() << mem.str();
  return fail.finish("mask-demo");
}

int run_pipeline_sim(const std::string& config_path, const std::string& profile_path,
                     const fs::path& out_dir) {
  const auto cfg = parse_config(
      config_path, {"schema_version", "batch", "heads", "head_dim", "b_q", "b_kv1",
                    "b_kv2", "sweep", "comment"});
  const HardwareModel hw = profile_or(profile_path, default_npu_core());
  AttnShape base;
  base.batch = cfg.value("batch", std::int64_t{1});
  base.heads = cfg.value("heads", std::int64_t{2});
  base.head_dim = cfg.value("head_dim", std::int64_t{128});
  const std::int64_t b_q = cfg.value("b_q", std::int64_t{128});
  const std::int64_t b_kv1 = cfg.value("b_kv1", std::int64_t{512});
  const std::int64_t b_kv2 = cfg.value("b_kv2", std::int64_t{128});
  const auto sweep = seq_list(cfg, "sweep", {1024, 2048, 4096, 8192, 16384});

  Failure fail;
  const auto rows = compare_tilings(sweep, base, b_q, b_kv1, b_kv2, hw);
  io::CsvTable csv({"seq", "unified_makespan_s", "two_level_makespan_s", "reduction_pct",
                    "unified_syncs", "two_level_syncs"});
  for (const auto& r : rows) {
    csv.add_row({io::cell(r.seq), io::cell(r.unified_makespan),
                 io::cell(r.two_level_makespan), io::cell(r.reduction_pct),
                 io::cell(r.unified_syncs), io::cell(r.two_level_syncs)});
    const std::int64_t nq = (r.seq + b_q - 1) / b_q;
    fail.require(r.unified_syncs == 2 * ((r.seq + b_kv2 - 1) / b_kv2) * nq * base.batch *
                                         base.heads,
                 "unified sync count formula");
    fail.require(r.two_level_syncs == 2 * ((r.seq + b_kv1 - 1) / b_kv1) * nq *
                                          base.batch * base.heads,
                 "two-level sync count formula");
  }
  io::write_file_atomic(out_dir / "tiling_compare.csv", csv.str());

  AttnShape small = base;
  small.seq = sweep.front();
  const Timeline uni = simulate_unified(small, b_q, b_kv2, hw);
  const Timeline two = simulate_two_level(small, b_q, b_kv1, b_kv2, hw);
  uni.validate();
  two.validate();
  io::write_file_atomic(out_dir / "timeline_unified.json", uni.to_json());
  io::write_file_atomic(out_dir / "timeline_two_level.json", two.to_json());
  std::cout << "pipeline-sim: " << rows.size() << " rows -> "
            << (out_dir / "tiling_compare.csv") << "\n";
  return fail.finish("pipeline-sim");
}

int run_allreduce_sim(const std::string& config_path, const std::string& profile_path,
                      std::uint64_t seed, const fs::path& out_dir) {
  const auto cfg = parse_config(
      config_path, {"schema_version", "batch", "heads", "head_dim", "devices",
                    "blocks", "sweep", "comment"});
  const HardwareModel hw = profile_or(profile_path, default_cluster());
  const std::int64_t batch = cfg.value("batch", std::int64_t{1});
  const std::int64_t heads = cfg.value("heads", std::int64_t{32});
  const std::int64_t head_dim = cfg.value("head_dim", std::int64_t{128});
  const int devices = cfg.value("devices", 8);
  const int blocks = cfg.value("blocks", 4);
  const auto sweep = seq_list(cfg, "sweep", {2048, 4096, 8192, 16384, 32768});

  Failure fail;
  const auto rows = compare_allreduce(sweep, batch, heads, head_dim, devices, blocks, hw);
  io::CsvTable csv({"seq", "baseline_ms", "tiled_ms", "speedup"});
  for (const auto& r : rows) {
    csv.add_row({io::cell(r.seq), io::cell(r.baseline_ms), io::cell(r.tiled_ms),
                 io::cell(r.speedup)});
    fail.require(r.speedup >= 1.0, "tiled schedule slower than the baseline");
  }
  io::write_file_atomic(out_dir / "allreduce_compare.csv", csv.str());

  // Numeric cross-check on a small instance: the tiled reduction must be
  // bitwise identical to the monolithic one.
  const std::int64_t s = 16, n_small = 8, d_small = 16;
  const TensorD q = TensorD::random_uniform({1, s, n_small, d_small}, seed + 1);
  const TensorD k = TensorD::random_uniform({1, s, n_small, d_small}, seed + 2);
  const TensorD v = TensorD::random_uniform({1, s, n_small, d_small}, seed + 3);
  const TensorD w_o = TensorD::random_uniform({n_small * d_small, n_small * d_small},
                                              seed + 4);
  const auto partials = tp_partial_outputs(q, k, v, w_o, devices);
  ClusterConfig cluster;
  cluster.devices = devices;
  cluster.block_rows = choose_block_rows(s, blocks, 1 << 16,
                                         n_small * d_small * 2, devices, hw);
  const AllReduceRun tiled = tiled_allreduce(partials, cluster, hw, 1 << 16);
  const AllReduceRun mono = monolithic_allreduce(partials, devices, hw, 1 << 16);
  fail.require(bitwise_equal(tiled.result, mono.result),
               "tiled result differs from monolithic AllReduce");
  tiled.timeline.validate();
  io::write_file_atomic(out_dir / "timeline_allreduce.json", tiled.timeline.to_json());
  std::cout << "allreduce-sim: " << rows.size() << " rows -> "
            << (out_dir / "allreduce_compare.csv") << "\n";
  return fail.finish("allreduce-sim");
}

int run_offload_plan(const std::string& config_path, const std::string& profile_path,
                     const std::string& model_path, const fs::path& out_dir) {
  const auto cfg = parse_config(
      config_path, {"schema_version", "m_gpu_bytes", "m_cpu_bytes", "devices", "sweep",
                    "comment"});
  const HardwareModel hw = profile_or(profile_path, default_v100ish());
  const ModelConfig model =
      model_path.empty() ? default_pangu38b() : load_model_config(model_path);
  const std::int64_t m_gpu = cfg.value("m_gpu_bytes", std::int64_t{9} * (1 << 29));
  const std::int64_t m_cpu = cfg.value("m_cpu_bytes", std::int64_t{1} << 40);
  const int devices = cfg.value("devices", 8);
  const auto sweep = seq_list(cfg, "sweep",
                              {1024, 2048, 4096, 8192, 16384, 32768, 65536, 131072,
                               262144});

  Failure fail;
  ModelConfig at_max = model;
  at_max.prompt_len = sweep.back();
  const MemoryPlan plan_max = plan(at_max, m_gpu, m_cpu, devices);
  fail.require(plan_max.l_gpu + plan_max.l_cpu == model.layers, "layer split sums to L");
  io::write_file_atomic(out_dir / "memory_plan.json", plan_max.to_json());

  const auto rows = decode_latency_compare(model, sweep, m_gpu, m_cpu, devices, hw);
  io::CsvTable csv({"Seq_length", "Upload", "GPU_Calc", "Total", "CPU_Calc",
                    "Off_Upload", "Total", "GPU_Calc"});
  double off_upload = -1.0;
  for (const auto& r : rows) {
    const double ms = 1e3;
    csv.add_row({io::cell(r.seq), dash_or(r.classical_upload * ms, r.offload),
                 io::cell(r.gpu_calc * ms),
                 io::cell(r.classical_total * ms),
                 dash_or(r.cpu_calc * ms, r.offload),
                 dash_or(r.off_upload * ms, r.offload),
                 io::cell(r.cooperative_total * ms), io::cell(r.gpu_calc * ms)});
    if (r.offload) {
      if (off_upload < 0) off_upload = r.off_upload;
      fail.require(r.off_upload == off_upload, "Off_Upload must be constant in S");
      fail.require(r.cooperative_total < r.classical_total,
                   "cooperative strategy must beat classical offloading");
    }
  }
  io::write_file_atomic(out_dir / "decode_latency.csv", csv.str());

  const auto overlap = prefill_offload_overlap(at_max, plan_max.l_cpu, devices, hw);
  overlap.timeline.validate();
  nlohmann::json j;
  j["schema_version"] = 1;
  j["added_latency_s"] = overlap.added_latency;
  j["makespan_s"] = overlap.timeline.makespan();
  j["events"] = overlap.timeline.events.size();
  io::write_file_atomic(out_dir / "prefill_overlap.json", j.dump(2) + "\n");
  std::cout << "offload-plan: " << rows.size() << " rows -> "
            << (out_dir / "decode_latency.csv") << "\n";
  return fail.finish("offload-plan");
}

int run_layout_check(const std::string& data_dir, const fs::path& out_dir) {
  Failure fail;
  io::CsvTable verdicts({"instr", "compatible", "exchanges_needed"});
  io::CsvTable ownership({"instr", "role", "thread", "reg", "row", "col"});
  const bool expected_compat[3] = {true, false, true};
  const MmaInstr instrs[3] = {MmaInstr::m16n8k16, MmaInstr::m8n8k4_f32acc,
                              MmaInstr::m8n8k4_f16acc};
  const char* roles[3] = {"A", "B", "C"};
  for (int idx = 0; idx < 3; ++idx) {
    FragmentMap map;
    if (!data_dir.empty()) {
      map = load_fragment_map(fs::path(data_dir) /
                              (std::string(instr_name(instrs[idx])) + ".json"));
    } else {
      map = canonical_fragment_map(instrs[idx]);
    }
    fail.require(map.partitions_exactly(),
                 std::string(instr_name(instrs[idx])) + " does not partition its tiles");
    const B2bReport report = check_b2b_compat(map);
    fail.require(report.compatible == expected_compat[idx],
                 std::string(instr_name(instrs[idx])) + " compatibility verdict");
    fail.require((report.exchanges_needed == 0) == report.compatible,
                 "exchange count inconsistent with the verdict");
    verdicts.add_row({io::cell(std::string(instr_name(instrs[idx]))),
                      io::cell(std::string(report.compatible ? "true" : "false")),
                      io::cell(report.exchanges_needed)});
    for (int role = 0; role < 3; ++role) {
      for (int t = 0; t < FragmentMap::kWarp; ++t) {
        const auto coords = map.role_thread(static_cast<MatrixRole>(role), t);
        for (std::size_t r = 0; r < coords.size(); ++r)
          ownership.add_row({io::cell(std::string(instr_name(instrs[idx]))),
                             io::cell(std::string(roles[role])),
                             io::cell(std::int64_t(t)), io::cell(std::int64_t(r)),
                             io::cell(coords[r].row), io::cell(coords[r].col)});
      }
    }
  }
  io::write_file_atomic(out_dir / "layout_verdicts.csv", verdicts.str());
  io::write_file_atomic(out_dir / "layout_ownership.csv", ownership.str());
  std::cout << verdicts.str();
  return fail.finish("layout-check");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tiled-attention kernels, masks and accelerator cost models"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  std::string config_path, profile_path, model_path, data_dir;
  std::string out = "out";
  std::uint64_t seed = 42;
  app.add_option("--config", config_path, "Experiment config JSON");
  app.add_option("--seed", seed, "RNG seed");
  app.add_option("--out", out, "Output directory");
  app.add_option("--profile", profile_path, "Hardware profile JSON");
  app.add_option("--model", model_path, "Model config JSON");
  app.add_option("--data-dir", data_dir, "Fragment-map data directory");

  auto* attn = app.add_subcommand("attn-check", "Blocked vs reference attention sweep");
  auto* mask = app.add_subcommand("mask-demo", "Block classification and mask memory");
  auto* pipe = app.add_subcommand("pipeline-sim", "Unified vs two-level tiling pipeline");
  auto* ar = app.add_subcommand("allreduce-sim", "Tiled AllReduce overlap schedule");
  auto* off = app.add_subcommand("offload-plan", "KV-cache memory plan and latency table");
  auto* lay = app.add_subcommand("layout-check", "MMA fragment ownership and b2b checks");
  auto* bench = app.add_subcommand("bench", "Run every experiment with its defaults");

  CLI11_PARSE(app, argc, argv);

  if (const int env = env_worker_override(); env > 0) g_workers = env;

  try {
    const fs::path out_dir(out);
    if (attn->parsed()) return run_attn_check(config_path, seed, out_dir);
    if (mask->parsed()) return run_mask_demo(config_path, out_dir);
    if (pipe->parsed()) return run_pipeline_sim(config_path, profile_path, out_dir);
    if (ar->parsed()) return run_allreduce_sim(config_path, profile_path, seed, out_dir);
    if (off->parsed())
      return run_offload_plan(config_path, profile_path, model_path, out_dir);
    if (lay->parsed()) return run_layout_check(data_dir, out_dir);
    if (bench->parsed()) {
      int rc = 0;
      rc |= run_attn_check("", seed, out_dir / "attn_check");
      rc |= run_mask_demo("", out_dir / "mask_demo");
      rc |= run_pipeline_sim("", "", out_dir / "pipeline_sim");
      rc |= run_allreduce_sim("", "", seed, out_dir / "allreduce_sim");
      rc |= run_offload_plan("", "", "", out_dir / "offload_plan");
      rc |= run_layout_check(data_dir, out_dir / "layout_check");
      return rc;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
