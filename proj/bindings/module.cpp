#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "attnkit/attention_ref.hpp"
#include "attnkit/comm.hpp"
#include "attnkit/flash.hpp"
#include "attnkit/hardware.hpp"
#include "attnkit/mma_layout.hpp"
#include "attnkit/offload.hpp"
#include "attnkit/pipeline_sim.hpp"
#include "attnkit/tiling_mask.hpp"

namespace py = pybind11;
using namespace attnkit;

namespace {

TensorD tensor_from(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
  std::vector<std::int64_t> shape(arr.ndim());
  for (py::ssize_t d = 0; d < arr.ndim(); ++d) shape[d] = arr.shape(d);
  std::vector<double> data(arr.data(), arr.data() + arr.size());
  return TensorD(std::move(shape), std::move(data));
}

py::array_t<double> array_from(const TensorD& t) {
  py::array_t<double> out(t.shape());
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

HardwareModel hw_from(const py::dict& d) {
  HardwareModel hw;
  for (const auto& item : d) {
    const auto key = item.first.cast<std::string>();
    const auto value = [&] { return item.second.cast<double>(); };
    if (key == "cube_rate") hw.cube_rate = value();
    else if (key == "vector_rate") hw.vector_rate = value();
    else if (key == "sync_latency") hw.sync_latency = value();
    else if (key == "gm_bw") hw.gm_bw = value();
    else if (key == "l2_bw") hw.l2_bw = value();
    else if (key == "l1_bw") hw.l1_bw = value();
    else if (key == "l1_capacity") hw.l1_capacity = item.second.cast<std::int64_t>();
    else if (key == "l0_capacity") hw.l0_capacity = item.second.cast<std::int64_t>();
    else if (key == "interconnect_bw") hw.interconnect_bw = value();
    else if (key == "interconnect_latency") hw.interconnect_latency = value();
    else if (key == "pcie_bw") hw.pcie_bw = value();
    else if (key == "cpu_rate") hw.cpu_rate = value();
    else if (key == "sdma_channels") hw.sdma_channels = item.second.cast<int>();
    else if (key == "name") hw.name = item.second.cast<std::string>();
    else throw std::invalid_argument("hardware: unknown key '" + key + "'");
  }
  hw.validate();
  return hw;
}

ModelConfig model_from(const py::dict& d) {
  ModelConfig m;
  for (const auto& item : d) {
    const auto key = item.first.cast<std::string>();
    const auto value = [&] { return item.second.cast<std::int64_t>(); };
    if (key == "layers") m.layers = value();
    else if (key == "heads") m.heads = value();
    else if (key == "head_dim") m.head_dim = value();
    else if (key == "mlp_hidden") m.mlp_hidden = value();
    else if (key == "vocab") m.vocab = value();
    else if (key == "batch") m.batch = value();
    else if (key == "prompt_len") m.prompt_len = value();
    else if (key == "output_len") m.output_len = value();
    else if (key == "bytes_per_scalar") m.bytes_per_scalar = value();
    else throw std::invalid_argument("model: unknown key '" + key + "'");
  }
  m.hidden = m.heads * m.head_dim;
  m.validate();
  return m;
}

const char* kind_name(BlockKind k) {
  switch (k) {
    case BlockKind::Empty: return "empty";
    case BlockKind::Full: return "full";
    case BlockKind::Partial: return "partial";
  }
  return "?";
}

py::dict timeline_summary(const Timeline& tl) {
  tl.validate();
  py::dict out;
  out["makespan"] = tl.makespan();
  out["sync_count"] = tl.sync_count();
  out["events"] = static_cast<std::int64_t>(tl.events.size());
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Tiled attention kernels, masks and accelerator cost models";

  m.def(
      "std_attention",
      [](const py::array_t<double>& q, const py::array_t<double>& k,
         const py::array_t<double>& v, bool causal) {
        return array_from(std_attention(tensor_from(q), tensor_from(k), tensor_from(v),
                                        causal));
      },
      py::arg("q"), py::arg("k"), py::arg("v"), py::arg("causal") = false,
      "Reference attention over [B,S,N,D] arrays with full score matrices.");

  m.def(
      "flash_attention",
      [](const py::array_t<double>& q, const py::array_t<double>& k,
         const py::array_t<double>& v, std::int64_t b_q, std::int64_t b_kv1,
         std::int64_t b_kv2, bool causal, std::int64_t mask_block_max, int workers) {
        TileConfig cfg;
        cfg.b_q = b_q;
        cfg.b_kv1 = b_kv1;
        cfg.b_kv2 = b_kv2;
        cfg.causal = causal;
        cfg.mask_block_max = mask_block_max;
        return array_from(flash_attention(tensor_from(q), tensor_from(k), tensor_from(v),
                                          cfg, workers));
      },
      py::arg("q"), py::arg("k"), py::arg("v"), py::arg("b_q") = 128,
      py::arg("b_kv1") = 512, py::arg("b_kv2") = 128, py::arg("causal") = false,
      py::arg("mask_block_max") = 512, py::arg("workers") = 1,
      "Blocked attention with the online-softmax recurrence.");

  m.def(
      "skip_stats",
      [](std::int64_t seq, std::int64_t b_q, std::int64_t b_kv2, bool causal) {
        TileConfig cfg;
        cfg.b_q = b_q;
        cfg.b_kv1 = b_kv2;
        cfg.b_kv2 = b_kv2;
        cfg.causal = causal;
        cfg.mask_block_max = std::max(b_q, b_kv2);
        const SkipStats s = skip_stats(seq, cfg);
        py::dict out;
        out["empty"] = s.empty;
        out["full"] = s.full;
        out["partial"] = s.partial;
        return out;
      },
      py::arg("seq"), py::arg("b_q"), py::arg("b_kv2"), py::arg("causal") = true);

  m.def(
      "build_mmask",
      [](std::int64_t mask_block_max) {
        const MMask mask = build_mmask(mask_block_max);
        py::array_t<bool> out({mask.side(), mask.side()});
        for (std::int64_t x = 0; x < mask.side(); ++x)
          for (std::int64_t y = 0; y < mask.side(); ++y)
            out.mutable_at(x, y) = mask.bit(x, y);
        return out;
      },
      py::arg("mask_block_max"), "The (2M)x(2M) lower-triangular generator.");

  m.def(
      "classify_block",
      [](std::int64_t i, std::int64_t j, std::int64_t b_r, std::int64_t b_c,
         std::int64_t seq) {
        const BlockClass cls = classify_block(i, j, b_r, b_c, seq);
        return py::make_tuple(kind_name(cls.kind), cls.offset);
      },
      py::arg("i"), py::arg("j"), py::arg("b_r"), py::arg("b_c"), py::arg("seq"));

  m.def(
      "extract_bmask",
      [](std::int64_t mask_block_max, std::int64_t offset, std::int64_t b_r,
         std::int64_t b_c) {
        const auto bits = extract_bmask(build_mmask(mask_block_max), offset, b_r, b_c);
        py::array_t<bool> out({b_r, b_c});
        for (std::int64_t r = 0; r < b_r; ++r)
          for (std::int64_t c = 0; c < b_c; ++c)
            out.mutable_at(r, c) = bits[static_cast<std::size_t>(r * b_c + c)] != 0;
        return out;
      },
      py::arg("mask_block_max"), py::arg("offset"), py::arg("b_r"), py::arg("b_c"));

  m.def(
      "mask_memory_bytes",
      [](std::uint64_t seq, std::uint64_t mask_block_max, std::uint64_t bytes_per_elem) {
        const MaskMemory mm = mask_memory_bytes(seq, mask_block_max, bytes_per_elem);
        return py::make_tuple(mm.full_bytes, mm.mmask_bytes);
      },
      py::arg("seq"), py::arg("mask_block_max"), py::arg("bytes_per_element"));

  m.def(
      "prefill_layer",
      [](const py::array_t<double>& x, const py::dict& weights, std::int64_t heads) {
        LayerWeights<double> w{
            tensor_from(weights["w_q"].cast<py::array_t<double>>()),
            tensor_from(weights["w_k"].cast<py::array_t<double>>()),
            tensor_from(weights["w_v"].cast<py::array_t<double>>()),
            tensor_from(weights["w_o"].cast<py::array_t<double>>()),
            tensor_from(weights["w_1"].cast<py::array_t<double>>()),
            tensor_from(weights["w_2"].cast<py::array_t<double>>())};
        KvCache<double> cache;
        const TensorD out = prefill_layer(tensor_from(x), w, cache, heads);
        return py::make_tuple(array_from(out), array_from(cache.k), array_from(cache.v));
      },
      py::arg("x"), py::arg("weights"), py::arg("heads"),
      "One prefill pass; returns (output, cache_k, cache_v).");

  m.def(
      "simulate_unified",
      [](std::int64_t batch, std::int64_t seq, std::int64_t heads, std::int64_t head_dim,
         std::int64_t b_q, std::int64_t b_kv, const py::dict& hw) {
        return timeline_summary(
            simulate_unified({batch, seq, heads, head_dim}, b_q, b_kv, hw_from(hw)));
      },
      py::arg("batch"), py::arg("seq"), py::arg("heads"), py::arg("head_dim"),
      py::arg("b_q"), py::arg("b_kv"), py::arg("hw") = py::dict());

  m.def(
      "simulate_two_level",
      [](std::int64_t batch, std::int64_t seq, std::int64_t heads, std::int64_t head_dim,
         std::int64_t b_q, std::int64_t b_kv1, std::int64_t b_kv2, const py::dict& hw) {
        return timeline_summary(simulate_two_level({batch, seq, heads, head_dim}, b_q,
                                                   b_kv1, b_kv2, hw_from(hw)));
      },
      py::arg("batch"), py::arg("seq"), py::arg("heads"), py::arg("head_dim"),
      py::arg("b_q"), py::arg("b_kv1"), py::arg("b_kv2"), py::arg("hw") = py::dict());

  m.def(
      "compare_tilings",
      [](const std::vector<std::int64_t>& seqs, std::int64_t batch, std::int64_t heads,
         std::int64_t head_dim, std::int64_t b_q, std::int64_t b_kv1, std::int64_t b_kv2,
         const py::dict& hw) {
        py::list out;
        for (const auto& r : compare_tilings(seqs, {batch, 0, heads, head_dim}, b_q,
                                             b_kv1, b_kv2, hw_from(hw))) {
          py::dict row;
          row["seq"] = r.seq;
          row["unified_makespan"] = r.unified_makespan;
          row["two_level_makespan"] = r.two_level_makespan;
          row["reduction_pct"] = r.reduction_pct;
          row["unified_syncs"] = r.unified_syncs;
          row["two_level_syncs"] = r.two_level_syncs;
          out.append(row);
        }
        return out;
      },
      py::arg("seqs"), py::arg("batch"), py::arg("heads"), py::arg("head_dim"),
      py::arg("b_q"), py::arg("b_kv1"), py::arg("b_kv2"), py::arg("hw") = py::dict());

  m.def(
      "tp_attention_linear",
      [](const py::array_t<double>& q, const py::array_t<double>& k,
         const py::array_t<double>& v, const py::array_t<double>& w_o, int devices) {
        return array_from(
            tp_attention_linear(tensor_from(q), tensor_from(k), tensor_from(v),
                                tensor_from(w_o), devices));
      },
      py::arg("q"), py::arg("k"), py::arg("v"), py::arg("w_o"), py::arg("devices"),
      "Head-sharded attention+linear reduced over devices in fixed order.");

  m.def(
      "choose_block_rows",
      [](std::int64_t total_rows, int n_blocks, std::int64_t flops_per_row,
         std::int64_t bytes_per_row, int devices, const py::dict& hw) {
        return choose_block_rows(total_rows, n_blocks, flops_per_row, bytes_per_row,
                                 devices, hw_from(hw));
      },
      py::arg("total_rows"), py::arg("n_blocks"), py::arg("flops_per_row"),
      py::arg("bytes_per_row"), py::arg("devices"), py::arg("hw") = py::dict());

  m.def(
      "compare_allreduce",
      [](const std::vector<std::int64_t>& seqs, std::int64_t batch, std::int64_t heads,
         std::int64_t head_dim, int devices, int n_blocks, const py::dict& hw) {
        py::list out;
        for (const auto& r :
             compare_allreduce(seqs, batch, heads, head_dim, devices, n_blocks,
                               hw_from(hw))) {
          py::dict row;
          row["seq"] = r.seq;
          row["baseline_ms"] = r.baseline_ms;
          row["tiled_ms"] = r.tiled_ms;
          row["speedup"] = r.speedup;
          out.append(row);
        }
        return out;
      },
      py::arg("seqs"), py::arg("batch"), py::arg("heads"), py::arg("head_dim"),
      py::arg("devices"), py::arg("n_blocks"), py::arg("hw") = py::dict());

  m.def(
      "plan",
      [](const py::dict& model, std::int64_t m_gpu_bytes, std::int64_t m_cpu_bytes,
         int devices) {
        const MemoryPlan p = plan(model_from(model), m_gpu_bytes, m_cpu_bytes, devices);
        py::dict out;
        out["l_gpu"] = p.l_gpu;
        out["l_cpu"] = p.l_cpu;
        out["formula_l_gpu"] = p.formula_l_gpu;
        out["weight_bytes"] = p.weight_bytes;
        out["kv_bytes_per_layer"] = p.kv_bytes_per_layer;
        out["mid_bytes"] = p.mid_bytes;
        out["vocab_bytes"] = p.vocab_bytes;
        out["vocab_bytes_widened"] = p.vocab_bytes_widened;
        out["cpu_kv_bytes"] = p.cpu_kv_bytes;
        out["feasible"] = p.feasible;
        return out;
      },
      py::arg("model"), py::arg("m_gpu_bytes"), py::arg("m_cpu_bytes"),
      py::arg("devices"), "Host/device KV-cache split for a model configuration.");

  m.def(
      "cpu_decode_attention",
      [](const py::array_t<double>& q, const py::array_t<double>& cache_k,
         const py::array_t<double>& cache_v, int workers) {
        return array_from(cpu_decode_attention(tensor_from(q), tensor_from(cache_k),
                                               tensor_from(cache_v), workers));
      },
      py::arg("q"), py::arg("cache_k"), py::arg("cache_v"), py::arg("workers") = 1);

  m.def(
      "decode_latency_compare",
      [](const py::dict& model, const std::vector<std::int64_t>& seqs,
         std::int64_t m_gpu_bytes, std::int64_t m_cpu_bytes, int devices,
         const py::dict& hw) {
        py::list out;
        for (const auto& r : decode_latency_compare(model_from(model), seqs, m_gpu_bytes,
                                                    m_cpu_bytes, devices, hw_from(hw))) {
          py::dict row;
          row["seq"] = r.seq;
          row["offload"] = r.offload;
          row["classical_upload"] = r.classical_upload;
          row["gpu_calc"] = r.gpu_calc;
          row["classical_total"] = r.classical_total;
          row["cpu_calc"] = r.cpu_calc;
          row["off_upload"] = r.off_upload;
          row["cooperative_total"] = r.cooperative_total;
          out.append(row);
        }
        return out;
      },
      py::arg("model"), py::arg("seqs"), py::arg("m_gpu_bytes"), py::arg("m_cpu_bytes"),
      py::arg("devices"), py::arg("hw") = py::dict());

  m.def(
      "layout_eval",
      [](const std::vector<std::int64_t>& shape, const std::vector<std::int64_t>& stride,
         const std::vector<std::int64_t>& coord) {
        return Layout{shape, stride}(coord);
      },
      py::arg("shape"), py::arg("stride"), py::arg("coord"),
      "Index of a coordinate under a (shape, stride) layout.");

  m.def(
      "check_b2b_compat",
      [](const std::string& instr) {
        const B2bReport r = check_b2b_compat(canonical_fragment_map(parse_instr(instr)));
        return py::make_tuple(r.compatible, r.exchanges_needed);
      },
      py::arg("instr"),
      "Whether a multiply's C fragments feed the next multiply's A fragments "
      "without thread exchanges.");

  m.def(
      "fragment_owners",
      [](const std::string& instr, const std::string& role) {
        const FragmentMap map = canonical_fragment_map(parse_instr(instr));
        const MatrixRole r = role == "A"   ? MatrixRole::A
                             : role == "B" ? MatrixRole::B
                                           : MatrixRole::C;
        py::dict out;
        for (int t = 0; t < FragmentMap::kWarp; ++t) {
          const auto coords = map.role_thread(r, t);
          if (coords.empty()) continue;
          py::list list;
          for (const Coord& c : coords) list.append(py::make_tuple(c.row, c.col));
          out[py::int_(t)] = list;
        }
        return out;
      },
      py::arg("instr"), py::arg("role"));
}
