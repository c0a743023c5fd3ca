#include "attnkit/offload.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "attnkit/common.hpp"
#include "attnkit/io.hpp"

namespace attnkit {

void ModelConfig::validate() const {
  if (layers < 1 || hidden < 1 || mlp_hidden < 1 || heads < 1 || head_dim < 1 ||
      vocab < 1 || batch < 1 || prompt_len < 1 || output_len < 0 || bytes_per_scalar < 1)
    throw std::invalid_argument("model_config: all dimensions must be positive");
  if (hidden != heads * head_dim)
    throw std::invalid_argument("model_config: H1 must equal heads * head_dim");
}

ModelConfig load_model_config(const std::filesystem::path& json_path) {
  const auto j = nlohmann::json::parse(io::read_file(json_path));
  static const std::set<std::string> known = {
      "schema_version", "name",  "layers", "heads",      "head_dim",
      "mlp_hidden",     "vocab", "batch",  "prompt_len", "output_len",
      "bytes_per_scalar", "comment"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key))
      throw std::invalid_argument("model config: unknown key '" + key + "'");
  }
  if (j.at("schema_version").get<int>() != 1)
    throw std::invalid_argument("model config: unsupported schema_version");
  ModelConfig m;
  m.layers = j.at("layers").get<std::int64_t>();
  m.heads = j.at("heads").get<std::int64_t>();
  m.head_dim = j.at("head_dim").get<std::int64_t>();
  m.hidden = m.heads * m.head_dim;
  m.mlp_hidden = j.at("mlp_hidden").get<std::int64_t>();
  m.vocab = j.at("vocab").get<std::int64_t>();
  m.batch = j.at("batch").get<std::int64_t>();
  m.prompt_len = j.at("prompt_len").get<std::int64_t>();
  m.output_len = j.at("output_len").get<std::int64_t>();
  m.bytes_per_scalar = j.value("bytes_per_scalar", std::int64_t{2});
  m.validate();
  return m;
}

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace

std::string MemoryPlan::to_json() const {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["l_gpu"] = l_gpu;
  j["l_cpu"] = l_cpu;
  j["formula_l_gpu"] = formula_l_gpu;
  j["weight_bytes"] = weight_bytes;
  j["kv_bytes_per_layer_per_device"] = kv_bytes_per_layer;
  j["mid_bytes_per_device"] = mid_bytes;
  j["vocab_bytes_per_device"] = vocab_bytes;
  j["vocab_bytes_per_device_widened"] = vocab_bytes_widened;
  j["cpu_kv_bytes"] = cpu_kv_bytes;
  j["feasible"] = feasible;
  return j.dump(2) + "\n";
}

MemoryPlan plan(const ModelConfig& model, std::int64_t m_gpu_bytes,
                std::int64_t m_cpu_bytes, int devices) {
  model.validate();
  if (devices < 1) throw std::invalid_argument("plan: devices must be >= 1");
  if (m_gpu_bytes < 0 || m_cpu_bytes < 0)
    throw std::invalid_argument("plan: memory sizes must be >= 0");
  const std::int64_t n = devices;
  const std::int64_t h1 = model.hidden, h2 = model.mlp_hidden;
  const std::int64_t ctx = model.prompt_len + model.output_len;

  MemoryPlan p;
  p.weight_bytes = model.layers * (8 * h1 * h1 + 4 * h1 * h2);
  const std::int64_t kv_layer_full = 4 * model.batch * h1 * ctx;  // all devices
  if (kv_layer_full <= 0) throw std::invalid_argument("plan: non-positive KV denominator");
  p.kv_bytes_per_layer = kv_layer_full / n;
  p.mid_bytes = 6 * model.batch * model.prompt_len * h1 / n;
  // The vocabulary term follows the planner formula literally (no width
  // factor); the width-adjusted value is reported alongside.
  p.vocab_bytes = model.vocab * h1;
  p.vocab_bytes_widened = model.vocab * h1 * model.bytes_per_scalar;

  const std::int64_t numerator = n * m_gpu_bytes - p.weight_bytes -
                                 6 * model.batch * model.prompt_len * h1 -
                                 n * p.vocab_bytes;
  p.formula_l_gpu = floor_div(numerator, kv_layer_full);
  p.l_gpu = std::clamp<std::int64_t>(p.formula_l_gpu, 0, model.layers);
  p.l_cpu = model.layers - p.l_gpu;
  p.cpu_kv_bytes = p.l_cpu * kv_layer_full;
  p.feasible = p.formula_l_gpu >= 0 && p.cpu_kv_bytes <= m_cpu_bytes;
  return p;
}

TensorD cpu_decode_attention(const TensorD& q, const TensorD& cache_k,
                             const TensorD& cache_v, int workers) {
  if (workers < 1) throw std::invalid_argument("cpu_decode_attention: workers must be >= 1");
  if (q.rank() != 4 || q.extent(1) != 1)
    throw ShapeError("cpu_decode_attention: [B,1,N,D] query required");
  if (cache_k.rank() != 3 || !cache_k.same_shape(cache_v))
    throw ShapeError("cpu_decode_attention: [B,S,H1] cache slices required");
  const std::int64_t b = q.extent(0), heads = q.extent(2), d = q.extent(3);
  const std::int64_t sc = cache_k.extent(1);
  if (sc < 1) throw ShapeError("cpu_decode_attention: cache is empty");
  if (cache_k.extent(0) != b || cache_k.extent(2) != heads * d)
    throw ShapeError("cpu_decode_attention: cache does not match the query");

  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  TensorD out({b, 1, heads, d});
  parallel_for(b * heads, workers, [&](std::int64_t task) {
    const std::int64_t ni = task % heads;
    const std::int64_t bi = task / heads;
    std::vector<double> scores(static_cast<std::size_t>(sc));
    double best = -std::numeric_limits<double>::infinity();
    for (std::int64_t j = 0; j < sc; ++j) {
      double dot = 0.0;
      for (std::int64_t di = 0; di < d; ++di)
        dot += q(bi, 0, ni, di) * cache_k(bi, j, ni * d + di);
      scores[j] = dot * inv_sqrt_d;
      best = std::max(best, scores[j]);
    }
    double denom = 0.0;
    for (std::int64_t j = 0; j < sc; ++j) {
      scores[j] = std::exp(scores[j] - best);
      denom += scores[j];
    }
    for (std::int64_t di = 0; di < d; ++di) {
      double acc = 0.0;
      for (std::int64_t j = 0; j < sc; ++j)
        acc += scores[j] / denom * cache_v(bi, j, ni * d + di);
      out(bi, 0, ni, di) = acc;
    }
  });
  return out;
}

std::vector<DecodeLatencyRow> decode_latency_compare(const ModelConfig& model,
                                                     std::span<const std::int64_t> seqs,
                                                     std::int64_t m_gpu_bytes,
                                                     std::int64_t m_cpu_bytes, int devices,
                                                     const HardwareModel& hw) {
  model.validate();
  hw.validate();
  std::vector<DecodeLatencyRow> rows;
  const double n = static_cast<double>(devices);
  for (std::int64_t s : seqs) {
    ModelConfig m = model;
    m.prompt_len = s;
    const MemoryPlan p = plan(m, m_gpu_bytes, m_cpu_bytes, devices);

    DecodeLatencyRow row;
    row.seq = s;
    // Per-device decode attention at context length S: QK^T and PV are
    // each 2*B*H1*S FLOPs over the device's KV shard.
    const double attn_flops = 4.0 * static_cast<double>(m.batch * m.hidden * s) / n;
    row.gpu_calc = attn_flops / hw.cube_rate;
    row.offload = p.l_cpu > 0;
    if (row.offload) {
      const double kv_bytes =
          4.0 * static_cast<double>(m.batch * m.hidden * s) / n;  // 2 tensors, 2B each
      row.classical_upload = kv_bytes / hw.pcie_bw;
      row.classical_total = row.classical_upload + row.gpu_calc;
      row.cpu_calc = attn_flops / hw.cpu_rate;
      // QKV down plus the result up: four B*1*H1 tensors, independent of S.
      const double off_bytes =
          4.0 * static_cast<double>(m.batch * m.hidden * m.bytes_per_scalar) / n;
      row.off_upload = off_bytes / hw.pcie_bw;
      row.cooperative_total = row.cpu_calc + row.off_upload;
    } else {
      row.classical_total = row.gpu_calc;
      row.cooperative_total = row.gpu_calc;
    }
    rows.push_back(row);
  }
  return rows;
}

PrefillOverlapReport prefill_offload_overlap(const ModelConfig& model, std::int64_t l_cpu,
                                             int devices, const HardwareModel& hw) {
  model.validate();
  hw.validate();
  if (l_cpu < 0 || l_cpu > model.layers)
    throw std::invalid_argument("prefill_offload_overlap: l_cpu out of range");
  const double n = static_cast<double>(devices);
  const double s = static_cast<double>(model.prompt_len);
  const double h1 = static_cast<double>(model.hidden);
  const double h2 = static_cast<double>(model.mlp_hidden);
  const double b = static_cast<double>(model.batch);

  // Per-device prefill stage times for one layer.
  const double qkv_time = 6.0 * b * s * h1 * h1 / n / hw.cube_rate;
  const double rest_flops = 4.0 * b * s * s * h1 / n   // attention
                            + 2.0 * b * s * h1 * h1 / n // output projection
                            + 4.0 * b * s * h1 * h2 / n; // MLP
  const double rest_time = rest_flops / hw.cube_rate;
  const double kv_bytes = 4.0 * b * h1 * s / n;
  const double offload_time = std::isinf(hw.pcie_bw) ? 0.0 : kv_bytes / hw.pcie_bw;

  PrefillOverlapReport report;
  TimelineBuilder tb;
  std::int32_t prev_layer_done = -1;
  for (std::int64_t layer = 0; layer < model.layers; ++layer) {
    std::vector<std::int32_t> qkv_deps;
    if (prev_layer_done >= 0) qkv_deps.push_back(prev_layer_done);
    const std::int32_t qkv =
        tb.add(Resource::Cube, 0, "qkv_proj", qkv_time, qkv_deps, 0,
               static_cast<std::int64_t>(6.0 * b * s * h1 * h1 / n));
    const std::array<std::int32_t, 1> dep_qkv{qkv};
    const std::int32_t rest = tb.add(Resource::Cube, 0, "attn_mlp", rest_time, dep_qkv, 0,
                                     static_cast<std::int64_t>(rest_flops));
    if (layer < l_cpu) {
      const std::int32_t off =
          tb.add(Resource::Dma, 0, "kv_offload", offload_time, dep_qkv,
                 static_cast<std::int64_t>(kv_bytes));
      report.added_latency +=
          std::max(0.0, tb.event_end(off) - tb.event_end(rest));
      // The next layer cannot outrun the single offload buffer.
      prev_layer_done = tb.event_end(off) > tb.event_end(rest) ? off : rest;
    } else {
      prev_layer_done = rest;
    }
  }
  report.timeline = tb.finish();
  return report;
}

}  // namespace attnkit
