#include "attnkit/hardware.hpp"

#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "attnkit/io.hpp"

namespace attnkit {

void HardwareModel::validate() const {
  const auto positive = [](double v, const char* what) {
    if (!(v > 0.0) || std::isnan(v)) throw std::invalid_argument(std::string("hardware: ") + what + " must be > 0");
  };
  positive(cube_rate, "cube_rate");
  positive(vector_rate, "vector_rate");
  positive(gm_bw, "gm_bw");
  positive(l2_bw, "l2_bw");
  positive(l1_bw, "l1_bw");
  positive(interconnect_bw, "interconnect_bw");
  positive(pcie_bw, "pcie_bw");
  positive(cpu_rate, "cpu_rate");
  if (sync_latency < 0 || interconnect_latency < 0)
    throw std::invalid_argument("hardware: latencies must be >= 0");
  if (l1_capacity <= 0 || l0_capacity <= 0)
    throw std::invalid_argument("hardware: capacities must be > 0");
  if (sdma_channels < 1) throw std::invalid_argument("hardware: sdma_channels must be >= 1");
}

namespace {

double bw_field(const nlohmann::json& j) {
  // "inf" is accepted to express an idealized free resource.
  if (j.is_string() && j.get<std::string>() == "inf")
    return std::numeric_limits<double>::infinity();
  return j.get<double>();
}

}  // namespace

HardwareModel load_hardware_model(const std::filesystem::path& json_path) {
  const auto j = nlohmann::json::parse(io::read_file(json_path));
  static const std::set<std::string> known = {
      "schema_version", "name", "cube_rate_flops", "vector_rate_elems",
      "sync_latency_s", "gm_bw_Bps", "l2_bw_Bps", "l1_bw_Bps",
      "l1_capacity_B", "l0_capacity_B", "interconnect_bw_Bps",
      "interconnect_latency_s", "pcie_bw_Bps", "cpu_rate_flops",
      "sdma_channels", "comment"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key))
      throw std::invalid_argument("hardware profile: unknown key '" + key + "'");
  }
  if (j.at("schema_version").get<int>() != 1)
    throw std::invalid_argument("hardware profile: unsupported schema_version");

  HardwareModel hw;
  hw.name = j.value("name", std::string("unnamed"));
  hw.cube_rate = bw_field(j.at("cube_rate_flops"));
  hw.vector_rate = bw_field(j.at("vector_rate_elems"));
  hw.sync_latency = j.at("sync_latency_s").get<double>();
  hw.gm_bw = bw_field(j.at("gm_bw_Bps"));
  hw.l2_bw = bw_field(j.at("l2_bw_Bps"));
  hw.l1_bw = bw_field(j.at("l1_bw_Bps"));
  hw.l1_capacity = j.at("l1_capacity_B").get<std::int64_t>();
  hw.l0_capacity = j.at("l0_capacity_B").get<std::int64_t>();
  hw.interconnect_bw = bw_field(j.at("interconnect_bw_Bps"));
  hw.interconnect_latency = j.at("interconnect_latency_s").get<double>();
  hw.pcie_bw = bw_field(j.at("pcie_bw_Bps"));
  hw.cpu_rate = bw_field(j.at("cpu_rate_flops"));
  hw.sdma_channels = j.value("sdma_channels", 1);
  hw.validate();
  return hw;
}

std::string hardware_model_to_json(const HardwareModel& hw) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["name"] = hw.name;
  j["cube_rate_flops"] = hw.cube_rate;
  j["vector_rate_elems"] = hw.vector_rate;
  j["sync_latency_s"] = hw.sync_latency;
  j["gm_bw_Bps"] = hw.gm_bw;
  j["l2_bw_Bps"] = hw.l2_bw;
  j["l1_bw_Bps"] = hw.l1_bw;
  j["l1_capacity_B"] = hw.l1_capacity;
  j["l0_capacity_B"] = hw.l0_capacity;
  j["interconnect_bw_Bps"] = hw.interconnect_bw;
  j["interconnect_latency_s"] = hw.interconnect_latency;
  j["pcie_bw_Bps"] = hw.pcie_bw;
  j["cpu_rate_flops"] = hw.cpu_rate;
  j["sdma_channels"] = hw.sdma_channels;
  return j.dump(2) + "\n";
}

}  // namespace attnkit
