#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace attnkit {

// Rates, latencies and capacities that drive every simulator. The shipped
// profiles are fictional calibration constants, not measurements of any
// device; tests assert trends and exact event counts, never absolute times.
struct HardwareModel {
  std::string name = "default";
  double cube_rate = 5e13;            // matrix engine, FLOP/s
  double vector_rate = 2e10;          // element-wise engine, elements/s
  double sync_latency = 3e-6;         // s per Cube<->Vector handoff
  double gm_bw = 4e11;                // global memory, bytes/s
  double l2_bw = 1e12;                // bytes/s
  double l1_bw = 2e12;                // bytes/s
  std::int64_t l1_capacity = 1 << 20; // bytes
  std::int64_t l0_capacity = 1 << 18; // bytes
  double interconnect_bw = 1.7e10;    // per link, bytes/s
  double interconnect_latency = 5e-6; // s per hop
  double pcie_bw = 1.2e10;            // bytes/s
  double cpu_rate = 1.6e10;           // FLOP/s
  int sdma_channels = 1;

  void validate() const;
};

HardwareModel load_hardware_model(const std::filesystem::path& json_path);
std::string hardware_model_to_json(const HardwareModel& hw);

}  // namespace attnkit
