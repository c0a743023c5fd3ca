#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include "attnkit/common.hpp"
#include "attnkit/io.hpp"
#include "attnkit/pipeline_sim.hpp"

using namespace attnkit;

namespace {

HardwareModel test_hw() {
  HardwareModel hw;
  hw.cube_rate = 1e12;
  hw.vector_rate = 2e10;
  hw.sync_latency = 3e-6;
  hw.gm_bw = 4e11;
  hw.l1_capacity = 1 << 20;
  hw.l0_capacity = 1 << 18;
  return hw;
}

}  // namespace

TEST_CASE("single-block unified makespan is the serial stage chain") {
  AttnShape shape{1, 64, 1, 32};
  HardwareModel hw = test_hw();
  const Timeline tl = simulate_unified(shape, 64, 64, hw);
  tl.validate();
  const double t_qk = 2.0 * 64 * 64 * 32 / hw.cube_rate;
  const double t_exp = 64.0 * 64 / hw.vector_rate;
  const double t_pv = t_qk;
  CHECK(tl.makespan() == doctest::Approx(t_qk + t_exp + t_pv + 2 * hw.sync_latency)
                             .epsilon(1e-12));
  CHECK(tl.sync_count() == 2);
}

TEST_CASE("sync counts follow the exact block-count formulas") {
  HardwareModel hw = test_hw();
  for (std::int64_t s : {256, 384, 1024}) {
    AttnShape shape{2, s, 3, 64};
    const std::int64_t b_q = 64, b_kv1 = 128, b_kv2 = 32;
    const Timeline uni = simulate_unified(shape, b_q, b_kv2, hw);
    const Timeline two = simulate_two_level(shape, b_q, b_kv1, b_kv2, hw);
    const std::int64_t nq = (s + b_q - 1) / b_q;
    CHECK(uni.sync_count() ==
          2 * ((s + b_kv2 - 1) / b_kv2) * nq * shape.batch * shape.heads);
    CHECK(two.sync_count() ==
          2 * ((s + b_kv1 - 1) / b_kv1) * nq * shape.batch * shape.heads);
    uni.validate();
    two.validate();
  }
}

TEST_CASE("two-level degenerates to unified sync count at b_kv1 == b_kv2") {
  HardwareModel hw = test_hw();
  AttnShape shape{1, 512, 1, 64};
  CHECK(simulate_two_level(shape, 64, 64, 64, hw).sync_count() ==
        simulate_unified(shape, 64, 64, hw).sync_count());
  CHECK(simulate_two_level(shape, 64, 256, 64, hw).sync_count() * 4 ==
        simulate_unified(shape, 64, 64, hw).sync_count());
}

TEST_CASE("zero-sync equal stages approach the busier unit plus fill") {
  HardwareModel hw = test_hw();
  hw.sync_latency = 0.0;
  // Make one vector stage exactly as long as one cube stage.
  const std::int64_t b = 64, d = 32;
  hw.vector_rate = static_cast<double>(b) / (2.0 * b * d / hw.cube_rate);
  AttnShape shape{1, 4096, 1, d};
  const Timeline tl = simulate_unified(shape, b, b, hw);
  const double t_stage = 2.0 * b * b * d / hw.cube_rate;
  const std::int64_t blocks = (4096 / b) * (4096 / b);
  // Cube does two stages per block and is the bottleneck; one extra stage
  // pair covers the pipeline fill and drain.
  const double lower = 2.0 * blocks * t_stage;
  CHECK(tl.makespan() >= lower);
  CHECK(tl.makespan() <= lower + 2.5 * t_stage * (4096 / b));
}

TEST_CASE("vector-bound makespans ignore the cube rate") {
  HardwareModel hw = test_hw();
  hw.vector_rate = 1e8;  // exp dominates everything
  AttnShape shape{1, 1024, 1, 32};
  const double base = simulate_unified(shape, 128, 128, hw).makespan();
  hw.cube_rate *= 2.0;
  const double faster = simulate_unified(shape, 128, 128, hw).makespan();
  CHECK(faster <= base);
  CHECK((base - faster) / base < 0.01);
}

TEST_CASE("capacity violations name the buffer") {
  HardwareModel hw = test_hw();
  AttnShape shape{1, 4096, 1, 128};
  hw.l1_capacity = 1024;
  CHECK_THROWS_WITH_AS(simulate_unified(shape, 128, 128, hw),
                       "unified tiling: block working set exceeds L1",
                       InfeasibleConfigError);
  try {
    simulate_unified(shape, 128, 128, hw);
  } catch (const InfeasibleConfigError& e) {
    CHECK(e.buffer() == "L1");
  }
  hw = test_hw();
  hw.l0_capacity = 1024;
  try {
    simulate_two_level(shape, 128, 512, 128, hw);
    CHECK(false);
  } catch (const InfeasibleConfigError& e) {
    CHECK(e.buffer() == "L0");
  }
}

TEST_CASE("hidden DMA only exposes the very first transfer") {
  HardwareModel hw = test_hw();
  hw.sync_latency = 1e-6;
  AttnShape shape{1, 2048, 1, 64};
  const std::int64_t b_q = 128, b_kv1 = 512, b_kv2 = 128;
  const Timeline finite = simulate_two_level(shape, b_q, b_kv1, b_kv2, hw);
  HardwareModel inf = hw;
  inf.gm_bw = std::numeric_limits<double>::infinity();
  const Timeline free_dma = simulate_two_level(shape, b_q, b_kv1, b_kv2, inf);
  const double first_dma = 128.0 * 64 * 2 / hw.gm_bw;
  CHECK(finite.makespan() ==
        doctest::Approx(free_dma.makespan() + first_dma).epsilon(1e-12));
}

TEST_CASE("sync-dominated reduction approaches 1 - b_kv2/b_kv1") {
  HardwareModel hw = test_hw();
  hw.sync_latency = 10.0;  // dwarfs every compute stage
  AttnShape shape{1, 4096, 1, 64};
  const std::int64_t seqs[] = {4096};
  const auto rows = compare_tilings(seqs, shape, 128, 512, 128, hw);
  CHECK(rows[0].reduction_pct ==
        doctest::Approx(100.0 * (1.0 - 128.0 / 512.0)).epsilon(1e-3));
}

TEST_CASE("free syncs and free DMA erase the two-level advantage") {
  HardwareModel hw = test_hw();
  hw.sync_latency = 0.0;
  hw.gm_bw = std::numeric_limits<double>::infinity();
  AttnShape shape{1, 1, 1, 64};
  const std::int64_t seqs[] = {2048, 4096};
  const auto rows = compare_tilings(seqs, shape, 128, 512, 128, hw);
  for (const auto& row : rows) CHECK(std::abs(row.reduction_pct) <= 1.0);
}

TEST_CASE("makespan is monotone in the hardware rates") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> scale(1.1, 4.0);
  AttnShape shape{1, 1024, 2, 64};
  for (int trial = 0; trial < 10; ++trial) {
    HardwareModel hw = test_hw();
    hw.cube_rate *= scale(rng);
    hw.vector_rate *= scale(rng);
    hw.sync_latency *= scale(rng);
    const double base_uni = simulate_unified(shape, 128, 128, hw).makespan();
    const double base_two = simulate_two_level(shape, 128, 512, 128, hw).makespan();

    HardwareModel faster = hw;
    switch (trial % 3) {
      case 0: faster.cube_rate *= 2.0; break;
      case 1: faster.vector_rate *= 2.0; break;
      case 2: faster.gm_bw *= 2.0; break;
    }
    CHECK(simulate_unified(shape, 128, 128, faster).makespan() <= base_uni);
    CHECK(simulate_two_level(shape, 128, 512, 128, faster).makespan() <= base_two);

    HardwareModel slower = hw;
    slower.sync_latency *= 3.0;
    CHECK(simulate_unified(shape, 128, 128, slower).makespan() >= base_uni);
    CHECK(simulate_two_level(shape, 128, 512, 128, slower).makespan() >= base_two);
  }
}

TEST_CASE("hardware profiles load from the shipped files") {
  namespace fs = std::filesystem;
  const fs::path configs = fs::path(ATTNKIT_SOURCE_DIR) / "configs";
  const HardwareModel npu = load_hardware_model(configs / "hw_npu_core.json");
  CHECK(npu.cube_rate == 1e12);
  CHECK(npu.sync_latency == 3.5e-6);
  CHECK(npu.l1_capacity == (1 << 20));
  const HardwareModel cluster = load_hardware_model(configs / "hw_cluster.json");
  CHECK(cluster.interconnect_bw == 7e9);
  CHECK(cluster.interconnect_latency == 0.0);
  const HardwareModel gpu = load_hardware_model(configs / "hw_v100ish.json");
  CHECK(gpu.pcie_bw == 1.2e10);

  const fs::path bad = fs::temp_directory_path() / "attnkit_bad_hw.json";
  io::write_file_atomic(bad, "{\"schema_version\":1,\"cube_rate_flops\":1e12,\"typo\":3}\n");
  CHECK_THROWS_AS(load_hardware_model(bad), std::invalid_argument);
  fs::remove(bad);
}

TEST_CASE("timeline validator rejects corrupted traces") {
  HardwareModel hw = test_hw();
  AttnShape shape{1, 256, 1, 32};
  Timeline tl = simulate_unified(shape, 64, 64, hw);
  tl.validate();
  Timeline broken = tl;
  broken.events[1].start = broken.events[1].end + 1.0;
  CHECK_THROWS_AS(broken.validate(), std::logic_error);
  broken = tl;
  broken.events.push_back(broken.events[0]);  // duplicate occupancy at t=0
  CHECK_THROWS_AS(broken.validate(), std::logic_error);
}
