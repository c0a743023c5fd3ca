#include <doctest.h>

#include <cmath>
#include <limits>

#include "attnkit/attention_ref.hpp"
#include "attnkit/comm.hpp"

using namespace attnkit;

namespace {

HardwareModel comm_hw() {
  HardwareModel hw;
  hw.cube_rate = 5e13;
  hw.interconnect_bw = 1.7e10;
  hw.interconnect_latency = 5e-6;
  return hw;
}

TensorD unsharded_oracle(const TensorD& q, const TensorD& k, const TensorD& v,
                         const TensorD& w_o) {
  const std::int64_t b = q.extent(0), s = q.extent(1), n = q.extent(2), d = q.extent(3);
  const TensorD attn = std_attention(q, k, v, false).reshaped({b * s, n * d});
  return matmul(attn, w_o);
}

}  // namespace

TEST_CASE("single device matches the unsharded computation bitwise") {
  const TensorD q = TensorD::random_uniform({1, 6, 4, 8}, 1);
  const TensorD k = TensorD::random_uniform({1, 6, 4, 8}, 2);
  const TensorD v = TensorD::random_uniform({1, 6, 4, 8}, 3);
  const TensorD w_o = TensorD::random_uniform({32, 32}, 4);
  CHECK(bitwise_equal(tp_attention_linear(q, k, v, w_o, 1),
                      unsharded_oracle(q, k, v, w_o)));
}

TEST_CASE("sharded attention+linear matches the unsharded oracle") {
  const TensorD q = TensorD::random_uniform({2, 5, 4, 8}, 11);
  const TensorD k = TensorD::random_uniform({2, 5, 4, 8}, 12);
  const TensorD v = TensorD::random_uniform({2, 5, 4, 8}, 13);
  const TensorD w_o = TensorD::random_uniform({32, 32}, 14);
  for (int devices : {2, 4})
    CHECK(max_abs_diff(tp_attention_linear(q, k, v, w_o, devices),
                       unsharded_oracle(q, k, v, w_o)) <= 1e-12);
  CHECK_THROWS_AS(tp_attention_linear(q, k, v, w_o, 3), ShapeError);
}

TEST_CASE("zero output projection yields a zero result for any sharding") {
  const TensorD q = TensorD::random_uniform({1, 4, 2, 4}, 21);
  const TensorD k = TensorD::random_uniform({1, 4, 2, 4}, 22);
  const TensorD v = TensorD::random_uniform({1, 4, 2, 4}, 23);
  const TensorD w_o({8, 8});
  const TensorD out = tp_attention_linear(q, k, v, w_o, 2);
  CHECK(max_abs_diff(out, TensorD({4, 8})) == 0.0);
}

TEST_CASE("tiled allreduce is bitwise equal to the monolithic reduction") {
  const TensorD q = TensorD::random_uniform({1, 12, 4, 8}, 31);
  const TensorD k = TensorD::random_uniform({1, 12, 4, 8}, 32);
  const TensorD v = TensorD::random_uniform({1, 12, 4, 8}, 33);
  const TensorD w_o = TensorD::random_uniform({32, 32}, 34);
  const auto partials = tp_partial_outputs(q, k, v, w_o, 4);

  const HardwareModel hw = comm_hw();
  ClusterConfig cluster;
  cluster.devices = 4;
  cluster.block_rows = {2, 5, 5};
  const AllReduceRun tiled = tiled_allreduce(partials, cluster, hw, 1000);
  const AllReduceRun mono = monolithic_allreduce(partials, 4, hw, 1000);
  CHECK(bitwise_equal(tiled.result, mono.result));
  tiled.timeline.validate();
  mono.timeline.validate();

  ClusterConfig bad = cluster;
  bad.block_rows = {};
  CHECK_THROWS_AS(tiled_allreduce(partials, bad, hw, 1000), std::invalid_argument);
  bad.block_rows = {5, 2, 5};
  CHECK_THROWS_AS(tiled_allreduce(partials, bad, hw, 1000), std::invalid_argument);
}

TEST_CASE("single block pays compute plus the whole allreduce") {
  const HardwareModel hw = comm_hw();
  const std::int64_t rows = 64, flops_per_row = 1 << 20, bytes_per_row = 8192;
  const Timeline tiled =
      tiled_allreduce_timeline(std::vector<std::int64_t>{rows}, flops_per_row,
                               bytes_per_row, 8, hw);
  const Timeline mono =
      monolithic_allreduce_timeline(rows, flops_per_row, bytes_per_row, 8, hw);
  CHECK(tiled.makespan() == mono.makespan());
}

TEST_CASE("comm hides under compute except for one block") {
  HardwareModel hw = comm_hw();
  hw.interconnect_latency = 0.0;
  const std::int64_t flops_per_row = 1 << 23;  // compute-heavy
  const std::int64_t bytes_per_row = 1024;
  const std::vector<std::int64_t> blocks(8, 64);
  const Timeline tl = tiled_allreduce_timeline(blocks, flops_per_row, bytes_per_row, 8, hw);
  const double compute_total = 8.0 * 64 * flops_per_row / hw.cube_rate;
  const double comm_block = ring_allreduce_seconds(64 * bytes_per_row, 8, hw);
  CHECK(comm_block <= 64.0 * flops_per_row / hw.cube_rate);
  CHECK(tl.makespan() == doctest::Approx(compute_total + comm_block).epsilon(1e-12));
}

TEST_CASE("infinite bandwidth gives exactly speedup one") {
  HardwareModel hw = comm_hw();
  hw.interconnect_bw = std::numeric_limits<double>::infinity();
  const std::int64_t seqs[] = {2048, 8192, 32768};
  const auto rows = compare_allreduce(seqs, 1, 32, 128, 8, 8, hw);
  for (const auto& row : rows) CHECK(row.speedup == 1.0);
}

TEST_CASE("compute-free speedup is capped by the comm pipeline") {
  HardwareModel hw = comm_hw();
  hw.cube_rate = std::numeric_limits<double>::infinity();
  const std::vector<std::int64_t> blocks(4, 256);
  const std::int64_t bytes_per_row = 8192;
  const Timeline tiled = tiled_allreduce_timeline(blocks, 0, bytes_per_row, 8, hw);
  const Timeline mono = monolithic_allreduce_timeline(1024, 0, bytes_per_row, 8, hw);
  // With free compute the tiled path serializes the per-block collectives.
  double expect = 0.0;
  for (auto b : blocks) expect += ring_allreduce_seconds(b * bytes_per_row, 8, hw);
  CHECK(tiled.makespan() == doctest::Approx(expect).epsilon(1e-12));
  CHECK(mono.makespan() / tiled.makespan() <= 1.0);
}

TEST_CASE("choose_block_rows splits") {
  HardwareModel hw = comm_hw();

  CHECK(choose_block_rows(100, 1, 1000, 10, 8, hw) == std::vector<std::int64_t>{100});
  CHECK_THROWS_AS(choose_block_rows(3, 4, 1000, 10, 8, hw), std::invalid_argument);

  // Symmetric per-row compute and comm costs: the even split solves the
  // balance equation.
  HardwareModel sym = hw;
  sym.interconnect_latency = 0.0;
  sym.cube_rate = 1e9;
  sym.interconnect_bw = 2e9;  // ring factor 2*(7/8)*1000/2e9 == 875/1e9
  const auto even = choose_block_rows(800, 8, 875, 1000, 8, sym);
  CHECK(even == std::vector<std::int64_t>(8, 100));

  // Comm-heavy: first block strictly smaller, and never worse than even.
  HardwareModel heavy = hw;
  heavy.interconnect_bw = 1e8;
  const auto skewed = choose_block_rows(800, 8, 1 << 16, 4096, 8, heavy);
  CHECK(skewed[0] < skewed[1]);
  std::int64_t total = 0;
  for (auto r : skewed) total += r;
  CHECK(total == 800);
  const Timeline emitted = tiled_allreduce_timeline(skewed, 1 << 16, 4096, 8, heavy);
  const Timeline even_tl = tiled_allreduce_timeline(std::vector<std::int64_t>(8, 100),
                                                    1 << 16, 4096, 8, heavy);
  CHECK(emitted.makespan() <= even_tl.makespan());
}

TEST_CASE("link events never overlap and start after their block's compute") {
  HardwareModel hw = comm_hw();
  const auto blocks = choose_block_rows(1024, 8, 1 << 18, 8192, 8, hw);
  const Timeline tl = tiled_allreduce_timeline(blocks, 1 << 18, 8192, 8, hw);
  tl.validate();
  int comm_seen = 0;
  for (std::size_t i = 0; i < tl.events.size(); ++i) {
    const auto& e = tl.events[i];
    if (e.resource != Resource::Link) continue;
    ++comm_seen;
    REQUIRE(!e.deps.empty());
    CHECK(tl.events[e.deps[0]].resource == Resource::Cube);
    CHECK(tl.events[e.deps[0]].end <= e.start);
  }
  CHECK(comm_seen == 8);
}
