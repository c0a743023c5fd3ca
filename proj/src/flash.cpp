#include "attnkit/flash.hpp"

namespace attnkit {

SkipStats skip_stats(std::int64_t s, const TileConfig& cfg) {
  cfg.validate();
  if (s < 1) throw std::invalid_argument("skip_stats: S must be >= 1");
  const std::int64_t nq = (s + cfg.b_q - 1) / cfg.b_q;
  const std::int64_t nk = (s + cfg.b_kv2 - 1) / cfg.b_kv2;
  SkipStats stats;
  if (!cfg.causal) {
    stats.full = nq * nk;
    return stats;
  }
  for (std::int64_t i = 0; i < nq; ++i) {
    for (std::int64_t j = 0; j < nk; ++j) {
      switch (classify_block(i, j, cfg.b_q, cfg.b_kv2, s).kind) {
        case BlockKind::Empty: ++stats.empty; break;
        case BlockKind::Full: ++stats.full; break;
        case BlockKind::Partial: ++stats.partial; break;
      }
    }
  }
  return stats;
}

}  // namespace attnkit
