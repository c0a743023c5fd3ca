"""Tiled attention kernels, masks and accelerator cost models."""

from attnkit._core import (
    build_mmask,
    check_b2b_compat,
    choose_block_rows,
    classify_block,
    compare_allreduce,
    compare_tilings,
    cpu_decode_attention,
    decode_latency_compare,
    extract_bmask,
    flash_attention,
    fragment_owners,
    layout_eval,
    mask_memory_bytes,
    plan,
    prefill_layer,
    simulate_two_level,
    simulate_unified,
    skip_stats,
    std_attention,
    tp_attention_linear,
)

__all__ = [
    "build_mmask",
    "check_b2b_compat",
    "choose_block_rows",
    "classify_block",
    "compare_allreduce",
    "compare_tilings",
    "cpu_decode_attention",
    "decode_latency_compare",
    "extract_bmask",
    "flash_attention",
    "fragment_owners",
    "layout_eval",
    "mask_memory_bytes",
    "plan",
    "prefill_layer",
    "simulate_two_level",
    "simulate_unified",
    "skip_stats",
    "std_attention",
    "tp_attention_linear",
]

__version__ = "0.1.0"
