"""Separable NES with distributed semi-updates and hybrid sparse-mask training."""

from ._core import (
    CategoricalDist,
    GaussianSearchDist,
    MaskDist,
    SparsitySchedule,
    default_learning_rates,
    draw,
    draw_k_sorted,
    eval_benchmark,
    expand_block_mask,
    mask_gradient,
    retained_count,
    run_from_json,
    sample_mask,
    sample_params,
    sample_z,
    shape_utilities,
    snes_optimize,
    softmax_probs,
    test_time_mask,
)

__all__ = [
    "CategoricalDist",
    "GaussianSearchDist",
    "MaskDist",
    "SparsitySchedule",
    "default_learning_rates",
    "draw",
    "draw_k_sorted",
    "eval_benchmark",
    "expand_block_mask",
    "mask_gradient",
    "retained_count",
    "run_from_json",
    "sample_mask",
    "sample_params",
    "sample_z",
    "shape_utilities",
    "snes_optimize",
    "softmax_probs",
    "test_time_mask",
]
