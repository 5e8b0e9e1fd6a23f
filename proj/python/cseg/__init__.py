"""Numpy-facing bindings for the constrained segmentation core.

Masks are 2D uint8 arrays (any nonzero value counts as foreground),
probability maps and images are 2D float64 arrays in [0, 1].
"""

from ._core import (
    all_ones,
    auroc,
    close,
    constrained_loss,
    constraint_penalty,
    coverage_rate,
    dice_loss,
    dilate,
    dsc,
    erode,
    fuse,
    hausdorff,
    iou,
    lesion_phantoms,
    lung_phantoms,
    lung_plus_space,
    make_label,
    threshold,
    top_k_components,
    true_lung_plus,
)

__all__ = [
    "all_ones",
    "auroc",
    "close",
    "constrained_loss",
    "constraint_penalty",
    "coverage_rate",
    "dice_loss",
    "dilate",
    "dsc",
    "erode",
    "fuse",
    "hausdorff",
    "iou",
    "lesion_phantoms",
    "lung_phantoms",
    "lung_plus_space",
    "make_label",
    "threshold",
    "top_k_components",
    "true_lung_plus",
]
