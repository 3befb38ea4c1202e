"""Per-image prior maps derived from an instance mask set.

Two maps per image: a segmentation prior holding, at each pixel, the highest
stability score among the masks covering it, and a binary boundary prior
holding the union of every mask's exterior boundary. "Exterior boundary"
means mask pixels with at least one 4-neighbor outside the mask or outside
the image frame, so the boundary always stays inside the mask support.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from samaug.masks import MaskSet

PRIOR_KINDS = ("segmentation", "boundary")

# 16-bit cache quantization: |round(65535*v)/65535 - v| <= 1/131070
PRIOR_SCALE = 65535


@dataclass(frozen=True)
class PriorMap:
    """Single-channel float map in [0, 1], same size as the source image."""

    values: np.ndarray
    kind: str

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 2:
            raise ValueError(f"prior map must be 2-D, got shape {values.shape}")
        if self.kind not in PRIOR_KINDS:
            raise ValueError(f"unknown prior kind {self.kind!r}")
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise ValueError("prior map values outside [0, 1]")


def build_seg_prior(ms: MaskSet) -> PriorMap:
    """Segmentation prior: per-pixel max of the stabilities of covering masks.

    The max rule is order-invariant and keeps values in [0, 1]; pixels no
    mask covers stay 0. An empty mask set yields the all-zero map.
    """
    out = np.zeros((ms.height, ms.width), dtype=np.float64)
    for m in ms.masks:
        np.maximum(out, np.where(m.bitmap, m.stability, 0.0), out=out)
    return PriorMap(values=out, kind="segmentation")


def exterior_boundary(bitmap: np.ndarray) -> np.ndarray:
    """Binary map of mask pixels 4-adjacent to background or the image edge."""
    b = np.asarray(bitmap, dtype=bool)
    if b.ndim != 2:
        raise ValueError(f"bitmap must be 2-D, got shape {b.shape}")
    padded = np.pad(b, 1, constant_values=False)
    all_n4 = (
        padded[:-2, 1:-1]
        & padded[2:, 1:-1]
        & padded[1:-1, :-2]
        & padded[1:-1, 2:]
    )
    return b & ~all_n4


def build_boundary_prior(ms: MaskSet) -> PriorMap:
    """Boundary prior: binary union of every mask's exterior boundary."""
    out = np.zeros((ms.height, ms.width), dtype=bool)
    for m in ms.masks:
        out |= exterior_boundary(m.bitmap)
    return PriorMap(values=out.astype(np.float64), kind="boundary")


def zero_priors(width: int, height: int) -> tuple[PriorMap, PriorMap]:
    """All-zero prior pair, used when no mask set is available."""
    zeros = np.zeros((height, width), dtype=np.float64)
    return (
        PriorMap(values=zeros, kind="segmentation"),
        PriorMap(values=zeros.copy(), kind="boundary"),
    )


def save_prior(pm: PriorMap, path) -> None:
    """Cache a prior map as a lossless 16-bit PNG (value = round(65535*v))."""
    quantized = np.round(pm.values * PRIOR_SCALE).astype(np.uint16)
    Image.fromarray(quantized).save(path)


def load_prior(path, kind: str) -> PriorMap:
    """Load a 16-bit PNG prior cache file back into [0, 1] floats."""
    arr = np.asarray(Image.open(path), dtype=np.float64)
    return PriorMap(values=arr / PRIOR_SCALE, kind=kind)
