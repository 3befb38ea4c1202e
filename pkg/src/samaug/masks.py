"""Instance mask sets: the file contract for externally produced masks.

A mask set holds every instance proposal for one image together with the
proposal's stability score. Sets are serialized as JSON with uncompressed
COCO-style run-length encoding (column-major counts, background run first)
so they interoperate with the usual instance-mask tooling. A seeded
synthetic generator turns a ground-truth instance map into a mask set, which
stands in for the external mask producer at desk scale.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

MASK_SOURCES = ("external-sam", "synthetic")


class MaskFormatError(ValueError):
    """A mask-set file violates the serialization contract."""


@dataclass(frozen=True)
class InstanceMask:
    """One binary instance proposal with its confidence score in [0, 1]."""

    bitmap: np.ndarray
    stability: float

    def __post_init__(self):
        bitmap = np.asarray(self.bitmap, dtype=bool)
        object.__setattr__(self, "bitmap", bitmap)
        object.__setattr__(self, "stability", float(self.stability))
        if bitmap.ndim != 2:
            raise ValueError(f"mask bitmap must be 2-D, got shape {bitmap.shape}")
        if not bitmap.any():
            raise ValueError("mask bitmap has no foreground pixels")
        if not 0.0 <= self.stability <= 1.0:
            raise ValueError(f"stability {self.stability} outside [0, 1]")


@dataclass(frozen=True)
class MaskSet:
    """All instance proposals for one image, in file order.

    The list may be empty (the producer found nothing). Every bitmap must
    have shape (height, width).
    """

    width: int
    height: int
    masks: tuple[InstanceMask, ...] = ()
    source: str = "external-sam"

    def __post_init__(self):
        object.__setattr__(self, "masks", tuple(self.masks))
        if self.width < 1 or self.height < 1:
            raise ValueError(f"invalid mask-set size {self.width}x{self.height}")
        if self.source not in MASK_SOURCES:
            raise ValueError(f"unknown mask source {self.source!r}")
        for i, m in enumerate(self.masks):
            if m.bitmap.shape != (self.height, self.width):
                raise ValueError(
                    f"mask {i} has shape {m.bitmap.shape}, "
                    f"expected {(self.height, self.width)}"
                )


def rle_encode(bitmap: np.ndarray) -> list[int]:
    """Encode a binary (H, W) bitmap as column-major alternating run counts.

    Counts start with the background run (0 if the first pixel is
    foreground) and sum to H*W.
    """
    flat = np.asarray(bitmap, dtype=bool).ravel(order="F")
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    counts = [int(c) for c in np.diff(bounds)]
    if flat[0]:
        counts.insert(0, 0)
    return counts


def rle_decode(counts: list[int], width: int, height: int) -> np.ndarray:
    """Decode run counts back into a binary (height, width) bitmap."""
    counts = [int(c) for c in counts]
    if any(c < 0 for c in counts):
        raise MaskFormatError("negative run length in RLE counts")
    total = sum(counts)
    if total != width * height:
        raise MaskFormatError(
            f"RLE counts sum to {total}, expected width*height = {width * height}"
        )
    flat = np.zeros(total, dtype=bool)
    pos = 0
    inside = False
    for c in counts:
        if inside:
            flat[pos:pos + c] = True
        pos += c
        inside = not inside
    return flat.reshape((height, width), order="F")


def load_mask_set(path) -> MaskSet:
    """Load a `<stem>.masks.json` file, preserving mask order."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"mask-set file not found: {path}")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise MaskFormatError(f"{path}: malformed JSON ({exc})") from exc
    try:
        width = int(payload["width"])
        height = int(payload["height"])
        source = payload["source"]
        entries = payload["masks"]
    except (KeyError, TypeError, ValueError) as exc:
        raise MaskFormatError(f"{path}: missing or malformed field ({exc})") from exc
    if not isinstance(entries, list):
        raise MaskFormatError(f"{path}: 'masks' must be a list")
    masks = []
    for i, entry in enumerate(entries):
        try:
            stability = float(entry["stability"])
            counts = entry["rle"]
        except (KeyError, TypeError, ValueError) as exc:
            raise MaskFormatError(f"{path}: mask {i} malformed ({exc})") from exc
        bitmap = rle_decode(counts, width, height)
        try:
            masks.append(InstanceMask(bitmap=bitmap, stability=stability))
        except ValueError as exc:
            raise MaskFormatError(f"{path}: mask {i}: {exc}") from exc
    try:
        return MaskSet(width=width, height=height, masks=tuple(masks), source=source)
    except ValueError as exc:
        raise MaskFormatError(f"{path}: {exc}") from exc


def save_mask_set(ms: MaskSet, path) -> None:
    """Write a mask set so that load_mask_set inverts it exactly."""
    payload = {
        "width": ms.width,
        "height": ms.height,
        "source": ms.source,
        "masks": [
            {"stability": m.stability, "rle": rle_encode(m.bitmap)} for m in ms.masks
        ],
    }
    Path(path).write_text(json.dumps(payload))


def synth_masks(
    gt: np.ndarray,
    dilate_px: int = 0,
    drop_prob: float = 0.0,
    stability_range: tuple[float, float] = (1.0, 1.0),
    seed: int = 0,
) -> MaskSet:
    """Turn a ground-truth instance map into a synthetic mask set.

    Each instance (nonzero label, ascending order) is independently dropped
    with probability drop_prob; survivors are dilated by dilate_px
    (4-connected structuring element) and given a stability drawn uniformly
    from stability_range. Pure function of (gt, parameters, seed).
    """
    gt = np.asarray(gt)
    if gt.ndim != 2:
        raise ValueError(f"ground-truth map must be 2-D, got shape {gt.shape}")
    if dilate_px < 0:
        raise ValueError("dilate_px must be >= 0")
    if not 0.0 <= drop_prob <= 1.0:
        raise ValueError(f"drop_prob {drop_prob} outside [0, 1]")
    lo, hi = stability_range
    if not 0.0 <= lo <= hi <= 1.0:
        raise ValueError(f"stability_range {stability_range} not ordered within [0, 1]")

    height, width = gt.shape
    rng = np.random.default_rng(seed)
    masks = []
    for label in np.unique(gt):
        if label == 0:
            continue
        dropped = rng.random() < drop_prob
        stability = rng.uniform(lo, hi)
        if dropped:
            continue
        bitmap = gt == label
        if dilate_px > 0:
            bitmap = ndimage.binary_dilation(bitmap, iterations=dilate_px)
        masks.append(InstanceMask(bitmap=bitmap, stability=stability))
    return MaskSet(width=width, height=height, masks=tuple(masks), source="synthetic")
