"""Fusing prior maps into 3-channel model inputs.

All images are normalized to [0, 1] at ingestion, so priors (already in
[0, 1]) and image channels are commensurate. For RGB inputs the segmentation
prior is added to the second channel and the boundary prior to the third,
clipping to [0, 1]; the first channel is never touched. For gray inputs the
output channels are (gray, segmentation prior, boundary prior).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from samaug.priors import PriorMap, zero_priors

COLORSPACES = ("gray", "rgb")


@dataclass(frozen=True)
class RawImage:
    """Ingested image: (H, W) gray or (H, W, 3) rgb, values in [0, 1]."""

    pixels: np.ndarray
    colorspace: str

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=np.float64)
        object.__setattr__(self, "pixels", pixels)
        if self.colorspace not in COLORSPACES:
            raise ValueError(f"unknown colorspace {self.colorspace!r}")
        if self.colorspace == "gray" and pixels.ndim != 2:
            raise ValueError(f"gray image must be 2-D, got shape {pixels.shape}")
        if self.colorspace == "rgb" and (pixels.ndim != 3 or pixels.shape[2] != 3):
            raise ValueError(f"rgb image must be (H, W, 3), got shape {pixels.shape}")
        if pixels.size and (pixels.min() < 0.0 or pixels.max() > 1.0):
            raise ValueError("image values outside [0, 1]")

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape[:2]


@dataclass(frozen=True)
class AugmentedImage:
    """3-channel fused image, values in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=np.float64)
        object.__setattr__(self, "pixels", pixels)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise ValueError(f"augmented image must be (H, W, 3), got {pixels.shape}")
        if pixels.size and (pixels.min() < 0.0 or pixels.max() > 1.0):
            raise ValueError("augmented image values outside [0, 1]")


def augment(x: RawImage, seg: PriorMap, bnd: PriorMap) -> AugmentedImage:
    """Fuse the two prior maps into the raw image.

    Deterministic and pure; with all-zero priors this is the identity on rgb
    inputs and (gray, 0, 0) stacking on gray inputs.
    """
    if seg.kind != "segmentation":
        raise ValueError(f"first prior must be the segmentation prior, got {seg.kind!r}")
    if bnd.kind != "boundary":
        raise ValueError(f"second prior must be the boundary prior, got {bnd.kind!r}")
    if seg.values.shape != x.shape or bnd.values.shape != x.shape:
        raise ValueError(
            f"prior shapes {seg.values.shape}/{bnd.values.shape} "
            f"do not match image shape {x.shape}"
        )
    if x.colorspace == "gray":
        out = np.stack([x.pixels, seg.values, bnd.values], axis=-1)
    else:
        out = np.stack(
            [
                x.pixels[:, :, 0],
                np.clip(x.pixels[:, :, 1] + seg.values, 0.0, 1.0),
                np.clip(x.pixels[:, :, 2] + bnd.values, 0.0, 1.0),
            ],
            axis=-1,
        )
    return AugmentedImage(pixels=out)


def model_input(x: RawImage) -> np.ndarray:
    """3-channel presentation of a raw image: augmentation with zero priors.

    For rgb this is the image itself; for gray it is (gray, 0, 0). Models
    always consume this 3-channel form.
    """
    h, w = x.shape
    seg, bnd = zero_priors(width=w, height=h)
    return augment(x, seg, bnd).pixels
