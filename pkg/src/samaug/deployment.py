"""Inference strategies over raw and augmented inputs.

Three strategies: run the model on the augmented input alone; sum the logits
of the raw and augmented forward passes before the output activation; or run
both and keep the prediction whose mean per-pixel entropy is lower (lower
entropy means a more certain prediction). All strategies return normalized
probability maps.
"""

from __future__ import annotations

import numpy as np

from samaug.fusion import AugmentedImage, RawImage, model_input
from samaug.models import SegModel

STRATEGIES = ("aug-only", "ensemble", "entropy-select")

# probability maps are normalized to ~1e-7 by construction; the check is looser
PROB_ATOL = 1e-5


def _image3(x) -> np.ndarray:
    """Accept RawImage, AugmentedImage or a plain (H, W, 3) array."""
    if isinstance(x, RawImage):
        return model_input(x)
    if isinstance(x, AugmentedImage):
        return x.pixels
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(
            f"model input must be (H, W, 3), got {arr.shape}; "
            "wrap gray images in RawImage"
        )
    return arr


def softmax_probs(logits: np.ndarray) -> np.ndarray:
    """Numerically stable per-pixel softmax over the last axis."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def activate(logits: np.ndarray, head: str) -> np.ndarray:
    """Output activation: softmax over C channels, or sigmoid for a
    single-foreground-channel head expanded to (background, foreground) so
    every probability map sums to 1 per pixel."""
    logits = np.asarray(logits, dtype=np.float64)
    if head == "softmax":
        if logits.shape[-1] < 2:
            raise ValueError("softmax head needs >= 2 channels")
        return softmax_probs(logits)
    if head == "sigmoid":
        if logits.shape[-1] != 1:
            raise ValueError("sigmoid head expects a single foreground channel")
        fg = 1.0 / (1.0 + np.exp(-logits[..., 0]))
        return np.stack([1.0 - fg, fg], axis=-1)
    raise ValueError(f"unknown head {head!r}")


def infer_aug_only(model: SegModel, x_aug) -> np.ndarray:
    """Activation of the model output on the augmented input alone.

    Meant for models trained exclusively on augmented inputs; whether that
    convention holds is the caller's responsibility.
    """
    return activate(model.logits(_image3(x_aug)), model.head)


def infer_ensemble(model: SegModel, x, x_aug) -> np.ndarray:
    """Activation of the summed logits of the raw and augmented passes.

    The logits are summed before the activation (not averaged after), so the
    result is symmetric in argument order.
    """
    a = model.logits(_image3(x))
    b = model.logits(_image3(x_aug))
    if a.shape != b.shape:
        raise ValueError(f"logit shapes differ: {a.shape} vs {b.shape}")
    return activate(a + b, model.head)


def mean_entropy(p: np.ndarray, atol: float = PROB_ATOL) -> float:
    """Mean over pixels of the Shannon entropy -sum_c p_c ln p_c (0 ln 0 = 0)."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 3:
        raise ValueError(f"probability map must be (H, W, C), got {p.shape}")
    sums = p.sum(axis=-1)
    if np.abs(sums - 1.0).max() > atol:
        raise ValueError(
            f"probability map not normalized: max |sum - 1| = {np.abs(sums - 1.0).max():.3g}"
        )
    logp = np.zeros_like(p)
    np.log(p, out=logp, where=p > 0.0)
    return float(-(p * logp).sum(axis=-1).mean())


def infer_entropy_select(model: SegModel, x, x_aug) -> tuple[np.ndarray, str]:
    """Run both inputs and keep the prediction with lower mean entropy.

    Returns (probability map, "raw" | "aug"). Ties go to the augmented
    input, which is the method's default preference.
    """
    p_raw = activate(model.logits(_image3(x)), model.head)
    p_aug = activate(model.logits(_image3(x_aug)), model.head)
    if mean_entropy(p_raw) < mean_entropy(p_aug):
        return p_raw, "raw"
    return p_aug, "aug"


def foreground_mask(p: np.ndarray) -> np.ndarray:
    """Binary foreground from a probability map: argmax equals class 1.

    Class 1 is the region-of-interest channel; in three-class setups the
    boundary class (2) is excluded from the foreground, which lets touching
    instances separate.
    """
    p = np.asarray(p)
    if p.ndim != 3:
        raise ValueError(f"probability map must be (H, W, C), got {p.shape}")
    return p.argmax(axis=-1) == 1
