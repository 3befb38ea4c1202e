"""Training objectives and the seeded training loop.

The objective is beta * loss(M(x), y) + lambda * loss(M(x_aug), y) over
(raw, augmented, label) triples; beta=0, lambda=1 reduces it to training on
augmented inputs only, and the raw forward pass is skipped in that case so
the reduction is exact in both semantics and cost. Per-iteration random
crops use one offset per sample, applied identically to x, x_aug and y.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from samaug.models import MODEL_REGISTRY, TorchSegModel, build_model

LOSS_KINDS = ("spatial-cross-entropy", "dice")
DICE_EPS = 1e-6


@dataclass(frozen=True)
class TrainConfig:
    """Training recipe. Defaults follow the standard recipe (batch size 8,
    256x256 crops, Adam at 5e-4, constant learning rate); total_iters
    defaults to a desk-scale value rather than a full-scale run."""

    beta: float = 1.0
    lam: float = 1.0
    loss_kind: str = "spatial-cross-entropy"
    batch_size: int = 8
    crop_size: int = 256
    lr: float = 5e-4
    total_iters: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.beta < 0 or self.lam < 0:
            raise ValueError("beta and lambda must be >= 0")
        if self.beta + self.lam <= 0:
            raise ValueError("beta + lambda must be > 0")
        if self.loss_kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.loss_kind!r}; known: {LOSS_KINDS}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.crop_size < 1:
            raise ValueError("crop_size must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.total_iters < 0:
            raise ValueError("total_iters must be >= 0")


@dataclass(frozen=True)
class TrainSample:
    """One training triple: raw presentation, augmented image, one-hot label.

    raw and aug are (H, W, 3) floats in [0, 1]; onehot is (H, W, C).
    """

    raw: np.ndarray
    aug: np.ndarray
    onehot: np.ndarray

    def __post_init__(self):
        if self.raw.ndim != 3 or self.raw.shape[2] != 3:
            raise ValueError(f"raw must be (H, W, 3), got {self.raw.shape}")
        if self.aug.shape != self.raw.shape:
            raise ValueError(f"aug shape {self.aug.shape} != raw shape {self.raw.shape}")
        if self.onehot.ndim != 3 or self.onehot.shape[:2] != self.raw.shape[:2]:
            raise ValueError(
                f"onehot shape {self.onehot.shape} does not match image "
                f"shape {self.raw.shape[:2]}"
            )


def _as_batch(t: torch.Tensor) -> torch.Tensor:
    if t.dim() == 3:
        return t.unsqueeze(0)
    if t.dim() == 4:
        return t
    raise ValueError(f"expected (C, H, W) or (N, C, H, W), got {tuple(t.shape)}")


def _check_pair(logits: torch.Tensor, target: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    logits = _as_batch(logits)
    target = _as_batch(target)
    if logits.shape != target.shape:
        raise ValueError(f"logits shape {tuple(logits.shape)} != target shape {tuple(target.shape)}")
    return logits, target


def spatial_ce_loss(logits: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean over pixels of -log softmax-probability of the true class.

    logits and target are (C, H, W) or (N, C, H, W); target is one-hot.
    """
    logits, target = _check_pair(logits, target)
    logp = torch.log_softmax(logits, dim=1)
    return -(target * logp).sum(dim=1).mean()


def dice_loss(logits: torch.Tensor, target: torch.Tensor, eps: float = DICE_EPS) -> torch.Tensor:
    """1 - mean over foreground classes of (2*sum(p*y)+eps)/(sum p + sum y + eps).

    p is the softmax probability; channel 0 is background and excluded.
    Sums run over the batch and all pixels.
    """
    logits, target = _check_pair(logits, target)
    if logits.shape[1] < 2:
        raise ValueError("dice loss needs at least 2 channels (background + foreground)")
    probs = torch.softmax(logits, dim=1)
    p = probs[:, 1:]
    t = target[:, 1:]
    num = 2.0 * (p * t).sum(dim=(0, 2, 3)) + eps
    den = p.sum(dim=(0, 2, 3)) + t.sum(dim=(0, 2, 3)) + eps
    return 1.0 - (num / den).mean()


_LOSS_FNS = {"spatial-cross-entropy": spatial_ce_loss, "dice": dice_loss}


def objective(model, x: torch.Tensor | None, x_aug: torch.Tensor | None,
              y: torch.Tensor, cfg: TrainConfig) -> torch.Tensor:
    """beta * loss(M(x), y) + lambda * loss(M(x_aug), y).

    A zero-weighted term is skipped entirely, including its forward pass, so
    beta=0, lambda=1 has exactly the semantics and cost of augmented-only
    training. x (or x_aug) may be None when its weight is zero.
    """
    loss_fn = _LOSS_FNS[cfg.loss_kind]
    net = model.net if isinstance(model, TorchSegModel) else model
    total = None
    if cfg.beta != 0.0:
        if x is None:
            raise ValueError("beta != 0 but no raw input was provided")
        term = cfg.beta * loss_fn(net(x), y)
        total = term
    if cfg.lam != 0.0:
        if x_aug is None:
            raise ValueError("lambda != 0 but no augmented input was provided")
        term = cfg.lam * loss_fn(net(x_aug), y)
        total = term if total is None else total + term
    return total


def crop_arrays(arrays: Sequence[np.ndarray], size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Crop a size x size window at one random offset from every array.

    All arrays must share leading spatial dimensions (H, W); the same offset
    is used for each, so marked pixels stay aligned across the crops.
    """
    h, w = arrays[0].shape[:2]
    for a in arrays:
        if a.shape[:2] != (h, w):
            raise ValueError("arrays passed to crop_arrays must share spatial shape")
    if size > h or size > w:
        raise ValueError(f"crop size {size} exceeds image size {h}x{w}")
    top = int(rng.integers(0, h - size + 1))
    left = int(rng.integers(0, w - size + 1))
    return [a[top:top + size, left:left + size] for a in arrays]


def train(model: TorchSegModel, samples: Sequence[TrainSample], cfg: TrainConfig) -> np.ndarray:
    """Run cfg.total_iters Adam steps of batched objective minimization.

    Each iteration draws batch_size samples with replacement and one random
    crop per sample (identical offset across raw, augmented and label
    arrays). Deterministic given cfg.seed. Returns the loss history, one
    value per iteration. Aborts with RuntimeError on a non-finite loss.
    """
    if not samples:
        raise ValueError("training requires a non-empty dataset")
    if model.num_classes < 2:
        raise ValueError("training requires a softmax model with >= 2 classes")
    for i, s in enumerate(samples):
        h, w = s.raw.shape[:2]
        if cfg.crop_size > h or cfg.crop_size > w:
            raise ValueError(
                f"crop_size {cfg.crop_size} exceeds sample {i} size {h}x{w}; "
                "no padding policy is applied"
            )
        if s.onehot.shape[2] != model.num_classes:
            raise ValueError(
                f"sample {i} has {s.onehot.shape[2]} label channels, "
                f"model expects {model.num_classes}"
            )

    rng = np.random.default_rng(cfg.seed)
    opt = torch.optim.Adam(model.net.parameters(), lr=cfg.lr)
    history = np.empty(cfg.total_iters, dtype=np.float64)
    need_raw = cfg.beta != 0.0
    need_aug = cfg.lam != 0.0
    model.net.train()

    for it in range(cfg.total_iters):
        idx = rng.integers(0, len(samples), size=cfg.batch_size)
        raws, augs, labels = [], [], []
        for j in idx:
            s = samples[j]
            raw_c, aug_c, y_c = crop_arrays((s.raw, s.aug, s.onehot), cfg.crop_size, rng)
            raws.append(raw_c)
            augs.append(aug_c)
            labels.append(y_c)
        x = _to_batch(raws) if need_raw else None
        x_aug = _to_batch(augs) if need_aug else None
        y = _to_batch(labels)
        loss = objective(model, x, x_aug, y, cfg)
        if not torch.isfinite(loss):
            raise RuntimeError(
                f"non-finite loss {loss.item()} at iteration {it}; aborting "
                "(check learning rate and input ranges)"
            )
        opt.zero_grad()
        loss.backward()
        opt.step()
        history[it] = loss.item()
    model.net.eval()
    return history


def _to_batch(arrays: list[np.ndarray]) -> torch.Tensor:
    stacked = np.stack(arrays).astype(np.float32)
    return torch.from_numpy(stacked).permute(0, 3, 1, 2).contiguous()


def save_checkpoint(path, model: TorchSegModel, cfg: TrainConfig, iteration: int) -> None:
    """Serialize model parameters, architecture, training config and step count."""
    torch.save(
        {
            "arch": model.arch,
            "arch_kwargs": model.arch_kwargs,
            "num_classes": model.num_classes,
            "head": model.head,
            "state_dict": model.net.state_dict(),
            "train_config": asdict(cfg),
            "iteration": int(iteration),
        },
        path,
    )


def load_checkpoint(path) -> tuple[TorchSegModel, TrainConfig, int]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if payload["arch"] not in MODEL_REGISTRY:
        raise ValueError(f"checkpoint references unknown architecture {payload['arch']!r}")
    model = build_model(arch=payload["arch"], num_classes=payload["num_classes"],
                        head=payload["head"], **payload["arch_kwargs"])
    model.net.load_state_dict(payload["state_dict"])
    model.net.eval()
    return model, TrainConfig(**payload["train_config"]), payload["iteration"]


def write_loss_csv(path, history: np.ndarray) -> None:
    """Export the loss history as `iter,loss` rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "loss"])
        for i, v in enumerate(history):
            writer.writerow([i, repr(float(v))])


def read_loss_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return np.array([float(r[1]) for r in rows[1:]], dtype=np.float64)
