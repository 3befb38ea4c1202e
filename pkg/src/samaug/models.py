"""Segmentation model interface and the bundled reference U-Net.

Models map a 3-channel image to a per-class logit map of the same spatial
size. The interface is pluggable: anything satisfying SegModel can be
trained and deployed; the bundled TinyUNet is a small reference network, not
a reproduction of any published architecture.
"""

from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np
import torch
from torch import nn

HEADS = ("softmax", "sigmoid")


class SegModel(ABC):
    """Pluggable segmentation model.

    Attributes:
        num_classes: number of output channels C (>= 2 for softmax heads,
            1 for single-foreground-channel sigmoid heads).
        head: output activation family, "softmax" or "sigmoid".
    """

    num_classes: int
    head: str = "softmax"

    @abstractmethod
    def logits(self, image: np.ndarray) -> np.ndarray:
        """Map an (H, W, 3) image in [0, 1] to an (H, W, C) logit map."""


class TorchSegModel(SegModel):
    """SegModel wrapper around a torch module taking (N, 3, H, W) tensors."""

    def __init__(self, net: nn.Module, num_classes: int, head: str = "softmax",
                 arch: str = "custom", arch_kwargs: dict | None = None):
        if head not in HEADS:
            raise ValueError(f"unknown head {head!r}")
        self.net = net
        self.num_classes = int(num_classes)
        self.head = head
        self.arch = arch
        self.arch_kwargs = dict(arch_kwargs or {})

    def logits(self, image: np.ndarray) -> np.ndarray:
        image = np.asarray(image, dtype=np.float32)
        if image.ndim != 3 or image.shape[2] != 3:
            raise ValueError(f"model input must be (H, W, 3), got {image.shape}")
        x = torch.from_numpy(np.ascontiguousarray(image)).permute(2, 0, 1)[None]
        was_training = self.net.training
        self.net.eval()
        with torch.no_grad():
            out = self.net(x)[0]
        if was_training:
            self.net.train()
        return out.permute(1, 2, 0).numpy().astype(np.float64)


class _ConvBlock(nn.Module):
    def __init__(self, cin: int, cout: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(cin, cout, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(cout, cout, 3, padding=1),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        return self.net(x)


class TinyUNet(nn.Module):
    """Two-level U-Net; input spatial size must be a multiple of 4."""

    def __init__(self, num_classes: int = 2, base_channels: int = 8, in_channels: int = 3):
        super().__init__()
        b = base_channels
        self.enc1 = _ConvBlock(in_channels, b)
        self.enc2 = _ConvBlock(b, 2 * b)
        self.pool = nn.MaxPool2d(2)
        self.mid = _ConvBlock(2 * b, 4 * b)
        self.up2 = nn.ConvTranspose2d(4 * b, 2 * b, 2, stride=2)
        self.dec2 = _ConvBlock(4 * b, 2 * b)
        self.up1 = nn.ConvTranspose2d(2 * b, b, 2, stride=2)
        self.dec1 = _ConvBlock(2 * b, b)
        self.head = nn.Conv2d(b, num_classes, 1)

    def forward(self, x):
        h, w = x.shape[-2:]
        if h % 4 or w % 4:
            raise ValueError(f"input spatial size {h}x{w} must be a multiple of 4")
        e1 = self.enc1(x)
        e2 = self.enc2(self.pool(e1))
        m = self.mid(self.pool(e2))
        d2 = self.dec2(torch.cat([self.up2(m), e2], dim=1))
        d1 = self.dec1(torch.cat([self.up1(d2), e1], dim=1))
        return self.head(d1)


MODEL_REGISTRY = {"tiny_unet": TinyUNet}


def build_model(arch: str = "tiny_unet", num_classes: int = 2, head: str = "softmax",
                seed: int = 0, **arch_kwargs) -> TorchSegModel:
    """Construct a registered architecture with seeded initialization."""
    if arch not in MODEL_REGISTRY:
        raise ValueError(f"unknown architecture {arch!r}; known: {sorted(MODEL_REGISTRY)}")
    torch.manual_seed(seed)
    net = MODEL_REGISTRY[arch](num_classes=num_classes, **arch_kwargs)
    return TorchSegModel(net, num_classes=num_classes, head=head,
                         arch=arch, arch_kwargs=arch_kwargs)
